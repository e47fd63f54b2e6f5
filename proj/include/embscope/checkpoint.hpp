// SPDX-License-Identifier: Apache-2.0
//
// SAE checkpoint file (little-endian):
//   "SAEC" | u32 version | u32 d | u32 n | u32 k | u64 epoch
//   | config: u32 batch_size, u32 epochs, f64 initial_lr, f64 min_lr,
//             u32 positives_per_query, f64 kld_weight, u64 seed, u32 threads
//   | f64 encoder[n*d] | f64 encoder_bias[n] | f64 decoder columns[n*d] | f64 decoder_bias[d]
//   | u8 has_optimizer
//   | (if set) per block: u64 step, f64 beta1, f64 beta2, f64 epsilon,
//                         f64 first_moment[], f64 second_moment[]
//   | u32 CRC32 of all prior bytes
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "embscope/trainer.hpp"

namespace embscope {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state, bool with_optimizer = true);
TrainState parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     bool with_optimizer = true);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Loads and checks the model shape against what the caller expects.
TrainState load_checkpoint(const std::filesystem::path& path, std::size_t expected_input_dim,
                           std::optional<std::size_t> expected_latent_dim = std::nullopt);

}  // namespace embscope
