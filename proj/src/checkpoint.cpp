// SPDX-License-Identifier: Apache-2.0
#include "embscope/checkpoint.hpp"

#include <string>

#include "embscope/binary_io.hpp"
#include "embscope/error.hpp"

namespace embscope {

namespace {
constexpr std::string_view kMagic = "SAEC";
// Upper bound on n*d accepted from a file header (guards huge allocations
// from corrupted headers before the CRC is known to be valid).
constexpr std::uint64_t kMaxWeights = 1ull << 34;
}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state, bool with_optimizer) {
  const auto& p = state.params;
  const auto& c = state.config;
  p.validate();
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(p.input_dim));
  w.u32(static_cast<std::uint32_t>(p.latent_dim));
  w.u32(static_cast<std::uint32_t>(p.k));
  w.u64(state.epoch);
  w.u32(c.batch_size);
  w.u32(c.epochs);
  w.f64(c.initial_lr);
  w.f64(c.min_lr);
  w.u32(c.positives_per_query);
  w.f64(c.kld_weight);
  w.u64(c.seed);
  w.u32(c.threads);
  for (auto block : p.blocks()) {
    for (double v : block) w.f64(v);
  }
  w.u8(with_optimizer ? 1 : 0);
  if (with_optimizer) {
    auto blocks = p.blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& s = state.optimizer[b];
      if (s.first_moment.size() != blocks[b].size() || s.second_moment.size() != blocks[b].size()) {
        throw InvalidArgument("checkpoint: optimizer state does not match parameter shapes");
      }
      w.u64(s.step_count);
      w.f64(s.beta1);
      w.f64(s.beta2);
      w.f64(s.epsilon);
      for (double v : s.first_moment) w.f64(v);
      for (double v : s.second_moment) w.f64(v);
    }
  }
  append_crc(w);
  return w.take();
}

TrainState parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader header(bytes);
  if (bytes.size() < kMagic.size() || header.raw(kMagic.size()) != kMagic) {
    throw FormatError("bad magic, not an SAE checkpoint", 0);
  }
  const auto version = header.u32();
  if (version != kCheckpointVersion) throw UnsupportedVersion(version, kCheckpointVersion, 4);

  ByteReader r(check_crc(bytes));
  r.raw(kMagic.size());
  r.u32();
  const std::uint32_t d = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint32_t k = r.u32();
  if (d == 0 || n == 0 || k == 0 || k > n) throw FormatError("invalid model shape", 8);
  if (static_cast<std::uint64_t>(n) * d > kMaxWeights) throw FormatError("model too large", 8);

  TrainState state;
  state.epoch = r.u64();
  auto& c = state.config;
  c.batch_size = r.u32();
  c.epochs = r.u32();
  c.initial_lr = r.f64();
  c.min_lr = r.f64();
  c.positives_per_query = r.u32();
  c.kld_weight = r.f64();
  c.seed = r.u64();
  c.threads = r.u32();
  c.k = k;
  c.latent_dim = n;

  // Sizes are trustworthy past the CRC check, but a short payload still
  // has to fail cleanly.
  const std::uint64_t weight_count = 2ull * n * d + n + d;
  if (r.remaining() < weight_count * 8) throw FormatError("truncated weights", r.offset());

  state.params = SaeParams(d, n, k);
  for (auto block : state.params.blocks()) {
    for (auto& v : block) v = r.f64();
  }
  try {
    state.params.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), r.offset());
  }

  const auto has_opt = r.u8();
  auto blocks = state.params.blocks();
  if (has_opt == 1) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto& s = state.optimizer[b];
      s.step_count = r.u64();
      s.beta1 = r.f64();
      s.beta2 = r.f64();
      s.epsilon = r.f64();
      s.first_moment.resize(blocks[b].size());
      s.second_moment.resize(blocks[b].size());
      for (auto& v : s.first_moment) v = r.f64();
      for (auto& v : s.second_moment) v = r.f64();
    }
  } else if (has_opt == 0) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      state.optimizer[b] = AdamState::for_size(blocks[b].size());
    }
  } else {
    throw FormatError("invalid optimizer flag", r.offset() - 1);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint", r.offset());
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     bool with_optimizer) {
  write_file_bytes(path, serialize_checkpoint(state, with_optimizer));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path));
}

TrainState load_checkpoint(const std::filesystem::path& path, std::size_t expected_input_dim,
                           std::optional<std::size_t> expected_latent_dim) {
  auto state = load_checkpoint(path);
  if (state.params.input_dim != expected_input_dim) {
    throw InvalidArgument("checkpoint input_dim " + std::to_string(state.params.input_dim) +
                          " does not match expected " + std::to_string(expected_input_dim));
  }
  if (expected_latent_dim && state.params.latent_dim != *expected_latent_dim) {
    throw InvalidArgument("checkpoint latent_dim " + std::to_string(state.params.latent_dim) +
                          " does not match expected " + std::to_string(*expected_latent_dim));
  }
  return state;
}

}  // namespace embscope
