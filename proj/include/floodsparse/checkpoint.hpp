#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "floodsparse/error.hpp"
#include "floodsparse/io.hpp"
#include "floodsparse/model.hpp"
#include "floodsparse/rng.hpp"

namespace floodsparse {

// Layout: "FSCK", u32 version, model config, u64 rng seed, u64 epochs completed,
// u64 tensor count, then per tensor: u32 name length, name bytes,
// u64 rows, u64 cols, f32 data.
inline constexpr std::string_view kCheckpointMagic = "FSCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  EncoderParams<float> params;
  std::uint64_t rng_seed = 0;
  std::uint64_t epochs_completed = 0;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  le::put_magic(os, kCheckpointMagic);
  le::put_u32(os, kCheckpointVersion);
  const ModelConfig& c = ck.config;
  for (std::uint64_t v : {c.seq_len, c.d_model, c.heads, c.layers, c.vocab, c.classes, c.ffn_dim})
    le::put_u64(os, v);
  le::put_f64(os, c.dropout_rate);
  le::put_f64(os, c.ln_eps);
  le::put_u64(os, ck.rng_seed);
  le::put_u64(os, ck.epochs_completed);
  std::uint64_t count = 0;
  ck.params.for_each([&](const std::string&, const MatrixF&) { ++count; });
  le::put_u64(os, count);
  ck.params.for_each([&](const std::string& name, const MatrixF& m) {
    le::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    le::put_u64(os, m.rows());
    le::put_u64(os, m.cols());
    for (float v : m.values()) le::put_f32(os, v);
  });
}

inline Checkpoint read_checkpoint(std::istream& is) {
  le::expect_magic(is, kCheckpointMagic, "checkpoint");
  const auto version = le::get_u32(is);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  ModelConfig& c = ck.config;
  for (std::size_t* f : {&c.seq_len, &c.d_model, &c.heads, &c.layers, &c.vocab, &c.classes, &c.ffn_dim})
    *f = le::get_u64(is);
  c.dropout_rate = le::get_f64(is);
  c.ln_eps = le::get_f64(is);
  c.validate();
  ck.rng_seed = le::get_u64(is);
  ck.epochs_completed = le::get_u64(is);
  Rng init(0);
  ck.params = init_params<float>(c, init);
  std::uint64_t expected = 0;
  ck.params.for_each([&](const std::string&, const MatrixF&) { ++expected; });
  if (le::get_u64(is) != expected) throw DataError("checkpoint: tensor count does not match config");
  ck.params.for_each([&](const std::string& name, MatrixF& m) {
    std::string stored(le::get_u32(is), '\0');
    if (!is.read(stored.data(), static_cast<std::streamsize>(stored.size()))) throw IoError("checkpoint: truncated");
    if (stored != name) throw DataError("checkpoint: expected tensor " + name + ", found " + stored);
    const auto rows = le::get_u64(is), cols = le::get_u64(is);
    if (rows != m.rows() || cols != m.cols()) throw DataError("checkpoint: shape mismatch for " + name);
    for (float& v : m.values()) v = le::get_f32(is);
  });
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, ck);
  if (!out) throw IoError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace floodsparse
