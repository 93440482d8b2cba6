#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "floodsparse/dataset.hpp"
#include "floodsparse/error.hpp"
#include "floodsparse/model.hpp"
#include "floodsparse/pattern.hpp"
#include "floodsparse/trainer.hpp"

namespace floodsparse {

inline constexpr const char* kOutputDirEnv = "FLOODSPARSE_OUTPUT_DIR";

/// Everything a `train` run needs. Built from defaults, then a key=value
/// file, then the environment, then command-line flags.
struct RunConfig {
  std::string task = "synthetic-majority";
  std::string data;  // csv path when task == csv
  std::size_t seq_len = 128;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ffn_dim = 128;
  std::size_t vocab = 16;
  std::size_t classes = 2;
  double dropout = 0.1;
  std::size_t block_size = 32;
  std::size_t filter_size = 31;
  double quantile_alpha = 96.0;
  double transition_tolerance = 0.05;
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  std::size_t train_samples = 256;
  std::size_t eval_samples = 64;
  std::string output_dir = "out";

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "task", "data", "L", "D", "H", "N", "ffn", "vocab", "classes", "dropout", "B", "F", "quantile_alpha",
        "transition_tolerance", "epochs", "lr", "seed", "batch_size", "train_samples", "eval_samples",
        "output_dir"};
    return k;
  }

  void set(const std::string& key, const std::string& value) {
    auto as_size = [&](std::size_t& dst) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        throw ParameterError("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
      dst = static_cast<std::size_t>(v);
    };
    auto as_real = [&](double& dst) {
      try {
        std::size_t used = 0;
        dst = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ParameterError("config: '" + key + "' expects a number, got '" + value + "'");
      }
    };
    if (key == "task") task = value;
    else if (key == "data") data = value;
    else if (key == "L") as_size(seq_len);
    else if (key == "D") as_size(d_model);
    else if (key == "H") as_size(heads);
    else if (key == "N") as_size(layers);
    else if (key == "ffn") as_size(ffn_dim);
    else if (key == "vocab") as_size(vocab);
    else if (key == "classes") as_size(classes);
    else if (key == "dropout") as_real(dropout);
    else if (key == "B") as_size(block_size);
    else if (key == "F") as_size(filter_size);
    else if (key == "quantile_alpha") as_real(quantile_alpha);
    else if (key == "transition_tolerance") as_real(transition_tolerance);
    else if (key == "epochs") as_size(epochs);
    else if (key == "lr") as_real(lr);
    else if (key == "seed") { std::size_t s = 0; as_size(s); seed = s; }
    else if (key == "batch_size") as_size(batch_size);
    else if (key == "train_samples") as_size(train_samples);
    else if (key == "eval_samples") as_size(eval_samples);
    else if (key == "output_dir") output_dir = value;
    else throw ParameterError("config: unknown key '" + key + "'");
  }

  void apply(const std::map<std::string, std::string>& entries) {
    for (const auto& [k, v] : entries) set(k, v);
  }

  void apply_environment() {
    if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) output_dir = dir;
  }

  /// Filter size actually used: the largest odd value <= min(F, L - 1).
  std::size_t effective_filter_size() const { return clamp_filter_size(filter_size, seq_len); }

  static std::size_t clamp_filter_size(std::size_t f, std::size_t len) {
    std::size_t v = std::min(f, len > 1 ? len - 1 : std::size_t(1));
    if (v % 2 == 0) --v;
    return std::max<std::size_t>(v, 1);
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.seq_len = seq_len;
    m.d_model = d_model;
    m.heads = heads;
    m.layers = layers;
    m.ffn_dim = ffn_dim;
    m.dropout_rate = dropout;
    if (task == "synthetic-listops") {
      m.vocab = listops::kVocab;
      m.classes = listops::kClasses;
    } else {
      m.vocab = vocab;
      m.classes = classes;
    }
    return m;
  }

  PatternConfig pattern_config() const { return {effective_filter_size(), block_size, quantile_alpha}; }

  TrainerConfig trainer_config() const {
    TrainerConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.learning_rate = lr;
    t.transition_tolerance = transition_tolerance;
    t.pattern = pattern_config();
    t.seed = seed;
    return t;
  }

  DatasetSpec dataset_spec() const {
    DatasetSpec d;
    d.source = parse_dataset_source(task);
    d.csv_path = data;
    d.samples = train_samples + eval_samples;
    d.seq_len = seq_len;
    d.vocab = vocab;
    d.classes = classes;
    d.seed = seed;
    return d;
  }

  /// Re-checks every model, pattern and trainer constraint.
  void validate() const {
    parse_dataset_source(task);
    if (task == "csv" && data.empty()) throw ParameterError("config: task=csv needs data=<path>");
    model_config().validate();
    trainer_config().validate(model_config());
    if (output_dir.empty()) throw ParameterError("config: output_dir is empty");
  }
};

/// Parses `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config line " + std::to_string(lineno) + ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

/// defaults < file < environment < flags.
inline RunConfig resolve_run_config(const std::filesystem::path& config_file,
                                    const std::map<std::string, std::string>& flags) {
  RunConfig cfg;
  if (!config_file.empty()) cfg.apply(load_config_file(config_file));
  cfg.apply_environment();
  cfg.apply(flags);
  return cfg;
}

}  // namespace floodsparse
