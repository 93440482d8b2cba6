#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "floodsparse/error.hpp"
#include "floodsparse/rng.hpp"

namespace floodsparse {

struct Dataset {
  std::vector<std::vector<std::size_t>> sequences;
  std::vector<std::size_t> labels;
  std::size_t vocab = 0;
  std::size_t classes = 0;
  std::size_t max_len = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  void validate() const {
    if (sequences.size() != labels.size()) throw DataError("dataset: sequence/label count mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
      if (labels[i] >= classes)
        throw DataError("dataset: label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                        " >= classes " + std::to_string(classes));
      for (auto t : sequences[i])
        if (t >= vocab)
          throw DataError("dataset: token " + std::to_string(t) + " of sample " + std::to_string(i) +
                          " >= vocab " + std::to_string(vocab));
    }
  }

  /// Moves the trailing `count` samples into a new dataset.
  Dataset split_tail(std::size_t count) {
    count = std::min(count, size());
    Dataset tail{{}, {}, vocab, classes, max_len};
    const std::size_t keep = size() - count;
    tail.sequences.assign(sequences.begin() + keep, sequences.end());
    tail.labels.assign(labels.begin() + keep, labels.end());
    sequences.resize(keep);
    labels.resize(keep);
    return tail;
  }
};

// --- synthetic-majority ---------------------------------------------------
//
// Token 0 is padding. Token t >= 1 belongs to class (t - 1) % classes and the
// label is the class owning the most tokens (ties go to the lower class).

inline std::size_t majority_label(const std::vector<std::size_t>& seq, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (auto t : seq)
    if (t > 0) ++counts[(t - 1) % classes];
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

inline Dataset synthetic_majority(std::size_t samples, std::size_t seq_len, std::size_t vocab, std::size_t classes,
                                  Rng& rng, double bias = 0.1) {
  if (classes < 2 || vocab < classes + 1) throw ParameterError("synthetic-majority: need vocab > classes >= 2");
  Dataset ds{{}, {}, vocab, classes, seq_len};
  const std::size_t per_class = (vocab - 1) / classes;
  for (std::size_t s = 0; s < samples; ++s) {
    // Skew each sequence toward a uniformly drawn class so labels stay balanced.
    const std::size_t target = rng.below(classes);
    std::vector<std::size_t> seq(seq_len);
    for (auto& t : seq) {
      if (rng.uniform() < bias)
        t = 1 + target + classes * rng.below(per_class);
      else
        t = 1 + rng.below(vocab - 1);
    }
    ds.labels.push_back(majority_label(seq, classes));
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

// --- synthetic-listops ----------------------------------------------------
//
// Nested MIN / MAX / MEDIAN expressions over digits. Tokens: 0 pad,
// 1..10 digits 0..9, 11 "[MIN", 12 "[MAX", 13 "[MED", 14 "]".

namespace listops {
inline constexpr std::size_t kDigit0 = 1;
inline constexpr std::size_t kMin = 11;
inline constexpr std::size_t kMax = 12;
inline constexpr std::size_t kMed = 13;
inline constexpr std::size_t kClose = 14;
inline constexpr std::size_t kVocab = 15;
inline constexpr std::size_t kClasses = 10;

/// Evaluates a token sequence (trailing padding ignored). Median of an even
/// count takes the lower middle element.
inline std::size_t evaluate(const std::vector<std::size_t>& tokens) {
  std::vector<std::size_t> ops;
  std::vector<std::vector<std::size_t>> args(1);
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const std::size_t t = tokens[pos];
    if (t == 0) break;
    if (t >= kDigit0 && t < kDigit0 + 10) {
      args.back().push_back(t - kDigit0);
    } else if (t == kMin || t == kMax || t == kMed) {
      ops.push_back(t);
      args.emplace_back();
    } else if (t == kClose) {
      if (ops.empty() || args.back().empty()) throw DataError("listops: unbalanced ']' at " + std::to_string(pos));
      auto v = std::move(args.back());
      args.pop_back();
      std::sort(v.begin(), v.end());
      const std::size_t op = ops.back();
      ops.pop_back();
      args.back().push_back(op == kMin ? v.front() : op == kMax ? v.back() : v[(v.size() - 1) / 2]);
    } else {
      throw DataError("listops: unknown token " + std::to_string(t));
    }
  }
  if (!ops.empty() || args.size() != 1 || args[0].size() != 1) throw DataError("listops: malformed expression");
  return args[0][0];
}

inline void emit(std::vector<std::size_t>& out, std::size_t depth, std::size_t max_depth, Rng& rng) {
  if (depth >= max_depth || (depth > 0 && rng.uniform() < 0.35)) {
    out.push_back(kDigit0 + rng.below(10));
    return;
  }
  out.push_back(kMin + rng.below(3));
  const std::size_t arity = 2 + rng.below(3);
  for (std::size_t a = 0; a < arity; ++a) emit(out, depth + 1, max_depth, rng);
  out.push_back(kClose);
}
}  // namespace listops

inline Dataset synthetic_listops(std::size_t samples, std::size_t seq_len, Rng& rng, std::size_t max_depth = 4) {
  if (max_depth < 1 || max_depth > 4) throw ParameterError("synthetic-listops: depth must be in [1, 4]");
  if (seq_len < 4) throw ParameterError("synthetic-listops: sequence length too short");
  Dataset ds{{}, {}, listops::kVocab, listops::kClasses, seq_len};
  while (ds.size() < samples) {
    std::vector<std::size_t> seq;
    listops::emit(seq, 0, max_depth, rng);
    if (seq.size() > seq_len) continue;
    ds.labels.push_back(listops::evaluate(seq));
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

// --- CSV ------------------------------------------------------------------
//
// One sample per line: comma-separated token ids, last field is the label.

inline Dataset read_dataset_csv(std::istream& in, std::size_t vocab, std::size_t classes) {
  Dataset ds{{}, {}, vocab, classes, 0};
  std::string line;
  std::size_t lineno = 0, max_token = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::vector<std::size_t> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        if (cell.find('-') != std::string::npos) throw std::invalid_argument(cell);
        v = std::stoull(cell, &used);
      } catch (const std::exception&) {
        throw DataError("dataset csv line " + std::to_string(lineno) + ": bad integer '" + cell + "'");
      }
      if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
        throw DataError("dataset csv line " + std::to_string(lineno) + ": bad integer '" + cell + "'");
      fields.push_back(static_cast<std::size_t>(v));
    }
    if (fields.size() < 2)
      throw DataError("dataset csv line " + std::to_string(lineno) + ": need at least one token and a label");
    const std::size_t label = fields.back();
    fields.pop_back();
    if (label >= classes)
      throw DataError("dataset csv line " + std::to_string(lineno) + ": label " + std::to_string(label) +
                      " >= classes " + std::to_string(classes));
    for (auto t : fields) {
      max_token = std::max(max_token, t);
      if (vocab && t >= vocab)
        throw DataError("dataset csv line " + std::to_string(lineno) + ": token " + std::to_string(t) +
                        " >= vocab " + std::to_string(vocab));
    }
    ds.max_len = std::max(ds.max_len, fields.size());
    ds.sequences.push_back(std::move(fields));
    ds.labels.push_back(label);
  }
  if (ds.vocab == 0) ds.vocab = max_token + 1;
  return ds;
}

enum class DatasetSource { SyntheticMajority, SyntheticListops, Csv };

inline DatasetSource parse_dataset_source(std::string_view s) {
  if (s == "synthetic-majority") return DatasetSource::SyntheticMajority;
  if (s == "synthetic-listops") return DatasetSource::SyntheticListops;
  if (s == "csv") return DatasetSource::Csv;
  throw ParameterError("unknown task '" + std::string(s) + "' (synthetic-majority, synthetic-listops, csv)");
}

struct DatasetSpec {
  DatasetSource source = DatasetSource::SyntheticMajority;
  std::filesystem::path csv_path;
  std::size_t samples = 256;
  std::size_t seq_len = 128;
  std::size_t vocab = 16;    // majority / csv (0 = infer for csv)
  std::size_t classes = 2;   // majority / csv
  std::uint64_t seed = 0;
};

inline Dataset load_dataset(const DatasetSpec& spec) {
  Rng rng(spec.seed);
  Dataset ds;
  switch (spec.source) {
    case DatasetSource::SyntheticMajority:
      ds = synthetic_majority(spec.samples, spec.seq_len, spec.vocab, spec.classes, rng);
      break;
    case DatasetSource::SyntheticListops:
      ds = synthetic_listops(spec.samples, spec.seq_len, rng);
      break;
    case DatasetSource::Csv: {
      std::ifstream in(spec.csv_path);
      if (!in) throw IoError("cannot open dataset " + spec.csv_path.string());
      ds = read_dataset_csv(in, spec.vocab, spec.classes);
      break;
    }
  }
  ds.validate();
  return ds;
}

}  // namespace floodsparse
