#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "floodsparse/analyzer.hpp"
#include "floodsparse/checkpoint.hpp"
#include "floodsparse/dataset.hpp"
#include "floodsparse/io.hpp"
#include "floodsparse/pattern.hpp"
#include "floodsparse/pgm.hpp"
#include "floodsparse/run_config.hpp"
#include "floodsparse/trainer.hpp"

namespace floodsparse {

namespace fs = std::filesystem;

namespace detail {

inline void write_pattern_artifacts(const fs::path& dir, const std::string& prefix, const MatrixF& attention,
                                    const PatternTrace<float>& tr) {
  save_csr(dir / (prefix + "pattern.csr"), tr.pattern);
  write_pgm(attention, dir / (prefix + "attention.pgm"), PgmScale::MinMax);
  write_pgm(tr.conv_out, dir / (prefix + "conv.pgm"), PgmScale::MinMax);
  write_pgm(tr.pool_out, dir / (prefix + "pool.pgm"), PgmScale::MinMax);
  write_pgm(tr.flood_marks.to_matrix(), dir / (prefix + "flood.pgm"), PgmScale::Binary);
  write_pgm(tr.pattern.to_dense(), dir / (prefix + "pattern.pgm"), PgmScale::Binary);
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

}  // namespace detail

/// Three-phase training run. Writes metrics.csv, checkpoint.bin, per-layer
/// pattern CSR files and heatmaps, and report.txt into cfg.output_dir.
inline int cmd_train(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    cfg.validate();
    const fs::path dir = cfg.output_dir;
    detail::ensure_dir(dir);
    const ModelConfig mc = cfg.model_config();
    const TrainerConfig tc = cfg.trainer_config();

    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + (dir / "metrics.csv").string());
    if (cfg.epochs == 0) {
      write_metrics_csv(metrics, {}, mc.layers);
      log << "epochs=0: nothing to train\n";
      return 0;
    }

    Dataset train = load_dataset(cfg.dataset_spec());
    if (train.vocab > mc.vocab || train.classes > mc.classes)
      throw DataError("dataset vocabulary/classes exceed the model configuration");
    Dataset eval = train.split_tail(std::min(cfg.eval_samples, train.size() > 1 ? train.size() - 1 : 0));
    log << "training on " << train.size() << " samples, evaluating on " << eval.size() << '\n';

    Model model = make_model(mc, cfg.seed);
    TrainState state = run_training(tc, model, train, eval.empty() ? nullptr : &eval);
    write_metrics_csv(metrics, state.log, mc.layers);
    for (const auto& m : state.log)
      log << "epoch " << m.epoch << " [" << to_string(m.phase) << "] loss " << m.loss << " acc " << m.accuracy
          << " eval " << m.eval_accuracy << '\n';

    save_checkpoint(dir / "checkpoint.bin", {mc, model.params, cfg.seed, state.log.size()});

    std::ofstream report(dir / "report.txt", std::ios::binary);
    if (!report) throw IoError("cannot write report.txt");
    if (state.transition_epoch) {
      report << "transition after dense epoch " << *state.transition_epoch << " (first sparse epoch "
             << *state.transition_epoch + 1 << ")\n";
    } else {
      report << "no transition: all " << cfg.epochs << " epochs dense\n";
    }
    report << "operation counts use the per-head dimension D = " << mc.head_dim() << "\n\n";
    for (std::size_t n = 0; n < state.patterns.size(); ++n) {
      const auto prefix = "layer" + std::to_string(n) + ".";
      detail::write_pattern_artifacts(dir, prefix, state.snapshots[n].a_s_mean, state.traces[n]);
      const auto& p = state.patterns[n];
      const auto ds = density_stats(p, cfg.block_size);
      report << "layer " << n << ": blocks " << ds.nonzero_blocks << ", empty rows " << ds.empty_rows << '\n';
      print_op_report(report, make_op_report(mc.seq_len, mc.head_dim(), p.nnz()));
      report << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << '\n';
    return 1;
  }
}

struct GenPatternArgs {
  fs::path input;
  fs::path output_dir = "pattern_out";
  PatternConfig pattern{};
};

/// Standalone pattern generation from an L x L matrix (CSV or MAT1 binary).
inline int cmd_gen_pattern(const GenPatternArgs& args, std::ostream& log, std::ostream& err) {
  try {
    const MatrixF a = load_matrix(args.input);
    if (a.rows() != a.cols() || a.empty())
      throw DataError("gen-pattern: input must be square, got " + shape_str(a));
    PatternConfig pc = args.pattern;
    pc.filter_size = RunConfig::clamp_filter_size(pc.filter_size, a.rows());
    const auto tr = generate_pattern_traced(a, pc);
    detail::ensure_dir(args.output_dir);
    detail::write_pattern_artifacts(args.output_dir, "", a, tr);
    const auto ds = density_stats(tr.pattern, pc.block_size);
    log << "L = " << a.rows() << ", F = " << pc.filter_size << ", B = " << pc.block_size
        << ", threshold = " << tr.threshold << '\n'
        << "nnz = " << ds.nnz << ", blocks = " << ds.nonzero_blocks << ", density = " << ds.density << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "gen-pattern: " << e.what() << '\n';
    return 1;
  }
}

struct AnalyzeArgs {
  std::uint64_t seq_len = 0;
  std::uint64_t dim = 64;
  std::optional<std::uint64_t> nnz;
  fs::path pattern;  // when set, L and C come from the file
};

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  try {
    std::uint64_t len = args.seq_len, c = 0;
    if (!args.pattern.empty()) {
      const auto p = load_csr(args.pattern);
      if (p.rows != p.cols) throw DataError("analyze: pattern must be square");
      len = p.rows;
      c = p.nnz();
    } else {
      if (!args.nnz) throw ParameterError("analyze: give C or a pattern file");
      c = *args.nnz;
    }
    print_op_report(out, make_op_report(len, args.dim, c));
    return 0;
  } catch (const std::exception& e) {
    err << "analyze: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace floodsparse
