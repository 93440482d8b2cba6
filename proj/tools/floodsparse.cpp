// Command-line front end: train, gen-pattern, analyze.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "floodsparse/commands.hpp"

using namespace floodsparse;

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise sparse attention training with flood-fill pattern detection"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "dense phase, pattern generation, sparse phase");
  std::string config_path;
  train->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_opts;
  for (const auto& key : RunConfig::keys())
    flag_opts[key] = train->add_option("--" + key, flag_values[key], "overrides config key " + key);

  // gen-pattern
  auto* gen = app.add_subcommand("gen-pattern", "sparsity pattern from an L x L attention matrix");
  GenPatternArgs gen_args;
  gen->add_option("input", gen_args.input, "matrix file (CSV rows or MAT1 binary)")->required();
  gen->add_option("-o,--output-dir", gen_args.output_dir, "output directory");
  gen->add_option("-F,--filter-size", gen_args.pattern.filter_size, "odd diagonal filter size");
  gen->add_option("-B,--block-size", gen_args.pattern.block_size, "pooling block size");
  gen->add_option("-a,--quantile-alpha", gen_args.pattern.quantile_alpha, "threshold percentile (0, 100)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "attention operation counts");
  AnalyzeArgs an_args;
  std::uint64_t nnz = 0;
  analyze->add_option("-L,--L", an_args.seq_len, "sequence length");
  analyze->add_option("-D,--D", an_args.dim, "embedding (per-head) dimension");
  auto* c_opt = analyze->add_option("-C,--C", nnz, "computed scores (nnz of P)");
  analyze->add_option("-p,--pattern", an_args.pattern, "CSR pattern file; supplies L and C");

  CLI11_PARSE(app, argc, argv);

  if (*train) {
    std::map<std::string, std::string> given;
    for (const auto& [key, opt] : flag_opts)
      if (opt->count() > 0) given[key] = flag_values[key];
    RunConfig cfg;
    try {
      cfg = resolve_run_config(config_path, given);
    } catch (const std::exception& e) {
      std::cerr << "train: " << e.what() << '\n';
      return 1;
    }
    return cmd_train(cfg, std::cout, std::cerr);
  }
  if (*gen) return cmd_gen_pattern(gen_args, std::cout, std::cerr);
  if (c_opt->count() > 0) an_args.nnz = nnz;
  return cmd_analyze(an_args, std::cout, std::cerr);
}
