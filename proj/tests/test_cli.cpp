#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "floodsparse/commands.hpp"

using namespace floodsparse;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test, removed afterwards.
class ScratchDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("floodsparse_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_file(const std::string& name, const std::string& body) const {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << body;
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  fs::path dir_;
};

/// Scoped environment variable.
struct EnvGuard {
  EnvGuard(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvGuard() { ::unsetenv(name_); }
  const char* name_;
};

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.seq_len = 16;
  c.d_model = 8;
  c.heads = 2;
  c.layers = 2;
  c.ffn_dim = 16;
  c.block_size = 4;
  c.filter_size = 3;
  c.quantile_alpha = 75;
  c.epochs = 5;
  c.batch_size = 4;
  c.train_samples = 12;
  c.eval_samples = 4;
  c.vocab = 6;
  c.output_dir = out.string();
  return c;
}

}  // namespace

using ConfigTest = ScratchDir;

TEST_F(ConfigTest, DefaultsAreValid) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.seq_len, 128u);
  EXPECT_EQ(c.effective_filter_size(), 31u);
}

TEST_F(ConfigTest, PrecedenceDefaultsFileEnvironmentFlags) {
  const auto file = write_file("run.cfg", "# comment\nL = 64\nepochs=7\noutput_dir = from_file\nlr = 0.01\n");
  unsetenv(kOutputDirEnv);
  {
    const auto c = resolve_run_config(file, {});
    EXPECT_EQ(c.seq_len, 64u);
    EXPECT_EQ(c.epochs, 7u);
    EXPECT_EQ(c.output_dir, "from_file");
    EXPECT_DOUBLE_EQ(c.lr, 0.01);
    EXPECT_EQ(c.d_model, 64u);
  }
  {
    EnvGuard env(kOutputDirEnv, "from_env");
    EXPECT_EQ(resolve_run_config(file, {}).output_dir, "from_env");
    const auto c = resolve_run_config(file, {{"output_dir", "from_flag"}, {"epochs", "9"}});
    EXPECT_EQ(c.output_dir, "from_flag");
    EXPECT_EQ(c.epochs, 9u);
    EXPECT_EQ(c.seq_len, 64u);
  }
  EXPECT_EQ(resolve_run_config({}, {}).output_dir, "out");
}

TEST_F(ConfigTest, EveryKeyIsSettable) {
  RunConfig c;
  for (const auto& k : RunConfig::keys()) {
    const std::string v = k == "task" ? "csv" : (k == "data" || k == "output_dir") ? "x" : "3";
    EXPECT_NO_THROW(c.set(k, v)) << k;
  }
}

TEST_F(ConfigTest, ParseErrors) {
  RunConfig c;
  EXPECT_THROW(c.set("bogus", "1"), ParameterError);
  EXPECT_THROW(c.set("L", "12x"), ParameterError);
  EXPECT_THROW(c.set("L", "-4"), ParameterError);
  EXPECT_THROW(c.set("lr", "fast"), ParameterError);
  std::istringstream bad("L 64\n");
  EXPECT_THROW(parse_config(bad), ParameterError);
  EXPECT_THROW(resolve_run_config(dir_ / "missing.cfg", {}), IoError);
  const auto unknown = write_file("u.cfg", "colour = red\n");
  EXPECT_THROW(resolve_run_config(unknown, {}), ParameterError);
}

TEST_F(ConfigTest, ValidationCatchesBadCombinations) {
  RunConfig c;
  c.block_size = 30;  // does not divide 128
  EXPECT_THROW(c.validate(), ShapeError);
  c = RunConfig{};
  c.heads = 3;
  EXPECT_THROW(c.validate(), ParameterError);
  c = RunConfig{};
  c.task = "csv";
  EXPECT_THROW(c.validate(), ParameterError);
  c = RunConfig{};
  c.task = "imagenet";
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(ClampFilterSize, Examples) {
  EXPECT_EQ(RunConfig::clamp_filter_size(31, 128), 31u);
  EXPECT_EQ(RunConfig::clamp_filter_size(31, 16), 15u);
  EXPECT_EQ(RunConfig::clamp_filter_size(8, 128), 7u);
  EXPECT_EQ(RunConfig::clamp_filter_size(5, 2), 1u);
  EXPECT_EQ(RunConfig::clamp_filter_size(5, 1), 1u);
}

using PgmTest = ScratchDir;

TEST_F(PgmTest, ConstantMatrixIsBlack) {
  const auto px = to_gray(MatrixF(2, 3), PgmScale::MinMax);
  EXPECT_EQ(px, std::vector<std::uint8_t>(6, 0));
}

TEST_F(PgmTest, BinaryAndMinMaxScaling) {
  EXPECT_EQ(to_gray(MatrixF{{0, 1}, {3, 0}}, PgmScale::Binary), (std::vector<std::uint8_t>{0, 255, 255, 0}));
  EXPECT_EQ(to_gray(MatrixF{{1, 2}, {3, 5}}, PgmScale::MinMax), (std::vector<std::uint8_t>{0, 64, 128, 255}));
}

TEST_F(PgmTest, HeaderRoundTrip) {
  const MatrixF m{{0, 1, 0}, {1, 0, 1}};
  write_pgm(m, dir_ / "m.pgm", PgmScale::Binary);
  EXPECT_EQ(slurp(dir_ / "m.pgm").substr(0, 11), "P5\n3 2\n255\n");
  const auto img = read_pgm(dir_ / "m.pgm");
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.maxval, 255u);
  EXPECT_EQ(img.pixels, to_gray(m, PgmScale::Binary));
  write_file("bad.pgm", "P2\n1 1\n255\n0\n");
  EXPECT_THROW(read_pgm(dir_ / "bad.pgm"), DataError);
  EXPECT_THROW(write_pgm(MatrixF(), dir_ / "e.pgm"), ShapeError);
}

TEST(ListOps, Evaluates) {
  using namespace listops;
  // MAX(3, MIN(9, 2)) = 3
  const std::vector<std::size_t> expr{kMax, kDigit0 + 3, kMin, kDigit0 + 9, kDigit0 + 2, kClose, kClose};
  EXPECT_EQ(evaluate(expr), 3u);
  EXPECT_EQ(evaluate({kMed, kDigit0 + 4, kDigit0 + 1, kDigit0 + 8, kDigit0 + 6, kClose}), 4u);
  EXPECT_THROW(evaluate({kMax, kDigit0 + 3}), DataError);
  EXPECT_THROW(evaluate({kClose}), DataError);
}

TEST(ListOps, GeneratedSamplesFitAndEvaluate) {
  Rng rng(5);
  const auto ds = synthetic_listops(200, 64, rng);
  ASSERT_EQ(ds.size(), 200u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_LE(ds.sequences[i].size(), 64u);
    EXPECT_EQ(listops::evaluate(ds.sequences[i]), ds.labels[i]);
  }
}

TEST(DatasetCsv, ParsesTokensAndLabel) {
  std::istringstream in("5,1,2,0\n# comment\n\n3,1\n");
  const auto ds = read_dataset_csv(in, 0, 2);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.sequences[0], (std::vector<std::size_t>{5, 1, 2}));
  EXPECT_EQ(ds.labels[0], 0u);
  EXPECT_EQ(ds.labels[1], 1u);
  EXPECT_EQ(ds.vocab, 6u);
}

TEST(DatasetCsv, ReportsMalformedLine) {
  std::istringstream in("1,2,0\n1,x,0\n");
  try {
    read_dataset_csv(in, 0, 2);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::istringstream label("1,2,5\n");
  EXPECT_THROW(read_dataset_csv(label, 0, 2), DataError);
  std::istringstream token("9,0\n");
  EXPECT_THROW(read_dataset_csv(token, 4, 2), DataError);
}

TEST(SyntheticMajority, LabelsMatchCountsAndAreBalanced) {
  Rng rng(7);
  const auto ds = synthetic_majority(100, 32, 16, 2, rng);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.labels[i], majority_label(ds.sequences[i], 2));
    ones += ds.labels[i];
  }
  EXPECT_GE(ones, 30u);
  EXPECT_LE(ones, 70u);
}

using TrainCommand = ScratchDir;

TEST_F(TrainCommand, ZeroEpochsWritesHeaderOnly) {
  auto cfg = tiny_run(dir_ / "run");
  cfg.epochs = 0;
  std::ostringstream log, err;
  ASSERT_EQ(cmd_train(cfg, log, err), 0) << err.str();
  EXPECT_EQ(slurp(dir_ / "run" / "metrics.csv"),
            "epoch,phase,loss,accuracy,eval_accuracy,attention_multiplies,distance_l0,distance_l1,density_l0,"
            "density_l1\n");
}

TEST_F(TrainCommand, UnwritableOutputFails) {
  write_file("blocker", "x");
  auto cfg = tiny_run(dir_ / "blocker" / "run");
  std::ostringstream log, err;
  EXPECT_NE(cmd_train(cfg, log, err), 0);
  EXPECT_FALSE(err.str().empty());
}

TEST_F(TrainCommand, InvalidConfigFails) {
  auto cfg = tiny_run(dir_ / "run");
  cfg.block_size = 5;
  std::ostringstream log, err;
  EXPECT_NE(cmd_train(cfg, log, err), 0);
  EXPECT_NE(err.str().find("train:"), std::string::npos);
}

TEST_F(TrainCommand, WritesAllArtifacts) {
  auto cfg = tiny_run(dir_ / "run");
  cfg.transition_tolerance = 1e9;
  std::ostringstream log, err;
  ASSERT_EQ(cmd_train(cfg, log, err), 0) << err.str();
  const fs::path out = dir_ / "run";
  for (const char* f : {"metrics.csv", "checkpoint.bin", "report.txt"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  for (int n = 0; n < 2; ++n)
    for (const char* s : {"pattern.csr", "attention.pgm", "conv.pgm", "pool.pgm", "flood.pgm", "pattern.pgm"})
      EXPECT_TRUE(fs::exists(out / ("layer" + std::to_string(n) + "." + s))) << n << s;
  const auto p = load_csr(out / "layer0.pattern.csr");
  EXPECT_EQ(p.rows, 16u);
  EXPECT_NE(slurp(out / "report.txt").find("first sparse epoch 3"), std::string::npos);
  std::size_t lines = 0;
  std::istringstream metrics(slurp(out / "metrics.csv"));
  for (std::string l; std::getline(metrics, l);) ++lines;
  EXPECT_EQ(lines, 6u);
  const auto ck = load_checkpoint(out / "checkpoint.bin");
  EXPECT_EQ(ck.epochs_completed, 5u);
}

TEST_F(TrainCommand, CsvTask) {
  std::string body;
  for (int i = 0; i < 10; ++i) body += "1,2,3,4,5," + std::to_string(i % 2) + "\n";
  const auto data = write_file("d.csv", body);
  auto cfg = tiny_run(dir_ / "run");
  cfg.task = "csv";
  cfg.data = data.string();
  cfg.epochs = 2;
  std::ostringstream log, err;
  EXPECT_EQ(cmd_train(cfg, log, err), 0) << err.str();
  cfg.data = (dir_ / "nope.csv").string();
  EXPECT_NE(cmd_train(cfg, log, err), 0);
}

using GenPatternCommand = ScratchDir;

TEST_F(GenPatternCommand, UniformInputGivesBlockDiagonal) {
  std::string csv;
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) csv += (j ? "," : "") + std::string("0.125");
    csv += "\n";
  }
  GenPatternArgs args;
  args.input = write_file("a.csv", csv);
  args.output_dir = dir_ / "pat";
  args.pattern = {3, 2, 96.0};
  std::ostringstream log, err;
  ASSERT_EQ(cmd_gen_pattern(args, log, err), 0) << err.str();
  const auto p = load_csr(dir_ / "pat" / "pattern.csr");
  const auto dense = p.to_dense();
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(dense(i, j), i / 2 == j / 2 ? 1.0f : 0.0f) << i << "," << j;
  for (const char* f : {"attention.pgm", "conv.pgm", "pool.pgm", "flood.pgm", "pattern.pgm"})
    EXPECT_TRUE(fs::exists(dir_ / "pat" / f)) << f;
}

TEST_F(GenPatternCommand, RejectsBadInput) {
  std::string csv;
  for (int i = 0; i < 5; ++i) csv += "1,1,1,1,1\n";
  GenPatternArgs args;
  args.input = write_file("a.csv", csv);
  args.output_dir = dir_ / "pat";
  args.pattern = {3, 2, 96.0};
  std::ostringstream log, err;
  EXPECT_NE(cmd_gen_pattern(args, log, err), 0);
  args.input = write_file("r.csv", "1,2\n3,4\n5,6\n");
  EXPECT_NE(cmd_gen_pattern(args, log, err), 0);
  args.input = dir_ / "missing.csv";
  EXPECT_NE(cmd_gen_pattern(args, log, err), 0);
}

using AnalyzeCommand = ScratchDir;

TEST_F(AnalyzeCommand, ReferenceNumbers) {
  AnalyzeArgs args;
  args.seq_len = 4096;
  args.dim = 64;
  args.nnz = 1'677'721;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_analyze(args, out, err), 0);
  EXPECT_NE(out.str().find("4,328,255,488"), std::string::npos);
  EXPECT_NE(out.str().find("432,585,778"), std::string::npos);
}

TEST_F(AnalyzeCommand, PatternFileSuppliesLengthAndCount) {
  MatrixF mask(8, 8);
  for (std::size_t i = 0; i < 8; ++i) mask(i, i) = 1;
  save_csr(dir_ / "p.csr", mask_to_csr(mask));
  AnalyzeArgs args;
  args.dim = 4;
  args.pattern = dir_ / "p.csr";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_analyze(args, out, err), 0) << err.str();
  EXPECT_NE(out.str().find("L = 8, D = 4, C = 8"), std::string::npos) << out.str();
  // 2*8*9 - 8*5 = 104
  EXPECT_NE(out.str().find("sparse_ops = 104"), std::string::npos) << out.str();
}

TEST_F(AnalyzeCommand, Errors) {
  AnalyzeArgs args;
  args.seq_len = 4;
  args.dim = 2;
  args.nnz = 17;
  std::ostringstream out, err;
  EXPECT_NE(cmd_analyze(args, out, err), 0);
  args.nnz.reset();
  EXPECT_NE(cmd_analyze(args, out, err), 0);
  args.pattern = dir_ / "none.csr";
  EXPECT_NE(cmd_analyze(args, out, err), 0);
}
