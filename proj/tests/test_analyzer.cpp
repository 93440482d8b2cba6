#include <gtest/gtest.h>

#include <sstream>

#include "floodsparse/analyzer.hpp"
#include "floodsparse/sparse_kernels.hpp"
#include "floodsparse/tensor_ops.hpp"
#include "test_support.hpp"

using namespace floodsparse;
using testing_support::random_matrix;
using testing_support::random_pattern;

TEST(OpCounts, ReferenceConfiguration) {
  EXPECT_EQ(dense_attention_ops(4096, 64), 4'328'255'488LL);
  EXPECT_EQ(sparse_attention_ops(4096, 64, 1'677'721), 432'585'778LL);
  const auto r = make_op_report(4096, 64, 1'677'721);
  EXPECT_GE(r.reduction_ratio, 9.5);
  EXPECT_LE(r.reduction_ratio, 10.5);
  EXPECT_NEAR(r.density, 0.1, 1e-6);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(OpCounts, SmallestShape) {
  // 2*1*3 - 1*2 = 4.
  EXPECT_EQ(dense_attention_ops(1, 1), 4);
  EXPECT_EQ(sparse_attention_ops(1, 1, 1), 4);
}

TEST(OpCounts, FullPatternEqualsDense) {
  for (std::uint64_t l : {1u, 7u, 128u, 4096u})
    for (std::uint64_t d : {1u, 16u, 64u}) EXPECT_EQ(sparse_attention_ops(l, d, l * l), dense_attention_ops(l, d));
}

TEST(OpCounts, InvalidInputs) {
  EXPECT_THROW(dense_attention_ops(0, 4), ParameterError);
  EXPECT_THROW(dense_attention_ops(4, 0), ParameterError);
  EXPECT_THROW(sparse_attention_ops(4, 4, 17), ParameterError);
  EXPECT_THROW(make_op_report(4, 4, 17), ParameterError);
  EXPECT_THROW(raw_score_ops(3, 0), ParameterError);
}

TEST(OpCounts, LargeShapeDoesNotOverflow) {
  const std::uint64_t l = 1'000'000, d = 1024;
  EXPECT_EQ(dense_attention_ops(l, d), 2LL * 1'000'000'000'000LL * 2049 - 1'000'000LL * 1025);
  EXPECT_THROW(dense_attention_ops(1ULL << 32, 1ULL << 20), ParameterError);
}

TEST(OpCounts, NearEmptyPatternIsClampedWithWarning) {
  EXPECT_LT(sparse_attention_ops(100, 8, 1), 0);
  const auto r = make_op_report(100, 8, 1);
  EXPECT_EQ(r.sparse_ops, 0);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("clamped"), std::string::npos);
}

TEST(OpCounts, RawScoreProducts) {
  EXPECT_EQ(raw_score_ops(16'777'216, 64), 2'130'706'432LL);
  EXPECT_EQ(raw_score_ops(1'677'721, 64), 213'070'567LL);
  EXPECT_EQ(raw_score_ops(0, 64), 0);
}

TEST(OpCounts, ReductionShrinksWithDensity) {
  double prev = 0;
  for (std::uint64_t c : {16'777'216ULL, 8'388'608ULL, 1'677'721ULL, 167'772ULL}) {
    const double ratio = make_op_report(4096, 64, c).reduction_ratio;
    EXPECT_GT(ratio, prev);
    prev = ratio;
  }
}

// The closed forms must match what the kernels actually tally.
TEST(OpCounts, DenseFormulaMatchesInstrumentedKernels) {
  Rng rng(21);
  for (std::size_t l : {1u, 4u, 9u})
    for (std::size_t d : {1u, 2u, 5u}) {
      const auto q = random_matrix(l, d, rng), k = random_matrix(l, d, rng), v = random_matrix(l, d, rng);
      OpCounter c;
      const auto s = gemm(q, k, true, &c);
      const auto p = dense_softmax_rows(s, 1.0, &c);
      gemm(p, v, false, &c);
      EXPECT_EQ(std::int64_t(c.total()), dense_attention_ops(l, d)) << l << "x" << d;
    }
}

TEST(OpCounts, SparseFormulaMatchesInstrumentedKernels) {
  Rng rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t l = 4 + trial, d = 1 + trial % 4;
    auto pattern = random_pattern(l, l, 0.4, rng);
    // Every row needs a stored entry for the closed form; add the diagonal.
    Matrix<double> mask = pattern.to_dense();
    for (std::size_t i = 0; i < l; ++i) mask(i, i) = 1;
    pattern = mask_to_csr(mask);
    const auto q = random_matrix(l, d, rng), k = random_matrix(l, d, rng), v = random_matrix(l, d, rng);
    OpCounter c;
    const auto s = sddmm(q, k, pattern, &c);
    const auto p = sparse_softmax_forward(s, 1.0, l, &c);
    spmm(p, v, &c);
    EXPECT_EQ(std::int64_t(c.total()), sparse_attention_ops(l, d, pattern.nnz())) << trial;
  }
}

TEST(OpReport, PrintedForm) {
  std::ostringstream os;
  print_op_report(os, make_op_report(4096, 64, 1'677'721));
  const std::string s = os.str();
  EXPECT_NE(s.find("dense_ops  = 4,328,255,488"), std::string::npos) << s;
  EXPECT_NE(s.find("sparse_ops = 432,585,778"), std::string::npos) << s;
  EXPECT_NE(s.find("reduction  = 10.0055x"), std::string::npos) << s;
}

TEST(GroupThousands, Examples) {
  EXPECT_EQ(group_thousands(0), "0");
  EXPECT_EQ(group_thousands(999), "999");
  EXPECT_EQ(group_thousands(1000), "1,000");
  EXPECT_EQ(group_thousands(-1234567), "-1,234,567");
}

TEST(DensityStats, Examples) {
  Matrix<double> full(4, 4, 1.0);
  EXPECT_DOUBLE_EQ(density_stats(mask_to_csr(full)).density, 1.0);
  Matrix<double> diag(4, 4);
  for (std::size_t i = 0; i < 4; ++i) diag(i, i) = 1;
  const auto s = density_stats(mask_to_csr(diag), 2);
  EXPECT_DOUBLE_EQ(s.density, 0.25);
  EXPECT_EQ(s.nonzero_blocks, 2u);
  const auto e = density_stats(mask_to_csr(Matrix<double>(4, 4)));
  EXPECT_EQ(e.density, 0.0);
  EXPECT_EQ(e.empty_rows, 4u);
}
