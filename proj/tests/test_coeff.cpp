#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bmsfem/coeff.hpp"

using namespace bmsfem;

namespace {
std::string matrix_text(int nx, int ny, double value, int zero_row = -1, int zero_col = -1) {
  std::ostringstream s;
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) s << (c ? " " : "") << (r == zero_row && c == zero_col ? 0.0 : value);
    s << '\n';
  }
  return s.str();
}
}  // namespace

TEST(Coeff, UniformFileLoadsAsUniformField) {
  auto m = build_hierarchy(100, 100, 10, 10);
  std::istringstream in(matrix_text(100, 100, 1.0));
  auto f = load_field(in, m);
  EXPECT_DOUBLE_EQ(f.min(), 1.0);
  EXPECT_DOUBLE_EQ(f.max(), 1.0);
}

TEST(Coeff, ZeroEntryReportsItsPosition) {
  auto m = build_hierarchy(6, 4, 3, 2);
  std::istringstream in(matrix_text(6, 4, 2.0, 2, 5));
  try {
    load_field(in, m);
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2, col 5"), std::string::npos) << e.what();
  }
}

TEST(Coeff, ShapeMismatchIsRejected) {
  auto m = build_hierarchy(4, 4, 2, 2);
  std::istringstream short_rows(matrix_text(3, 4, 1.0));
  EXPECT_THROW(load_field(short_rows, m), LoadError);
  std::istringstream few(matrix_text(4, 3, 1.0));
  EXPECT_THROW(load_field(few, m), LoadError);
  std::istringstream junk("1 1 1 x\n1 1 1 1\n1 1 1 1\n1 1 1 1\n");
  EXPECT_THROW(load_field(junk, m), LoadError);
}

TEST(Coeff, TopRowIsTheUpperBoundary) {
  auto m = build_hierarchy(2, 2, 1, 1);
  std::istringstream in("1 2\n3 4\n");
  auto f = load_field(in, m);
  EXPECT_EQ(f[m.fine_cell(0, 1)], 1.0);
  EXPECT_EQ(f[m.fine_cell(1, 1)], 2.0);
  EXPECT_EQ(f[m.fine_cell(0, 0)], 3.0);
  EXPECT_EQ(f[m.fine_cell(1, 0)], 4.0);
}

TEST(Coeff, WriteThenLoadRoundTrips) {
  auto m = build_hierarchy(20, 10, 5, 5);
  auto f = generate_channel_field(m, {1.0, 1000.0, 3, 4});
  std::stringstream s;
  write_field(s, f);
  auto g = load_field(s, m);
  EXPECT_EQ(f.values, g.values);
}

TEST(Coeff, ChannelFieldHasRequestedContrast) {
  auto m = build_hierarchy(100, 100, 10, 10);
  auto f = generate_channel_field(m, {1.0, 1000.0, 5, 8});
  EXPECT_DOUBLE_EQ(f.min(), 1.0);
  EXPECT_DOUBLE_EQ(f.max(), 1000.0);
  EXPECT_DOUBLE_EQ(f.contrast(), 1000.0);
  auto g = generate_channel_field(m, {1.0, 1000.0, 5, 8});
  EXPECT_EQ(f.values, g.values);
}

TEST(Coeff, ConstantLawLeavesFieldUnchanged) {
  auto m = build_hierarchy(4, 4, 2, 2);
  auto f = uniform_field(m, 3.0);
  EXPECT_EQ(evaluate_at(f, 0.5).values, f.values);
}

TEST(Coeff, ContrastLawAtTimeZeroKeepsRatio) {
  auto m = build_hierarchy(4, 4, 2, 2);
  auto f = uniform_field(m, 1.0);
  f.values[3] = 1000.0;
  f.law = ContrastLaw{1000.0, 250.0};
  auto g = evaluate_at(f, 0.0);
  EXPECT_NEAR(g.contrast(), 1000.0, 1e-9);
}

TEST(Coeff, ContrastLawGrowsExponentially) {
  auto m = build_hierarchy(4, 4, 2, 2);
  auto f = uniform_field(m, 1.0);
  f.values[5] = 1000.0;
  f.law = ContrastLaw{1000.0, 250.0};
  auto g = evaluate_at(f, 0.01);
  const double expected = 1000.0 * std::exp(2.5);
  EXPECT_NEAR(g.contrast() / expected, 1.0, 1e-10);
  EXPECT_NEAR(g.contrast(), 12182.49, 0.01);
}

TEST(Coeff, ContrastLawPreservesOrderingAndIsMonotone) {
  auto m = build_hierarchy(8, 8, 2, 2);
  auto f = generate_channel_field(m, {1.0, 1000.0, 2, 4});
  for (std::size_t k = 0; k < f.values.size(); k += 3) f.values[k] *= 1.0 + 0.01 * static_cast<double>(k % 7);
  f.law = ContrastLaw{f.contrast(), 250.0};
  auto arg = [](const CoefficientField& x, bool max) {
    auto it = max ? std::max_element(x.values.begin(), x.values.end())
                  : std::min_element(x.values.begin(), x.values.end());
    return it - x.values.begin();
  };
  double last = 0.0;
  for (double t : {0.0, 0.002, 0.005, 0.01}) {
    auto g = evaluate_at(f, t);
    EXPECT_EQ(arg(g, true), arg(f, true));
    EXPECT_EQ(arg(g, false), arg(f, false));
    EXPECT_GT(g.contrast(), last);
    last = g.contrast();
  }
  EXPECT_THROW(evaluate_at(f, -1.0), ConfigError);
}
