#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "certcc/box.hpp"
#include "oracles.hpp"

using namespace certcc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(BoxFromIntervals, MidpointAndHalfWidth) {
  const std::vector<Interval> a{{0, 2}};
  Box b = Box::from_intervals(a);
  EXPECT_DOUBLE_EQ(b.center()[0], 1.0);
  EXPECT_DOUBLE_EQ(b.deviation()[0], 1.0);

  const std::vector<Interval> p{{3, 3}};
  b = Box::from_intervals(p);
  EXPECT_DOUBLE_EQ(b.center()[0], 3.0);
  EXPECT_DOUBLE_EQ(b.deviation()[0], 0.0);

  const std::vector<Interval> two{{-1, 1}, {0, 4}};
  b = Box::from_intervals(two);
  EXPECT_EQ(b.center(), vec({0, 2}));
  EXPECT_EQ(b.deviation(), vec({1, 2}));
}

TEST(BoxFromIntervals, RejectsEmptyAndInverted) {
  EXPECT_THROW(Box::from_intervals(std::vector<Interval>{}), std::invalid_argument);
  EXPECT_THROW(Box::from_intervals(std::vector<Interval>{{2, 1}}), std::invalid_argument);
  EXPECT_THROW(Box(vec({0}), vec({-1})), std::invalid_argument);
}

TEST(BoxConcretize, Examples) {
  Box b(vec({0}), vec({1}));
  EXPECT_EQ(b.concretize(), (std::vector<Interval>{{-1, 1}}));
  Box p(vec({1, 2}), vec({0, 0}));
  EXPECT_EQ(p.concretize(), (std::vector<Interval>{{1, 1}, {2, 2}}));
  const std::vector<Interval> rt{{-5, 7}};
  EXPECT_EQ(Box::from_intervals(rt).concretize(), rt);
}

TEST(BoxAffine, Examples) {
  Matrix m(1, 2);
  m << 1, -1;
  Box out = affine(Box(vec({0, 0}), vec({1, 1})), m, vec({0}));
  EXPECT_DOUBLE_EQ(out.center()[0], 0.0);
  EXPECT_DOUBLE_EQ(out.deviation()[0], 2.0);

  const Box in(vec({0.3, -1.2, 4}), vec({0.1, 0.5, 2}));
  out = affine(in, Matrix::Identity(3, 3), Vector::Zero(3));
  EXPECT_EQ(out.center(), in.center());
  EXPECT_EQ(out.deviation(), in.deviation());

  Matrix two(1, 1);
  two << 2;
  out = affine(Box(vec({1}), vec({0.5})), two, vec({3}));
  EXPECT_EQ(out.interval(0), (Interval{4, 6}));
}

TEST(BoxAffine, DimensionMismatchThrows) {
  EXPECT_THROW(affine(Box(vec({0, 0}), vec({1, 1})), Matrix::Ones(1, 3), vec({0})), std::invalid_argument);
  EXPECT_THROW(affine(Box(vec({0, 0}), vec({1, 1})), Matrix::Ones(1, 2), vec({0, 0})), std::invalid_argument);
}

TEST(BoxAddElements, Examples) {
  Box b = add_elements(Box(vec({9, 1, 2}), vec({0, 0.5, 0.5})), 0, 1, 2);
  EXPECT_EQ(b.interval(0), (Interval{2, 4}));

  b = add_elements(Box(vec({0, 1.5, -4}), vec({0, 0, 0})), 0, 1, 2);
  EXPECT_DOUBLE_EQ(b.center()[0], -2.5);
  EXPECT_DOUBLE_EQ(b.deviation()[0], 0.0);

  b = add_elements(Box(vec({0, 1}), vec({0, 0.25})), 0, 1, 1);
  EXPECT_EQ(b.interval(0), (Interval{1.5, 2.5}));

  EXPECT_THROW(add_elements(Box(vec({0, 1}), vec({0, 0})), 2, 0, 1), std::out_of_range);
}

TEST(BoxRelu, Examples) {
  Box b = relu(Box(vec({0}), vec({1})));
  EXPECT_EQ(b.interval(0), (Interval{0, 1}));
  EXPECT_DOUBLE_EQ(b.center()[0], 0.5);
  EXPECT_DOUBLE_EQ(b.deviation()[0], 0.5);
  EXPECT_EQ(relu(Box(vec({2.5}), vec({0.5}))).interval(0), (Interval{2, 3}));
  EXPECT_EQ(relu(Box(vec({-2}), vec({1}))).interval(0), (Interval{0, 0}));
}

TEST(BoxMonotone, Examples) {
  auto t = monotone_elementwise(Box(vec({0}), vec({0})), [](double x) { return std::tanh(x); });
  EXPECT_EQ(t.interval(0), (Interval{0, 0}));
  auto s = monotone_elementwise(Box(vec({0}), vec({1})), [](double x) { return std::exp2(2 * x); });
  EXPECT_DOUBLE_EQ(s.interval(0).lo, 0.25);
  EXPECT_DOUBLE_EQ(s.interval(0).hi, 4.0);
  auto l = monotone_elementwise(Box(vec({0.5}), vec({1.5})), [](double x) { return x >= 0 ? x : 0.2 * x; });
  EXPECT_NEAR(l.interval(0).lo, -0.2, 1e-15);
  EXPECT_DOUBLE_EQ(l.interval(0).hi, 2.0);
}

TEST(BoxSplit, Examples) {
  const std::vector<Interval> unit{{0, 1}};
  auto parts = split(Box::from_intervals(unit), 0, 2);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].interval(0), (Interval{0, 0.5}));
  EXPECT_EQ(parts[1].interval(0), (Interval{0.5, 1}));

  const Box b(vec({1, 2}), vec({3, 4}));
  parts = split(b, 1, 1);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0].concretize(), b.concretize());

  const std::vector<Interval> wide{{0, 10}, {5, 5}};
  parts = split(Box::from_intervals(wide), 0, 5);
  ASSERT_EQ(parts.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(parts[i].interval(0).width(), 2.0, 1e-12);
    EXPECT_NEAR(parts[i].interval(0).lo, 2.0 * static_cast<double>(i), 1e-12);
    EXPECT_EQ(parts[i].interval(1), (Interval{5, 5}));
  }
  EXPECT_THROW(split(b, 2, 2), std::out_of_range);
  EXPECT_THROW(split(b, 0, 0), std::invalid_argument);
}

TEST(BoxHull, Examples) {
  const std::vector<Box> ab{Box::from_intervals(std::vector<Interval>{{0, 1}}),
                            Box::from_intervals(std::vector<Interval>{{2, 3}})};
  EXPECT_EQ(hull(ab).interval(0), (Interval{0, 3}));

  const std::vector<Box> one{Box(vec({1, -1}), vec({0.5, 2}))};
  EXPECT_EQ(hull(one).concretize(), one[0].concretize());

  const std::vector<Box> cd{Box::from_intervals(std::vector<Interval>{{-1, 0}, {0, 1}}),
                            Box::from_intervals(std::vector<Interval>{{0, 2}, {-1, 0}})};
  EXPECT_EQ(hull(cd).concretize(), (std::vector<Interval>{{-1, 2}, {-1, 1}}));

  EXPECT_THROW(hull(std::vector<Box>{}), std::invalid_argument);
}

TEST(BoxSplitHull, RoundTripRandom) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dims(1, 8), pieces(1, 60);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = dims(rng);
    const Box b = oracle::random_box(rng, d, 3.0);
    const std::size_t axis = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, d - 1)(rng));
    const auto parts = split(b, axis, static_cast<std::size_t>(pieces(rng)));
    const Box h = hull(parts);
    for (int i = 0; i < d; ++i) {
      EXPECT_NEAR(h.interval(static_cast<std::size_t>(i)).lo, b.interval(static_cast<std::size_t>(i)).lo, 1e-12);
      EXPECT_NEAR(h.interval(static_cast<std::size_t>(i)).hi, b.interval(static_cast<std::size_t>(i)).hi, 1e-12);
    }
    // Pieces tile the axis: consecutive pieces touch.
    for (std::size_t k = 1; k < parts.size(); ++k)
      EXPECT_NEAR(parts[k - 1].interval(axis).hi, parts[k].interval(axis).lo, 1e-12);
  }
}

TEST(BoxSoundness, AffineReluSamplesStayInside) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 300; ++trial) {
    const int in = 1 + trial % 7, out = 1 + trial % 5;
    Matrix m(out, in);
    Vector bias(out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    for (Eigen::Index i = 0; i < bias.size(); ++i) bias[i] = n01(rng);
    const Box b = oracle::random_box(rng, in, 1.5);
    const Box ob = relu(affine(b, m, bias));
    for (int s = 0; s < 50; ++s) {
      const Vector x = oracle::sample_in(b, rng);
      const Vector y = (m * x + bias).cwiseMax(0.0);
      EXPECT_TRUE(ob.contains(y, 1e-12));
    }
  }
}
