#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "certcc/network.hpp"
#include "oracles.hpp"

using namespace certcc;

namespace {

constexpr double kStep = 1e-5;
constexpr double kFloor = 1e-6;

double weighted_output(const Network& net, const Matrix& x, const Matrix& w, Mode mode) {
  return (net.forward_batch(x, mode).array() * w.array()).sum();
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

Network single_layer(LayerSpec spec, int in) { return Network(in, {spec}); }

}  // namespace

TEST(NetworkForward, ZeroWeightsGiveZero) {
  Network net = Network::actor(6, 8);
  net.params().setZero();
  Vector s = Vector::Constant(6, 0.7);
  EXPECT_DOUBLE_EQ(net.forward(s), 0.0);
}

TEST(NetworkForward, SingleUnitTanh) {
  Network net(1, {{LayerKind::fully_connected, 0, 1}, {LayerKind::tanh}});
  net.params() << 1.0, 0.0;
  Vector s(1);
  s << 0.5;
  EXPECT_NEAR(net.forward(s), 0.46211715726000974, 1e-15);
}

TEST(NetworkForward, MatchesReferenceEvaluator) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Network net = oracle::random_network(rng, 3, 16, true);
    const Vector x = random_matrix(rng, net.input_dim(), 1);
    EXPECT_NEAR(net.forward(x), oracle::forward1(net, x), 1e-10);
  }
}

TEST(NetworkForward, DimensionMismatchThrows) {
  const Network net = Network::actor(6, 4);
  EXPECT_THROW(net.forward(Vector::Zero(5)), std::invalid_argument);
  EXPECT_THROW(net.forward_abstract(Box::point(Vector::Zero(7))), std::invalid_argument);
}

TEST(NetworkAbstract, PointBoxMatchesConcrete) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Network net = oracle::random_network(rng, 3, 16, true);
    const Vector x = random_matrix(rng, net.input_dim(), 1);
    const Interval out = net.forward_abstract(Box::point(x));
    const double y = net.forward(x);
    EXPECT_LE(out.width(), 1e-9);
    EXPECT_NEAR(out.lo, y, 1e-9);
    EXPECT_NEAR(out.hi, y, 1e-9);
  }
}

TEST(NetworkAbstract, SamplesInsideAndMonotoneInBox) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Network net = oracle::random_network(rng, 3, 16, true);
    const Box inner = oracle::random_box(rng, net.input_dim(), 0.5);
    const Box outer(inner.center(), inner.deviation() * 2.0);
    const Interval io = net.forward_abstract(inner);
    const Interval oo = net.forward_abstract(outer);
    EXPECT_TRUE(oo.contains(io));
    for (int s = 0; s < 100; ++s) {
      const double y = oracle::forward1(net, oracle::sample_in(inner, rng));
      EXPECT_GE(y, io.lo - 1e-12);
      EXPECT_LE(y, io.hi + 1e-12);
    }
  }
}

TEST(NetworkArchitecture, RoundTrip) {
  const Network a = Network::actor(60, 32, 0.2);
  EXPECT_EQ(a.architecture(), Network::from_architecture(a.architecture()).architecture());
  const Network c = Network::critic(61, 16);
  const Network c2 = Network::from_architecture(c.architecture());
  EXPECT_EQ(c.param_count(), c2.param_count());
  EXPECT_THROW(Network::from_architecture("fc:3"), std::invalid_argument);
  EXPECT_THROW(Network::from_architecture("in=3;conv:2"), std::invalid_argument);
}

TEST(NetworkGradients, ZeroUpstreamGivesZero) {
  std::mt19937_64 rng(1);
  Network net = Network::actor(12, 8);
  net.initialize(rng);
  const Vector g = net.gradients(Vector::Constant(12, 0.3), 0.0);
  EXPECT_EQ(g.size(), static_cast<Eigen::Index>(net.param_count()));
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

// Each layer kind on its own, both passes of batch norm, parameter and input
// gradients against central differences.
TEST(NetworkGradients, EveryLayerKindMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  const std::vector<LayerSpec> kinds{{LayerKind::fully_connected, 0, 4},
                                     {LayerKind::batch_norm},
                                     {LayerKind::leaky_relu, 0, 0, 0.2},
                                     {LayerKind::tanh}};
  for (const auto& spec : kinds) {
    for (Mode mode : {Mode::inference, Mode::training}) {
      for (int trial = 0; trial < 10; ++trial) {
        Network net = single_layer(spec, 5);
        net.initialize(rng);
        std::normal_distribution<double> n01;
        for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] = n01(rng);
        if (spec.kind == LayerKind::batch_norm)
          for (Eigen::Index i = 5; i < 10; ++i) net.bn_stats()[i] = 0.5 + std::abs(n01(rng));
        const Matrix x = random_matrix(rng, 5, 6);
        const Matrix w = random_matrix(rng, net.output_dim(), 6);

        Tape tape;
        net.forward_batch(x, mode, &tape);
        Vector gp = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
        const Matrix gx = net.backward(tape, w, gp);

        if (gp.size() > 0) {
          const Vector fd = oracle::central_difference(
              [&](const Vector& p) {
                Network n2 = net;
                n2.params() = p;
                return weighted_output(n2, x, w, mode);
              },
              net.params(), kStep);
          EXPECT_LT(oracle::max_rel_error(gp, fd, kFloor), 1e-4);
        }
        const Vector fdx = oracle::central_difference(
            [&](const Vector& flat) {
              return weighted_output(net, Eigen::Map<const Matrix>(flat.data(), 5, 6), w, mode);
            },
            Eigen::Map<const Vector>(x.data(), x.size()), kStep);
        EXPECT_LT(oracle::max_rel_error(Eigen::Map<const Vector>(gx.data(), gx.size()), fdx, kFloor), 1e-4);
      }
    }
  }
}

TEST(NetworkGradients, FullActorAndCriticMatchFiniteDifferences) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    for (bool is_actor : {true, false}) {
      Network net = is_actor ? Network::actor(12, 8) : Network::critic(13, 8);
      net.initialize(rng);
      const Matrix x = random_matrix(rng, net.input_dim(), 8);
      const Matrix w = random_matrix(rng, 1, 8);
      for (Mode mode : {Mode::inference, Mode::training}) {
        Tape tape;
        net.forward_batch(x, mode, &tape);
        Vector gp = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
        net.backward(tape, w, gp);
        const Vector fd = oracle::central_difference(
            [&](const Vector& p) {
              Network n2 = net;
              n2.params() = p;
              return weighted_output(n2, x, w, mode);
            },
            net.params(), kStep);
        EXPECT_LT(oracle::max_rel_error(gp, fd, kFloor), 1e-4) << (is_actor ? "actor" : "critic");
      }
    }
  }
}

TEST(NetworkGradients, AbstractBoundsMatchFiniteDifferences) {
  std::mt19937_64 rng(44);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    Network net = Network::actor(6, 6);
    net.initialize(rng);
    for (Eigen::Index i = 0; i < net.bn_stats().size() / 2; ++i) net.bn_stats()[i] = 0.3 * n01(rng);
    const Box box = oracle::random_box(rng, 6, 0.4);
    const double wl = n01(rng), wh = n01(rng);
    AbstractTape tape;
    net.forward_abstract(box, &tape);
    Vector gp = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
    net.backward_abstract(tape, wl, wh, gp);
    const Vector fd = oracle::central_difference(
        [&](const Vector& p) {
          Network n2 = net;
          n2.params() = p;
          const Interval o = n2.forward_abstract(box);
          return wl * o.lo + wh * o.hi;
        },
        net.params(), kStep);
    EXPECT_LT(oracle::max_rel_error(gp, fd, kFloor), 1e-4);
  }
}

TEST(NetworkRunningStats, MomentumUpdate) {
  Network net(2, {{LayerKind::batch_norm}});
  net.set_bn_momentum(0.5);
  Matrix x(2, 2);
  x << 1, 3, -2, 2;
  Tape tape;
  net.forward_batch(x, Mode::training, &tape);
  net.update_running_stats(tape);
  // batch means (2, 0), biased variances (1, 4)
  EXPECT_NEAR(net.bn_stats()[0], 1.0, 1e-15);
  EXPECT_NEAR(net.bn_stats()[1], 0.0, 1e-15);
  EXPECT_NEAR(net.bn_stats()[2], 1.0, 1e-15);
  EXPECT_NEAR(net.bn_stats()[3], 2.5, 1e-15);
}
