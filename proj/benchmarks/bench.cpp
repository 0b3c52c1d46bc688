#include <benchmark/benchmark.h>

#include <random>

#include "certcc/certifier.hpp"
#include "certcc/env.hpp"
#include "certcc/network.hpp"
#include "certcc/trainer.hpp"

using namespace certcc;

namespace {

Network make_actor(int dim, int hidden) {
  std::mt19937_64 rng(1);
  Network net = Network::actor(dim, hidden);
  net.initialize(rng);
  return net;
}

Vector state(int dim) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Vector::NullaryExpr(dim, [&] { return u(rng); });
}

}  // namespace

static void BM_ConcreteForward(benchmark::State& st) {
  const int hidden = static_cast<int>(st.range(0));
  const Network net = make_actor(60, hidden);
  const Vector s = state(60);
  for (auto _ : st) benchmark::DoNotOptimize(net.forward(s));
}
BENCHMARK(BM_ConcreteForward)->Arg(32)->Arg(64)->Arg(256);

static void BM_AbstractForward(benchmark::State& st) {
  const int hidden = static_cast<int>(st.range(0));
  const Network net = make_actor(60, hidden);
  const Box box(state(60), Vector::Constant(60, 0.01));
  for (auto _ : st) benchmark::DoNotOptimize(net.forward_abstract(box));
}
BENCHMARK(BM_AbstractForward)->Arg(32)->Arg(64)->Arg(256);

static void BM_CertifyPerformance(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const StateLayout layout{10, kFeatureCount};
  const Network net = make_actor(layout.dim(), 64);
  const PropertySpec spec = PropertySpec::performance(0.75, 0.25, layout);
  const Vector s = state(layout.dim());
  for (auto _ : st) benchmark::DoNotOptimize(certify_performance(net, spec, s, 50, 60, n));
}
BENCHMARK(BM_CertifyPerformance)->Arg(1)->Arg(5)->Arg(10)->Arg(50);

static void BM_CertifiedBoundLoss(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const StateLayout layout{10, kFeatureCount};
  const Network net = make_actor(layout.dim(), 64);
  const PropertySpec spec = PropertySpec::performance(0.75, 0.25, layout);
  const Vector s = state(layout.dim());
  Vector g = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
  for (auto _ : st) benchmark::DoNotOptimize(certified_bound_loss(net, spec, s, 50, 60, n, 1.0, g));
}
BENCHMARK(BM_CertifiedBoundLoss)->Arg(1)->Arg(5)->Arg(10);

static void BM_LinkTick(benchmark::State& st) {
  LinkConfig cfg;
  cfg.trace = Trace::constant(mbps_to_pps(24, 1500), 1e12);
  cfg.buffer_pkts = 160;
  LinkState ls;
  for (auto _ : st) benchmark::DoNotOptimize(tick_link(ls, cfg, 120));
}
BENCHMARK(BM_LinkTick);

static void BM_EnvStep(benchmark::State& st) {
  LinkConfig cfg;
  cfg.trace = Trace::constant(mbps_to_pps(24, 1500), 1e12);
  cfg.buffer_pkts = 160;
  CongestionEnv env(cfg, EnvOptions{});
  for (auto _ : st) benchmark::DoNotOptimize(env.step(0.1));
}
BENCHMARK(BM_EnvStep);

static void BM_LearnerStep(benchmark::State& st) {
  TrainConfig cfg;
  cfg.hidden = 64;
  cfg.batch_size = 128;
  cfg.lambda = 0.25;
  std::mt19937_64 rng(3);
  Td3Learner learner(cfg, rng);
  ReplayBuffer rb(1024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1024; ++i) {
    Transition t;
    t.state = state(cfg.layout().dim());
    t.next_state = t.state;
    t.action = 2 * u(rng) - 1;
    t.reward_raw = u(rng);
    t.cwnd_prev = 50;
    t.cwnd_tcp = 60;
    rb.push(std::move(t));
  }
  for (auto _ : st) benchmark::DoNotOptimize(learner.step(rb, rng));
}
BENCHMARK(BM_LearnerStep);
BENCHMARK_MAIN();
