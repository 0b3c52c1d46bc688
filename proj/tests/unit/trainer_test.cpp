#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "certcc/trainer.hpp"
#include "oracles.hpp"

using namespace certcc;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden = 8;
  c.history = 2;
  c.property.layout = c.layout();
  c.actor_count = 2;
  c.batch_size = 16;
  c.warmup_transitions = 40;
  c.total_epochs = 60;
  c.sync_interval = 5;
  c.threads = 1;
  c.episode_ms = 2000;
  c.cert_grad_batch = 4;
  c.log_window = 5;
  return c;
}

Transition random_transition(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Transition t;
  t.state = Vector::NullaryExpr(dim, [&] { return u(rng); });
  t.next_state = Vector::NullaryExpr(dim, [&] { return u(rng); });
  t.action = 2 * u(rng) - 1;
  t.cwnd_prev = 10 + 90 * u(rng);
  t.cwnd_tcp = 10 + 90 * u(rng);
  return t;
}

}  // namespace

TEST(MixedReward, Examples) {
  EXPECT_DOUBLE_EQ(mixed_reward(0.8, 0.4, 0.0), 0.8);
  EXPECT_DOUBLE_EQ(mixed_reward(0.8, 0.4, 1.0), 0.4);
  EXPECT_NEAR(mixed_reward(0.8, 0.4, 0.25), 0.7, 1e-15);
}

TEST(ReplayBuffer, FifoEvictionAndCapacity) {
  ReplayBuffer rb(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.action = i;
    rb.push(t);
    EXPECT_LE(rb.size(), 3u);
  }
  EXPECT_EQ(rb.size(), 3u);
  EXPECT_EQ(rb.at(0).action, 2);
  EXPECT_EQ(rb.at(1).action, 3);
  EXPECT_EQ(rb.at(2).action, 4);
  EXPECT_THROW(rb.at(3), std::out_of_range);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);

  std::mt19937_64 a(5), b(5);
  const auto s1 = rb.sample(10, a), s2 = rb.sample(10, b);
  EXPECT_EQ(s1, s2);
  for (auto i : s1) EXPECT_LT(i, 3u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Adam opt;
  opt.lr = 0.1;
  Vector p = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 0.0;
  opt.step(p, g);
  EXPECT_NEAR(p[0], -0.1, 1e-8);
  EXPECT_NEAR(p[1], 0.1, 1e-8);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_THROW(opt.step(p, Vector::Zero(2)), std::invalid_argument);
}

TEST(TrainConfig, MapRoundTripAndValidation) {
  TrainConfig c = tiny_config();
  c.lambda = 0.125;
  c.property = PropertySpec::robustness(0.05, 0.01, c.layout());
  const TrainConfig back = TrainConfig::from_map(c.to_map());
  EXPECT_EQ(back.to_map().values(), c.to_map().values());
  EXPECT_EQ(back.property.kind, PropertyKind::robustness);

  ConfigMap bad = c.to_map();
  bad.set("lamda", "0.3");
  EXPECT_THROW(TrainConfig::from_map(bad), std::invalid_argument);
  for (auto [k, v] : {std::pair{"lambda", "1.5"}, std::pair{"gamma", "1.2"}, std::pair{"batch_size", "0"},
                      std::pair{"n_components", "0"}, std::pair{"tau", "x"}, std::pair{"p", "0.1"}}) {
    ConfigMap m;
    m.set(k, v);
    EXPECT_THROW(TrainConfig::from_map(m), std::invalid_argument) << k;
  }
}

TEST(TrainingLink, SampledWithinRanges) {
  const TrainConfig c = tiny_config();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const LinkConfig l = sample_training_link(c, rng);
    const double mbps = pps_to_mbps(l.trace.capacity_at(0), l.mtu);
    EXPECT_GE(mbps, c.bw_min_mbps - 1e-9);
    EXPECT_LE(mbps, c.bw_max_mbps + 1e-9);
    EXPECT_GE(l.min_rtt_ms, c.rtt_min_ms);
    EXPECT_LE(l.min_rtt_ms, c.rtt_max_ms);
    EXPECT_NEAR(l.buffer_pkts, std::max(2.0, std::round(2 * l.bdp_packets(l.trace.capacity_at(0)))), 1e-9);
  }
}

TEST(Rollout, DeterministicWithFixedSeed) {
  TrainConfig c = tiny_config();
  c.exploration_noise = 0.0;
  std::mt19937_64 rng(1);
  Network actor = Network::actor(c.layout().dim(), c.hidden);
  actor.initialize(rng);
  LinkConfig link;
  link.trace = Trace::constant(1000, 60000);
  const auto a = actor_rollout(link, actor, c, 50, 7);
  const auto b = actor_rollout(link, actor, c, 50, 7);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].state, b[i].state);
    EXPECT_EQ(a[i].action, b[i].action);
    EXPECT_EQ(a[i].reward_raw, b[i].reward_raw);
    EXPECT_EQ(a[i].reward_verifier, b[i].reward_verifier);
    EXPECT_DOUBLE_EQ(a[i].action, actor.forward(a[i].state));
    EXPECT_DOUBLE_EQ(a[i].reward_verifier,
                     verifier_reward(actor, c.property, a[i].state, a[i].cwnd_prev, a[i].cwnd_tcp,
                                     static_cast<std::size_t>(c.n_components)));
  }
}

TEST(Rollout, FullEpisodeHasDurationOverIntervalSteps) {
  TrainConfig c = tiny_config();
  std::mt19937_64 rng(1);
  Network actor = Network::actor(c.layout().dim(), c.hidden);
  actor.initialize(rng);
  LinkConfig link;
  link.trace = Trace::constant(1000, 60000);
  const auto t = actor_rollout(link, actor, c, 3000, 1);
  ASSERT_EQ(t.size(), 3000u);
  EXPECT_TRUE(t.back().done);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) EXPECT_FALSE(t[i].done);
}

TEST(Td3Learner, GammaZeroZeroRewardCriticLossIsMeanSquaredQ) {
  TrainConfig c = tiny_config();
  c.gamma = 0.0;
  c.policy_delay = 1000;
  std::mt19937_64 rng(2);
  Td3Learner learner(c, rng);
  learner.critic2 = learner.critic1;
  ReplayBuffer rb(64);
  for (int i = 0; i < 64; ++i) rb.push(random_transition(rng, c.layout().dim()));

  std::mt19937_64 sample_rng(10), peek_rng(10);
  const auto idx = rb.sample(static_cast<std::size_t>(c.batch_size), peek_rng);
  double mean_q2 = 0.0;
  for (auto i : idx) {
    Vector x(c.layout().dim() + 1);
    x << rb.at(i).state, rb.at(i).action;
    const double q = learner.critic1.forward(x);
    mean_q2 += q * q / static_cast<double>(idx.size());
  }
  const LearnerDiagnostics d = learner.step(rb, sample_rng);
  EXPECT_NEAR(d.critic_loss, mean_q2, 1e-12 * std::max(1.0, mean_q2));
  EXPECT_TRUE(std::isfinite(d.critic_loss));
  EXPECT_TRUE(learner.critic1.all_finite());
}

TEST(Td3Learner, BellmanTargetsOfTerminalTransitionsAreRewards) {
  TrainConfig c = tiny_config();
  c.lambda = 0.5;
  std::mt19937_64 rng(4);
  Td3Learner learner(c, rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 5; ++i) {
    Transition t = random_transition(rng, c.layout().dim());
    t.reward_raw = 0.2 * i;
    t.reward_verifier = 1.0;
    t.done = true;
    ts.push_back(t);
  }
  std::vector<const Transition*> batch;
  for (const auto& t : ts) batch.push_back(&t);
  const Vector y = learner.bellman_targets(batch, rng);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(y[i], mixed_reward(0.2 * i, 1.0, 0.5));
}

TEST(Td3Learner, PolyakBoundaries) {
  TrainConfig c = tiny_config();
  std::mt19937_64 rng(6);
  Td3Learner learner(c, rng);
  std::normal_distribution<double> n01;
  for (Network* n : {&learner.actor, &learner.critic1, &learner.critic2})
    for (Eigen::Index i = 0; i < n->params().size(); ++i) n->params()[i] += n01(rng);
  const Vector before = learner.actor_target.params();
  learner.soft_update(0.0);
  EXPECT_EQ(learner.actor_target.params(), before);
  learner.soft_update(1.0);
  EXPECT_EQ(learner.actor_target.params(), learner.actor.params());
  EXPECT_EQ(learner.critic1_target.params(), learner.critic1.params());
  EXPECT_EQ(learner.critic2_target.params(), learner.critic2.params());
  EXPECT_EQ(learner.actor_target.bn_stats(), learner.actor.bn_stats());
}

TEST(CertifiedBoundLoss, ZeroWhenCertifiedAndGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const StateLayout layout{2, kFeatureCount};
  for (PropertySpec spec : {PropertySpec::performance(0.75, 0.25, layout),
                            PropertySpec::robustness(0.05, 0.01, layout)}) {
    int nonzero = 0;
    for (int trial = 0; trial < 20; ++trial) {
      Network actor = Network::actor(layout.dim(), 6);
      actor.initialize(rng);
      std::normal_distribution<double> n01;
      for (Eigen::Index i = 0; i < actor.params().size(); ++i) actor.params()[i] += 0.5 * n01(rng);
      const Transition t = random_transition(rng, layout.dim());
      Vector g = Vector::Zero(static_cast<Eigen::Index>(actor.param_count()));
      const double loss = certified_bound_loss(actor, spec, t.state, t.cwnd_prev, t.cwnd_tcp, 3, 1.0, g);
      EXPECT_GE(loss, 0.0);
      if (loss == 0.0) {
        EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
        continue;
      }
      ++nonzero;
      const Vector fd = oracle::central_difference(
          [&](const Vector& p) {
            Network a2 = actor;
            a2.params() = p;
            Vector unused = Vector::Zero(p.size());
            return certified_bound_loss(a2, spec, t.state, t.cwnd_prev, t.cwnd_tcp, 3, 1.0, unused);
          },
          actor.params(), 1e-6);
      EXPECT_LT(oracle::max_rel_error(g, fd, 1e-5), 1e-3);
    }
    EXPECT_GT(nonzero, 0);
  }

  // A policy that always keeps the previous window certifies the performance
  // property at every split, so the hinge vanishes.
  Network keep(layout.dim(), {{LayerKind::fully_connected, 0, 1}, {LayerKind::tanh}});
  keep.params().setZero();
  Vector g = Vector::Zero(static_cast<Eigen::Index>(keep.param_count()));
  EXPECT_EQ(certified_bound_loss(keep, PropertySpec::performance(0.75, 0.25, layout),
                                 Vector::Constant(layout.dim(), 0.3), 50, 50, 5, 1.0, g),
            0.0);
}

TEST(Train, ReproducibleAndThreadIndependent) {
  TrainConfig c = tiny_config();
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  c.threads = 2;
  const TrainResult t = train(c);
  ASSERT_EQ(a.log.size(), static_cast<std::size_t>(c.total_epochs));
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].reward_raw, b.log[i].reward_raw);
    EXPECT_EQ(a.log[i].reward_verifier, b.log[i].reward_verifier);
    EXPECT_EQ(a.log[i].reward_raw, t.log[i].reward_raw);
    EXPECT_EQ(a.log[i].reward_mixed, t.log[i].reward_mixed);
    EXPECT_GT(a.log[i].epoch_rate, 0.0);
  }
  EXPECT_EQ(a.final.network("actor").params(), t.final.network("actor").params());
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_TRUE(a.final.has_network("critic2_target"));
  EXPECT_EQ(a.final.config_value("lambda"), c.to_map().get_string("lambda", ""));
}

TEST(TrainLog, CsvRoundTrip) {
  std::vector<TrainLogRow> rows{{0, 0.5, 0.25, 0.4375, 12.5, 0.08}, {1, -0.1, 1.0, 0.175, 13.0, 0.16}};
  std::stringstream ss;
  write_train_log(ss, rows);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "epoch,reward_raw,reward_verifier,reward_mixed,epoch_rate,wallclock");
  ss.seekg(0);
  const auto back = read_train_log(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].reward_raw, -0.1);
  EXPECT_EQ(back[1].wallclock, 0.16);
}
