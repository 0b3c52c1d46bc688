#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "certcc/certifier.hpp"
#include "certcc/checkpoint.hpp"
#include "certcc/config.hpp"
#include "certcc/env.hpp"
#include "certcc/network.hpp"

namespace certcc {

struct TrainConfig {
  double lambda = 0.25;
  int n_components = 5;
  double gamma = 0.99;
  int actor_count = 8;
  std::size_t replay_capacity = 100000;
  int batch_size = 256;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double tau = 0.005;
  int policy_delay = 2;
  double exploration_noise = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  int total_epochs = 2000;
  std::uint64_t seed = 1;

  // Network shape.
  int hidden = 256;
  int history = 10;
  double leaky_slope = 0.2;

  // Epoch structure: every actor collects steps_per_epoch transitions, then
  // the learner runs updates_per_epoch steps.
  int steps_per_epoch = 1;
  int updates_per_epoch = 1;
  std::size_t warmup_transitions = 2000;
  int sync_interval = 100;  // learner steps between actor weight refreshes
  int threads = 0;          // 0: one per actor, capped by hardware
  int log_window = 50;      // smoothing for best-checkpoint selection

  // Weight of the direct certified-bound term in the actor loss, scaled by
  // lambda. 0 leaves the verifier signal to the critic alone.
  double cert_grad_weight = 1.0;
  int cert_grad_batch = 16;

  // Training environments.
  double episode_ms = 30000.0;
  double bw_min_mbps = 2.0;
  double bw_max_mbps = 48.0;
  double rtt_min_ms = 10.0;
  double rtt_max_ms = 200.0;
  double buffer_bdp = 2.0;
  int monitor_interval_ms = 20;
  double zeta = 1.0;
  double beta = 2.0;

  PropertySpec property = PropertySpec::performance(0.75, 0.25);

  void validate() const;
  StateLayout layout() const { return {history, kFeatureCount}; }

  /// Unknown keys are rejected.
  static TrainConfig from_map(const ConfigMap& map);
  ConfigMap to_map() const;
};

PropertySpec property_from_map(const ConfigMap& map, StateLayout layout);
void property_to_map(const PropertySpec& spec, ConfigMap& map);

struct Transition {
  Vector state;
  double action = 0.0;
  double reward_raw = 0.0;
  double reward_verifier = 0.0;
  Vector next_state;
  bool done = false;
  // Certificate context for the state, kept for re-verification.
  double cwnd_prev = 0.0;
  double cwnd_tcp = 0.0;
};

/// (1 - lambda) raw + lambda verifier.
double mixed_reward(double raw, double verifier, double lambda);

/// Fixed-capacity FIFO replay memory.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const;  // 0 is the oldest
  std::vector<std::size_t> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // index of the oldest once full
  std::vector<Transition> data_;
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vector m, v;
  std::uint64_t t = 0;

  void step(Vector& params, const Vector& grad);
};

/// Verifier reward of the property at `state` under `actor`.
double verifier_reward(const Network& actor, const PropertySpec& spec, const Vector& state,
                       double cwnd_prev, double cwnd_tcp, std::size_t n_components);

/// Differentiable hinge on the certified action bounds (0 when every
/// component certifies); accumulates d(loss)/d(params) * scale into `grad`.
double certified_bound_loss(const Network& actor, const PropertySpec& spec, const Vector& state,
                             double cwnd_prev, double cwnd_tcp, std::size_t n_components,
                             double scale, Vector& grad);

/// Samples a training link from the configured ranges.
LinkConfig sample_training_link(const TrainConfig& cfg, std::mt19937_64& rng);

/// One rollout actor: owns an environment and a read-only policy snapshot.
class ActorWorker {
 public:
  ActorWorker(const TrainConfig& cfg, std::uint64_t seed, std::function<LinkConfig(std::mt19937_64&)> make_link = {});

  void set_policy(const Network& actor) { policy_ = actor; }
  const Network& policy() const { return *policy_; }

  /// Collects `steps` transitions with exploration noise, or with uniform
  /// random actions in [-1, 1] (replay warmup).
  std::vector<Transition> collect(int steps, bool random_actions = false);

  CongestionEnv& env() { return *env_; }

 private:
  void reset_env();

  TrainConfig cfg_;
  std::mt19937_64 rng_;
  std::function<LinkConfig(std::mt19937_64&)> make_link_;
  std::optional<CongestionEnv> env_;
  std::optional<Network> policy_;
};

/// One actor rollout driven to completion of a fixed number of steps with a
/// given link; used for deterministic tests and quick inspection.
std::vector<Transition> actor_rollout(const LinkConfig& link, const Network& actor,
                                      const TrainConfig& cfg, int steps, std::uint64_t seed);

struct LearnerDiagnostics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double cert_loss = 0.0;
  double reward_raw = 0.0;
  double reward_verifier = 0.0;
  double reward_mixed = 0.0;
  bool actor_updated = false;
};

class Td3Learner {
 public:
  Td3Learner(const TrainConfig& cfg, std::mt19937_64& rng);

  LearnerDiagnostics step(const ReplayBuffer& replay, std::mt19937_64& rng);

  /// target <- tau * online + (1 - tau) * target for every target network.
  void soft_update(double tau);

  /// Critic regression targets for a batch (no parameter changes).
  Vector bellman_targets(const std::vector<const Transition*>& batch, std::mt19937_64& rng) const;

  Network actor, critic1, critic2;
  Network actor_target, critic1_target, critic2_target;
  Adam actor_opt, critic1_opt, critic2_opt;
  std::uint64_t steps = 0;

 private:
  TrainConfig cfg_;
};

/// Critic input: state rows followed by the action row.
Matrix critic_input(const Matrix& states, const Matrix& actions);

struct TrainLogRow {
  int epoch = 0;
  double reward_raw = 0.0;
  double reward_verifier = 0.0;
  double reward_mixed = 0.0;
  double epoch_rate = 0.0;
  double wallclock = 0.0;
};

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows);
std::vector<TrainLogRow> read_train_log(std::istream& is);

struct TrainResult {
  Checkpoint best;
  Checkpoint final;
  std::vector<TrainLogRow> log;
  int best_epoch = -1;
};

/// Runs the actor pool and the learner for cfg.total_epochs.
TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const TrainLogRow&)>& on_epoch = {});

/// Checkpoint holding the networks and the resolved configuration.
Checkpoint make_checkpoint(const TrainConfig& cfg, const Td3Learner& learner);

}  // namespace certcc
