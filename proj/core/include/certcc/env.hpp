#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "certcc/box.hpp"
#include "certcc/features.hpp"
#include "certcc/netsim.hpp"

namespace certcc {

struct EnvOptions {
  int history = 10;
  double zeta = 1.0;
  double beta = 2.0;
  bool record_delays = false;
  CubicParams cubic;
};

struct EnvStep {
  Observation obs;
  double reward = 0.0;
  double cwnd = 0.0;  // window enforced during the interval
  bool done = false;
};

/// One sender on one bottleneck link, stepped one monitor interval at a time.
///
/// The state is the last `history` encoded observations, oldest first. At
/// t = 0 every history slot holds an idle observation (nothing delivered,
/// srtt = min_rtt), so an episode of D ms has D / monitor_interval steps.
class CongestionEnv {
 public:
  CongestionEnv(LinkConfig cfg, EnvOptions opts);

  const Vector& state() const { return state_; }
  StateLayout layout() const { return {opts_.history, kFeatureCount}; }
  const Observation& last_observation() const { return last_obs_; }

  double cwnd_tcp() const { return backbone_.cwnd(); }
  /// Window enforced during the previous interval.
  double cwnd_prev() const { return cwnd_prev_; }

  /// Scales the backbone window by 2^{2a}, enforces it, runs one interval.
  EnvStep step(double action);
  /// Enforces `cwnd` at the start of the interval. With `hold` the window
  /// stays fixed for the whole interval (fixed or oracle controllers);
  /// otherwise the backbone keeps adjusting it on acks and losses.
  EnvStep step_with_cwnd(double cwnd, bool hold = true);

  bool done() const { return link_.clock_ms >= cfg_.trace.duration_ms(); }

  const LinkState& link() const { return link_; }
  const LinkConfig& config() const { return cfg_; }
  const RewardExtrema& extrema() const { return extrema_; }
  const CubicBackbone& backbone() const { return backbone_; }

 private:
  EnvStep run_interval(double cwnd, bool hold);
  void push_observation(const Observation& obs);

  LinkConfig cfg_;
  EnvOptions opts_;
  LinkState link_;
  CubicBackbone backbone_;
  Monitor monitor_;
  FeatureEncoder encoder_;
  RewardExtrema extrema_;
  std::mt19937_64 noise_rng_;
  double srtt_ms_;
  double cwnd_prev_;
  bool extrema_seeded_ = false;
  Observation last_obs_;
  Vector state_;
};

}  // namespace certcc
