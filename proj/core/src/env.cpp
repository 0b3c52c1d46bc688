#include "certcc/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace certcc {

CongestionEnv::CongestionEnv(LinkConfig cfg, EnvOptions opts)
    : cfg_(std::move(cfg)),
      opts_(opts),
      backbone_(opts.cubic),
      encoder_(cfg_.min_rtt_ms, cfg_.monitor_interval_ms),
      noise_rng_(cfg_.noise_seed),
      srtt_ms_(cfg_.min_rtt_ms),
      cwnd_prev_(backbone_.cwnd()) {
  cfg_.validate();
  if (opts_.history < 1) throw std::invalid_argument("history length must be >= 1");
  link_.record_delays = opts_.record_delays;
  extrema_.d_min = cfg_.min_rtt_ms;
  state_ = Vector::Zero(layout().dim());

  // Nothing has been observed at t = 0: the history starts as idle intervals.
  Observation idle;
  idle.m = cfg_.monitor_interval_ms;
  idle.srtt = cfg_.min_rtt_ms;
  idle.avg_rtt = cfg_.min_rtt_ms;
  idle.cwnd_tcp = backbone_.cwnd();
  idle.cwnd_prev = cwnd_prev_;
  last_obs_ = idle;
  const auto f = encoder_.encode(idle);
  for (int h = 0; h < opts_.history; ++h)
    for (int i = 0; i < kFeatureCount; ++i) state_[h * kFeatureCount + i] = f[static_cast<std::size_t>(i)];
}

EnvStep CongestionEnv::step(double action) {
  const double a = std::clamp(action, -1.0, 1.0);
  return step_with_cwnd(apply_action(a, backbone_.cwnd()), false);
}

EnvStep CongestionEnv::step_with_cwnd(double cwnd, bool hold) {
  EnvStep s = run_interval(cwnd, hold);
  push_observation(s.obs);
  return s;
}

EnvStep CongestionEnv::run_interval(double cwnd, bool hold) {
  backbone_.override_cwnd(cwnd);
  const double enforced = backbone_.cwnd();
  cwnd_prev_ = enforced;

  const int ticks = cfg_.monitor_interval_ms;
  for (int t = 0; t < ticks; ++t) {
    const TickEvents ev = tick_link(link_, cfg_, hold ? enforced : backbone_.cwnd());
    if (ev.acked > 0) {
      const double rtt = ev.ack_rtt_sum / static_cast<double>(ev.acked);
      srtt_ms_ = rtt + (srtt_ms_ - rtt) * std::pow(7.0 / 8.0, static_cast<double>(ev.acked));
      backbone_.on_ack(ev.acked, link_.clock_ms, srtt_ms_);
    }
    if (ev.losses_signalled > 0) backbone_.on_loss(link_.clock_ms, srtt_ms_);
    monitor_.record(ev);
  }
  backbone_.on_tick(link_.clock_ms);

  EnvStep s;
  s.cwnd = enforced;
  s.obs = monitor_.observe(cfg_, static_cast<double>(ticks), srtt_ms_, backbone_.cwnd(), enforced,
                           noise_rng_);
  if (!extrema_seeded_) {
    extrema_.thr_max = std::max(1.0, s.obs.thr);
    extrema_seeded_ = true;
  }
  extrema_.thr_max = std::max(extrema_.thr_max, s.obs.thr);
  if (s.obs.thr > 0.0) extrema_.d_min = std::min(extrema_.d_min, s.obs.avg_rtt);
  s.reward = orca_reward(s.obs, extrema_, opts_.zeta, opts_.beta);
  s.done = done();
  last_obs_ = s.obs;
  return s;
}

void CongestionEnv::push_observation(const Observation& obs) {
  const auto f = encoder_.encode(obs);
  const int F = kFeatureCount;
  const int k = opts_.history;
  if (k > 1) {
    Vector shifted = state_.segment(F, (k - 1) * F);
    state_.segment(0, (k - 1) * F) = shifted;
  }
  for (int i = 0; i < F; ++i) state_[(k - 1) * F + i] = f[static_cast<std::size_t>(i)];
}

}  // namespace certcc
