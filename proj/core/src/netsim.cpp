#include "certcc/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace certcc {

// ---------------------------------------------------------------- traces

Trace::Trace(std::vector<TraceSample> samples, double duration_ms)
    : samples_(std::move(samples)), duration_ms_(duration_ms) {
  if (samples_.empty()) throw std::invalid_argument("trace has no samples");
  if (samples_.front().time_ms != 0.0) throw std::invalid_argument("trace must start at time 0");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!(samples_[i].capacity_pps > 0.0))
      throw std::invalid_argument("trace capacity must be positive");
    if (i > 0 && !(samples_[i].time_ms > samples_[i - 1].time_ms))
      throw std::invalid_argument("trace times must be strictly increasing");
  }
  if (!(duration_ms_ > 0.0) || duration_ms_ < samples_.back().time_ms)
    throw std::invalid_argument("trace duration must be positive and cover every sample");
}

Trace Trace::constant(double capacity_pps, double duration_ms) {
  return Trace({{0.0, capacity_pps}}, duration_ms);
}

double Trace::capacity_at(double t_ms) const {
  auto it = std::upper_bound(samples_.begin(), samples_.end(), t_ms,
                             [](double t, const TraceSample& s) { return t < s.time_ms; });
  if (it == samples_.begin()) return samples_.front().capacity_pps;
  return std::prev(it)->capacity_pps;
}

double Trace::packets_between(double t0_ms, double t1_ms) const {
  if (t1_ms <= t0_ms) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const double seg_lo = samples_[i].time_ms;
    const double seg_hi = i + 1 < samples_.size() ? samples_[i + 1].time_ms
                                                  : std::numeric_limits<double>::infinity();
    const double lo = std::max(seg_lo, t0_ms);
    const double hi = std::min(seg_hi, t1_ms);
    if (hi > lo) total += samples_[i].capacity_pps * (hi - lo) / 1000.0;
  }
  return total;
}

double Trace::min_capacity() const {
  double m = samples_.front().capacity_pps;
  for (const auto& s : samples_) m = std::min(m, s.capacity_pps);
  return m;
}

double Trace::peak_capacity(double t0_ms, double t1_ms) const {
  double peak = capacity_at(t0_ms);
  for (const auto& s : samples_)
    if (s.time_ms >= t0_ms && s.time_ms < t1_ms) peak = std::max(peak, s.capacity_pps);
  return peak;
}

double mbps_to_pps(double mbps, int mtu_bytes) { return mbps * 1e6 / (8.0 * mtu_bytes); }
double pps_to_mbps(double pps, int mtu_bytes) { return pps * 8.0 * mtu_bytes / 1e6; }

Trace read_trace(std::istream& is, int mtu_bytes) {
  std::vector<TraceSample> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double t = 0.0, mbps = 0.0;
    if (!(ls >> t)) continue;
    if (!(ls >> mbps))
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": expected <time_ms> <mbps>");
    pts.push_back({t, mbps_to_pps(mbps, mtu_bytes)});
  }
  if (pts.size() < 2) throw std::runtime_error("trace needs at least two lines (start and end)");
  const double duration = pts.back().time_ms;
  pts.pop_back();
  return Trace(std::move(pts), duration);
}

void write_trace(std::ostream& os, const Trace& trace, int mtu_bytes) {
  os.precision(12);
  for (const auto& s : trace.samples()) os << s.time_ms << ' ' << pps_to_mbps(s.capacity_pps, mtu_bytes) << '\n';
  os << trace.duration_ms() << ' ' << pps_to_mbps(trace.samples().back().capacity_pps, mtu_bytes) << '\n';
}

Trace load_trace(const std::filesystem::path& path, int mtu_bytes) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open trace " + path.string());
  return read_trace(is, mtu_bytes);
}

void save_trace(const Trace& trace, const std::filesystem::path& path, int mtu_bytes) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write trace " + path.string());
  write_trace(os, trace, mtu_bytes);
}

// ---------------------------------------------------------------- link

void LinkConfig::validate() const {
  if (!(buffer_pkts >= 1.0)) throw std::invalid_argument("link buffer must be >= 1 packet");
  if (monitor_interval_ms < 1) throw std::invalid_argument("monitor interval must be >= 1 ms");
  if (!(min_rtt_ms > 0.0)) throw std::invalid_argument("min_rtt must be positive");
  if (mtu <= 0) throw std::invalid_argument("mtu must be positive");
  if (noise && !(noise->bound >= 0.0)) throw std::invalid_argument("noise bound must be >= 0");
}

TickEvents tick_link(LinkState& s, const LinkConfig& cfg, double cwnd) {
  TickEvents ev;
  const double now = s.clock_ms;
  const double one_way = 0.5 * cfg.min_rtt_ms;

  while (!s.acks.empty() && s.acks.front().ack_ms <= now) {
    ++ev.acked;
    ev.ack_rtt_sum += cfg.min_rtt_ms + s.acks.front().queuing_delay_ms;
    s.acks.pop_front();
  }
  s.acked += ev.acked;

  while (!s.loss_signals.empty() && s.loss_signals.front() <= now) {
    ++ev.losses_signalled;
    s.loss_signals.pop_front();
  }

  while (!s.to_receiver.empty() && s.to_receiver.front().arrive_ms <= now) {
    const InFlight p = s.to_receiver.front();
    s.to_receiver.pop_front();
    ++ev.delivered;
    ev.delivered_delay_sum += p.queuing_delay_ms;
    if (s.record_delays) s.delivered_delays.push_back(p.queuing_delay_ms);
    s.acks.push_back({p.arrive_ms + one_way, p.queuing_delay_ms});
  }
  s.delivered += ev.delivered;

  const auto window = static_cast<std::size_t>(std::max(1.0, std::floor(cwnd)));
  const auto buffer = static_cast<std::size_t>(std::floor(cfg.buffer_pkts));
  while (s.outstanding() < window) {
    ++ev.sent;
    if (s.queue.size() < buffer) {
      s.queue.push_back(now);
    } else {
      ++ev.dropped;
      s.loss_signals.push_back(now + cfg.min_rtt_ms);
    }
  }
  s.sent += ev.sent;
  s.dropped += ev.dropped;

  const double per_tick = cfg.trace.capacity_at(now) * kTickMs / 1000.0;
  ev.capacity_packets = per_tick;
  s.capacity_packets += per_tick;
  s.service_credit += per_tick;
  while (s.service_credit >= 1.0 && !s.queue.empty()) {
    const double enq = s.queue.front();
    s.queue.pop_front();
    s.to_receiver.push_back({now + one_way, now - enq});
    s.service_credit -= 1.0;
  }
  // An idle link does not bank capacity beyond one packet.
  if (s.queue.empty()) s.service_credit = std::min(s.service_credit, 1.0);

  s.clock_ms += kTickMs;
  return ev;
}

LinkState step_link(LinkState state, const LinkConfig& cfg, double cwnd, int dt_ms) {
  for (int t = 0; t < dt_ms; ++t) tick_link(state, cfg, cwnd);
  return state;
}

// ---------------------------------------------------------------- backbone

CubicBackbone::CubicBackbone(CubicParams params)
    : params_(params), cwnd_(params.initial_cwnd), ssthresh_(params.initial_ssthresh) {
  if (!(params_.initial_cwnd >= 2.0)) throw std::invalid_argument("cubic initial cwnd must be >= 2");
  if (!(params_.max_cwnd >= params_.initial_cwnd)) throw std::invalid_argument("cubic max cwnd below initial cwnd");
}

double CubicBackbone::growth(double t_seconds) const {
  const double d = t_seconds - k_;
  return params_.c * d * d * d + w_max_;
}

void CubicBackbone::start_epoch(double now_ms) {
  epoch_start_ms_ = now_ms;
  if (w_max_ < cwnd_) {
    w_max_ = cwnd_;
    k_ = 0.0;
  } else {
    k_ = std::cbrt((w_max_ - cwnd_) / params_.c);
  }
}

void CubicBackbone::on_ack(std::uint64_t count, double now_ms, double srtt_ms) {
  for (std::uint64_t i = 0; i < count && cwnd_ < params_.max_cwnd; ++i) {
    if (cwnd_ < ssthresh_) {
      cwnd_ += 1.0;
      continue;
    }
    if (epoch_start_ms_ < 0.0) start_epoch(now_ms);
    const double t = (now_ms - epoch_start_ms_ + srtt_ms) / 1000.0;
    const double target = growth(t);
    if (target > cwnd_) {
      cwnd_ = std::min(target, cwnd_ + (target - cwnd_) / cwnd_);
    } else {
      cwnd_ += 0.01 / cwnd_;
    }
  }
  cwnd_ = std::min(cwnd_, params_.max_cwnd);
}

void CubicBackbone::on_loss(double now_ms, double srtt_ms) {
  if (now_ms - last_reduction_ms_ < srtt_ms) return;
  last_reduction_ms_ = now_ms;
  w_max_ = cwnd_;
  cwnd_ = std::max(params_.min_cwnd, params_.beta * cwnd_);
  ssthresh_ = cwnd_;
  epoch_start_ms_ = now_ms;
  k_ = std::cbrt(w_max_ * (1.0 - params_.beta) / params_.c);
}

void CubicBackbone::on_tick(double now_ms) {
  if (cwnd_ >= ssthresh_ && epoch_start_ms_ < 0.0) start_epoch(now_ms);
}

void CubicBackbone::override_cwnd(double cwnd) { cwnd_ = std::clamp(cwnd, 1.0, params_.max_cwnd); }

double apply_action(double action, double cwnd_tcp) {
  return std::max(1.0, std::round(std::exp2(2.0 * action) * cwnd_tcp));
}

// ---------------------------------------------------------------- monitoring

void Monitor::record(const TickEvents& ev) {
  acc_.sent += ev.sent;
  acc_.dropped += ev.dropped;
  acc_.delivered += ev.delivered;
  acc_.delivered_delay_sum += ev.delivered_delay_sum;
  acc_.acked += ev.acked;
  acc_.ack_rtt_sum += ev.ack_rtt_sum;
  acc_.losses_signalled += ev.losses_signalled;
  acc_.capacity_packets += ev.capacity_packets;
}

Observation Monitor::observe(const LinkConfig& cfg, double interval_ms, double srtt_ms,
                             double cwnd_tcp, double cwnd_prev, std::mt19937_64& noise_rng) {
  Observation o;
  const double m = std::max(interval_ms, 1e-9);
  o.thr = static_cast<double>(acc_.delivered) * 1000.0 / m;
  o.loss_rate = static_cast<double>(acc_.dropped) / std::max<double>(1.0, static_cast<double>(acc_.sent));
  o.delay = acc_.delivered > 0 ? acc_.delivered_delay_sum / static_cast<double>(acc_.delivered) : 0.0;
  o.n = static_cast<double>(acc_.acked);
  o.m = interval_ms;
  o.srtt = srtt_ms;
  o.cwnd_tcp = cwnd_tcp;
  o.cwnd_prev = cwnd_prev;

  if (cfg.noise && cfg.noise->bound > 0.0) {
    std::uniform_real_distribution<double> u(-cfg.noise->bound, cfg.noise->bound);
    const double scale = 1.0 + u(noise_rng);
    switch (cfg.noise->feature) {
      case Feature::throughput: o.thr *= scale; break;
      case Feature::loss: o.loss_rate = std::clamp(o.loss_rate * scale, 0.0, 1.0); break;
      case Feature::delay: o.delay *= scale; break;
      case Feature::acks: o.n *= scale; break;
      case Feature::interval: o.m *= scale; break;
      case Feature::inv_rtt: o.srtt *= scale; break;
    }
  }
  o.delay_norm = o.delay / (o.delay + cfg.min_rtt_ms);
  o.avg_rtt = cfg.min_rtt_ms + o.delay;
  acc_ = TickEvents{};
  return o;
}

double orca_reward(const Observation& obs, const RewardExtrema& running, double zeta, double beta) {
  if (!(running.thr_max > 0.0) || !(running.d_min > 0.0))
    throw std::invalid_argument("orca_reward: running extrema must be positive");
  const double lost = obs.loss_rate * obs.thr;
  const double delay = obs.avg_rtt;
  const double effective =
      (running.d_min <= delay && delay <= beta * running.d_min) ? running.d_min : delay;
  if (!(effective > 0.0)) throw std::invalid_argument("orca_reward: delay must be positive");
  return ((obs.thr - zeta * lost) / effective) / (running.thr_max / running.d_min);
}

FeatureEncoder::FeatureEncoder(double min_rtt_ms, double monitor_interval_ms)
    : min_rtt_ms_(min_rtt_ms), monitor_interval_ms_(monitor_interval_ms) {}

std::vector<double> FeatureEncoder::encode(const Observation& obs) {
  thr_max_ = std::max(thr_max_, obs.thr);
  n_max_ = std::max(n_max_, obs.n);
  std::vector<double> f(kFeatureCount);
  f[static_cast<int>(Feature::throughput)] = obs.thr / thr_max_;
  f[static_cast<int>(Feature::loss)] = obs.loss_rate;
  f[static_cast<int>(Feature::delay)] = obs.delay_norm;
  f[static_cast<int>(Feature::acks)] = obs.n / n_max_;
  f[static_cast<int>(Feature::interval)] = obs.m / monitor_interval_ms_;
  f[static_cast<int>(Feature::inv_rtt)] = min_rtt_ms_ / std::max(obs.srtt, min_rtt_ms_);
  return f;
}

}  // namespace certcc
