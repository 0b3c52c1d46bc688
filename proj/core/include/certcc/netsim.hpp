#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "certcc/features.hpp"

namespace certcc {

// ---------------------------------------------------------------- traces

struct TraceSample {
  double time_ms = 0.0;
  double capacity_pps = 0.0;  // packets per second
};

/// Step-hold capacity schedule over [0, duration_ms].
class Trace {
 public:
  Trace(std::vector<TraceSample> samples, double duration_ms);

  static Trace constant(double capacity_pps, double duration_ms);

  double capacity_at(double t_ms) const;
  double duration_ms() const { return duration_ms_; }
  const std::vector<TraceSample>& samples() const { return samples_; }

  /// Packets the link can carry over [t0, t1).
  double packets_between(double t0_ms, double t1_ms) const;
  double mean_capacity() const { return packets_between(0.0, duration_ms_) * 1000.0 / duration_ms_; }
  double min_capacity() const;
  double peak_capacity(double t0_ms, double t1_ms) const;

 private:
  std::vector<TraceSample> samples_;
  double duration_ms_;
};

double mbps_to_pps(double mbps, int mtu_bytes);
double pps_to_mbps(double pps, int mtu_bytes);

/// Text format: one `<time_ms> <capacity_mbps>` pair per line; the last line's
/// time marks the end of the trace. Blank lines and `#` comments are skipped.
Trace read_trace(std::istream& is, int mtu_bytes);
void write_trace(std::ostream& os, const Trace& trace, int mtu_bytes);
Trace load_trace(const std::filesystem::path& path, int mtu_bytes = 1500);
void save_trace(const Trace& trace, const std::filesystem::path& path, int mtu_bytes = 1500);

// ---------------------------------------------------------------- link

struct NoiseSpec {
  Feature feature = Feature::delay;
  double bound = 0.0;  // relative; eta ~ U[-bound, bound]
};

struct LinkConfig {
  Trace trace = Trace::constant(1000.0, 60000.0);
  double min_rtt_ms = 40.0;
  double buffer_pkts = 80.0;
  int mtu = 1500;
  int monitor_interval_ms = 20;
  std::optional<NoiseSpec> noise;
  std::uint64_t noise_seed = 0;

  void validate() const;
  double bdp_packets(double capacity_pps) const { return capacity_pps * min_rtt_ms / 1000.0; }
};

/// Packet departing the bottleneck queue, travelling to the receiver.
struct InFlight {
  double arrive_ms;
  double queuing_delay_ms;
};

/// Delivered packet whose ack is travelling back to the sender.
struct PendingAck {
  double ack_ms;
  double queuing_delay_ms;
};

struct LinkState {
  double clock_ms = 0.0;
  std::deque<double> queue;  // enqueue times, FIFO
  std::deque<InFlight> to_receiver;
  std::deque<PendingAck> acks;
  std::deque<double> loss_signals;  // when the sender learns of each drop
  double service_credit = 0.0;

  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t acked = 0;
  double capacity_packets = 0.0;  // integral of the trace capacity so far

  bool record_delays = false;
  std::vector<double> delivered_delays;  // per-packet queuing delay, if recorded

  std::size_t queued() const { return queue.size(); }
  std::size_t inflight() const { return to_receiver.size(); }
  /// Packets the sender still counts against its window.
  std::size_t outstanding() const {
    return queue.size() + to_receiver.size() + acks.size() + loss_signals.size();
  }
  bool conserved() const { return sent == delivered + dropped + inflight() + queued(); }
};

/// What happened during one tick, as seen by sender and receiver.
struct TickEvents {
  std::uint64_t sent = 0;
  std::uint64_t dropped = 0;
  std::uint64_t delivered = 0;
  double delivered_delay_sum = 0.0;
  std::uint64_t acked = 0;
  double ack_rtt_sum = 0.0;
  std::uint64_t losses_signalled = 0;
  double capacity_packets = 0.0;
};

inline constexpr double kTickMs = 1.0;

/// Advances the link by one 1 ms tick with a fixed window.
TickEvents tick_link(LinkState& state, const LinkConfig& cfg, double cwnd);

/// Runs `dt_ms` ticks with a fixed window and returns the new state.
LinkState step_link(LinkState state, const LinkConfig& cfg, double cwnd, int dt_ms);

// ---------------------------------------------------------------- backbone

struct CubicParams {
  double c = 0.4;
  double beta = 0.7;  // multiplicative decrease factor
  double initial_cwnd = 10.0;
  double initial_ssthresh = std::numeric_limits<double>::infinity();
  double min_cwnd = 2.0;   // floor after a multiplicative decrease
  double max_cwnd = 10000.0;
};

/// Simplified Cubic: W(t) = C (t - K)^3 + W_max with t in seconds since the
/// last reduction, slow start below ssthresh.
class CubicBackbone {
 public:
  explicit CubicBackbone(CubicParams params = {});

  double cwnd() const { return cwnd_; }
  double w_max() const { return w_max_; }
  double k() const { return k_; }
  double ssthresh() const { return ssthresh_; }
  bool in_slow_start() const { return cwnd_ < ssthresh_; }

  /// Cubic window t seconds into the current epoch.
  double growth(double t_seconds) const;

  void on_ack(std::uint64_t count, double now_ms, double srtt_ms);
  /// Reduces at most once per srtt.
  void on_loss(double now_ms, double srtt_ms);
  /// Monitor-interval boundary; starts a congestion-avoidance epoch if needed.
  void on_tick(double now_ms);
  /// The learned controller's window replaces the backbone's.
  void override_cwnd(double cwnd);

 private:
  void start_epoch(double now_ms);

  CubicParams params_;
  double cwnd_;
  double w_max_ = 0.0;
  double k_ = 0.0;
  double ssthresh_;
  double epoch_start_ms_ = -1.0;
  double last_reduction_ms_ = -std::numeric_limits<double>::infinity();
};

/// cwnd = max(1, round(2^{2a} cwnd_tcp)).
double apply_action(double action, double cwnd_tcp);

// ---------------------------------------------------------------- monitoring

struct Observation {
  double thr = 0.0;        // packets/s delivered over the interval
  double loss_rate = 0.0;  // dropped / max(1, sent)
  double delay = 0.0;      // mean queuing delay of delivered packets, ms
  double n = 0.0;          // acks received
  double m = 0.0;          // ms since last report
  double srtt = 0.0;       // ms
  double delay_norm = 0.0; // delay / (delay + min_rtt)
  double avg_rtt = 0.0;    // min_rtt + delay, ms
  double cwnd_tcp = 0.0;
  double cwnd_prev = 0.0;
};

/// Accumulates tick events between two reports.
class Monitor {
 public:
  void record(const TickEvents& ev);
  /// Summarizes the interval and resets the accumulators.
  Observation observe(const LinkConfig& cfg, double interval_ms, double srtt_ms, double cwnd_tcp,
                      double cwnd_prev, std::mt19937_64& noise_rng);

 private:
  TickEvents acc_;
};

struct RewardExtrema {
  double thr_max = 0.0;
  double d_min = 0.0;
};

/// Power-style reward ((thr - zeta l) / delay') / (thr_max / d_min) where l is
/// the lost throughput and delay' = d_min inside [d_min, beta d_min].
double orca_reward(const Observation& obs, const RewardExtrema& running, double zeta, double beta);

/// Maps observations to the controller's per-step feature vector.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(double min_rtt_ms, double monitor_interval_ms);

  /// Updates running maxima, then encodes. Values land in [0, 1] except the
  /// interval feature, which is ~1.
  std::vector<double> encode(const Observation& obs);

 private:
  double min_rtt_ms_;
  double monitor_interval_ms_;
  double thr_max_ = 1.0;
  double n_max_ = 1.0;
};

}  // namespace certcc
