#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "certcc/certifier.hpp"
#include "certcc/netsim.hpp"
#include "certcc/network.hpp"
#include "certcc/trainer.hpp"

namespace certcc {

// ---------------------------------------------------------------- traces

enum class TraceShape { constant, square, ramp_drop, triangle };

std::string to_string(TraceShape shape);
TraceShape trace_shape_from_string(const std::string& s);

struct TraceParams {
  double lo_mbps = 6.0;
  double hi_mbps = 12.0;
  double period_ms = 5000.0;  // square: time per level; ramp_drop: ramp length
  double duration_ms = 60000.0;
  double resolution_ms = 100.0;  // sample spacing of the ramps
  int mtu = 1500;

  void validate(TraceShape shape) const;
};

/// constant: lo for the whole duration. square: lo and hi alternating every
/// period. ramp_drop: linear lo -> hi over a period, then back to lo at once.
/// triangle: lo -> hi -> lo over the whole duration.
Trace generate_trace(TraceShape shape, const TraceParams& params);

struct NamedTrace {
  std::string name;
  std::string category;
  Trace trace;
};

/// Category is the file stem up to the first '_'.
NamedTrace load_named_trace(const std::filesystem::path& path, int mtu = 1500);

/// The three fluctuating shapes used for desk-scale evaluation.
std::vector<NamedTrace> default_eval_traces(double duration_ms = 30000.0, int mtu = 1500);

// ---------------------------------------------------------------- controllers

struct Controller {
  enum class Kind { policy, oracle_bdp, cubic };
  Kind kind = Kind::cubic;
  std::optional<Network> net;
  double bdp_scale = 1.0;  // oracle: window = scale * current capacity * min_rtt

  static Controller policy(Network net);
  static Controller oracle(double bdp_scale = 1.0);
  static Controller cubic();
  std::string name() const;
};

// ---------------------------------------------------------------- evaluation

struct EvalOptions {
  std::size_t n_components = 50;
  int repeats = 5;
  std::uint64_t seed = 1;
  double min_rtt_ms = 40.0;
  double buffer_bdp = 2.0;  // relative to the trace's mean capacity
  int monitor_interval_ms = 20;
  int history = 10;
  double zeta = 1.0;
  double beta = 2.0;
  PropertySpec property = PropertySpec::performance(0.75, 0.25);
  std::optional<double> noise;  // uniform relative noise on the delay observation
  bool certify = true;
  int threads = 0;

  void validate() const;
  LinkConfig link_for(const Trace& trace) const;

  /// Overlays the keys present in `map` on `base`; unknown keys are rejected.
  /// `noise = 0` means no noise.
  static EvalOptions from_map(const ConfigMap& map, const EvalOptions& base);
  static EvalOptions from_map(const ConfigMap& map) { return from_map(map, EvalOptions{}); }
  ConfigMap to_map() const;
};

/// Flat metric name -> value. Always contains utilization, avg_delay_ms,
/// p95_delay_ms, loss_rate, mean_cwnd; with certification also fcc_<case> and
/// fcs_<case> for case in {large, small, joint} (performance) or
/// {robustness} (robustness).
using Metrics = std::map<std::string, double>;

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;
};

struct MetricChange {
  double delta = 0.0;  // noisy - clean
  double pct = 0.0;    // 100 * delta / |clean|, 0 when clean is 0
};

struct RunRecord {
  Metrics metrics;
  std::vector<CertificateRow> certificates;
  std::vector<std::vector<double>> state_log;  // step, cwnd_prev, cwnd_tcp, state...
};

/// Runs one controller over one trace.
RunRecord evaluate_run(const Controller& ctrl, const Trace& trace, const EvalOptions& opts,
                       std::uint64_t noise_seed, bool keep_records);

struct TraceSummary {
  std::string name;
  std::string category;
  std::vector<Metrics> runs;
  std::map<std::string, MetricStat> stats;
  std::map<std::string, MetricChange> noise_change;  // only with noise
  std::vector<CertificateRow> certificates;          // first repeat
  std::vector<std::vector<double>> state_log;        // first repeat
};

struct EvalSummary {
  std::string controller;
  EvalOptions options;
  std::vector<TraceSummary> traces;
  std::map<std::string, std::map<std::string, MetricStat>> categories;

  /// Mean over traces of a metric's per-trace mean.
  double mean(const std::string& metric) const;
  /// Largest per-trace |delta| of a noise change (requires noise).
  double worst_abs_change(const std::string& metric) const;
};

/// Repeats use noise seeds seed, seed+1, ...; with noise set the clean run is
/// evaluated as well and per-metric changes are reported.
EvalSummary evaluate(const Controller& ctrl, const std::vector<NamedTrace>& traces,
                     const EvalOptions& opts, bool keep_records = true);

std::map<std::string, MetricStat> summarize(const std::vector<Metrics>& runs);

void write_eval_json(std::ostream& os, const EvalSummary& summary);
void write_eval_csv(std::ostream& os, const EvalSummary& summary);
void write_state_log(std::ostream& os, const std::vector<std::vector<double>>& log);
std::vector<std::vector<double>> read_state_log(std::istream& is);

/// Offline certification of a recorded state log.
std::vector<CertificateRow> certify_state_log(const Network& net, const PropertySpec& spec,
                                              const std::vector<std::vector<double>>& log,
                                              std::size_t n_components);

/// FCC/FCS per case recomputed from dump rows (plus "joint" for performance).
std::map<std::string, FccFcs> audit_certificates(const std::vector<CertificateRow>& rows);

// ---------------------------------------------------------------- sweeps

struct SweepRow {
  std::string param;
  double value = 0.0;
  double utilization = 0.0;
  double p95_delay_ms = 0.0;
  double fcc = 0.0;
  double fcs = 0.0;
  double epoch_rate = 0.0;
  double reward_verifier = 0.0;  // mean over the last log window
};

enum class CheckpointChoice { best, final };

std::string to_string(CheckpointChoice c);
CheckpointChoice checkpoint_choice_from_string(const std::string& s);

/// Trains one model per value of `param` (lambda or n_components) and
/// evaluates each on `traces`. FCS/FCC are the joint (or robustness) values.
std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const TrainConfig& base, const std::vector<NamedTrace>& traces,
                            const EvalOptions& eval, CheckpointChoice which = CheckpointChoice::best,
                            const std::function<void(const std::string&)>& progress = {});

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------- runs

/// Files written into a run directory.
struct RunFiles {
  static constexpr const char* config = "config.txt";
  static constexpr const char* train_log = "train_log.csv";
  static constexpr const char* best_checkpoint = "best.ckpt";
  static constexpr const char* final_checkpoint = "final.ckpt";
  static constexpr const char* eval_json = "eval.json";
  static constexpr const char* eval_csv = "eval.csv";
  static constexpr const char* certificates_dir = "certificates";
  static constexpr const char* states_dir = "states";
  static constexpr const char* sweep_csv = "sweep.csv";
  static constexpr const char* report_json = "report.json";
  static constexpr const char* report_train_csv = "report_train.csv";
  static constexpr const char* report_eval_csv = "report_eval.csv";
};

void save_train_run(const std::filesystem::path& dir, const TrainConfig& cfg, const TrainResult& result);
void save_eval_run(const std::filesystem::path& dir, const EvalSummary& summary);

/// Builds report.json plus tidy CSVs from a run directory and returns the
/// JSON text. Throws when the directory holds neither a train log nor an
/// evaluation with at least one trace.
std::string build_report(const std::filesystem::path& dir);

}  // namespace certcc
