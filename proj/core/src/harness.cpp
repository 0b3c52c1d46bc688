#include "certcc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <set>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace certcc {
namespace {

using json = nlohmann::json;

int worker_count(int requested, std::size_t jobs) {
  unsigned n = requested > 0 ? static_cast<unsigned>(requested) : std::thread::hardware_concurrency();
  n = std::max(1u, n);
  return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(1, jobs)));
}

// Runs fn(i) for i in [0, jobs) on a small pool; results must be written to
// per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t jobs, int threads, const std::function<void(std::size_t)>& fn) {
  const int n = worker_count(threads, jobs);
  if (n <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < jobs; i = next++) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

void add_cert_metrics(Metrics& m, const std::string& name, const std::vector<CertificateReport>& reports) {
  const FccFcs f = aggregate_fcc_fcs(reports);
  m["fcc_" + name] = f.fcc;
  m["fcs_" + name] = f.fcs;
}

json stats_json(const std::map<std::string, MetricStat>& stats) {
  json j = json::object();
  for (const auto& [k, s] : stats) j[k] = {{"mean", s.mean}, {"std", s.std}};
  return j;
}

json property_json(const PropertySpec& p) {
  return {{"kind", to_string(p.kind)}, {"p", p.p}, {"q", p.q}, {"mu", p.mu}, {"epsilon", p.epsilon}};
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  return out;
}

double window_mean(const std::vector<TrainLogRow>& rows, bool tail, std::size_t w,
                   double TrainLogRow::*field) {
  w = std::min(w, rows.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w; ++i) s += rows[tail ? rows.size() - 1 - i : i].*field;
  return w ? s / static_cast<double>(w) : 0.0;
}

}  // namespace

// ---------------------------------------------------------------- traces

std::string to_string(TraceShape shape) {
  switch (shape) {
    case TraceShape::constant: return "constant";
    case TraceShape::square: return "square";
    case TraceShape::ramp_drop: return "ramp_drop";
    case TraceShape::triangle: return "triangle";
  }
  return "?";
}

TraceShape trace_shape_from_string(const std::string& s) {
  for (auto t : {TraceShape::constant, TraceShape::square, TraceShape::ramp_drop, TraceShape::triangle})
    if (s == to_string(t)) return t;
  throw std::invalid_argument("unknown trace shape '" + s + "'");
}

void TraceParams::validate(TraceShape shape) const {
  if (!(lo_mbps > 0.0)) throw std::invalid_argument("trace: lo must be positive");
  if (shape != TraceShape::constant && !(hi_mbps > 0.0)) throw std::invalid_argument("trace: hi must be positive");
  if (!(duration_ms >= 1.0)) throw std::invalid_argument("trace: duration must be >= 1 ms");
  if ((shape == TraceShape::square || shape == TraceShape::ramp_drop) && !(period_ms >= 1.0))
    throw std::invalid_argument("trace: period must be >= 1 ms");
  if (!(resolution_ms >= 1.0)) throw std::invalid_argument("trace: resolution must be >= 1 ms");
  if (mtu < 1) throw std::invalid_argument("trace: mtu must be positive");
}

Trace generate_trace(TraceShape shape, const TraceParams& p) {
  p.validate(shape);
  const double lo = mbps_to_pps(p.lo_mbps, p.mtu);
  const double hi = mbps_to_pps(p.hi_mbps, p.mtu);
  std::vector<TraceSample> s;
  switch (shape) {
    case TraceShape::constant:
      s.push_back({0.0, lo});
      break;
    case TraceShape::square: {
      bool high = false;
      for (double t = 0.0; t < p.duration_ms; t += p.period_ms, high = !high) s.push_back({t, high ? hi : lo});
      break;
    }
    case TraceShape::ramp_drop: {
      const double steps = std::max(1.0, std::floor(p.period_ms / p.resolution_ms));
      for (double start = 0.0; start < p.duration_ms; start += p.period_ms)
        for (int i = 0; i < static_cast<int>(steps); ++i) {
          const double t = start + i * p.resolution_ms;
          if (t >= p.duration_ms) break;
          s.push_back({t, lo + (hi - lo) * static_cast<double>(i) / std::max(1.0, steps - 1.0)});
        }
      break;
    }
    case TraceShape::triangle: {
      const double half = 0.5 * p.duration_ms;
      for (double t = 0.0; t < p.duration_ms; t += p.resolution_ms) {
        const double frac = t <= half ? t / half : (p.duration_ms - t) / half;
        s.push_back({t, lo + (hi - lo) * std::clamp(frac, 0.0, 1.0)});
      }
      break;
    }
  }
  return Trace(std::move(s), p.duration_ms);
}

NamedTrace load_named_trace(const std::filesystem::path& path, int mtu) {
  NamedTrace nt{path.stem().string(), {}, load_trace(path, mtu)};
  nt.category = nt.name.substr(0, nt.name.find('_'));
  return nt;
}

std::vector<NamedTrace> default_eval_traces(double duration_ms, int mtu) {
  std::vector<NamedTrace> out;
  TraceParams sq{6.0, 12.0, 5000.0, duration_ms, 100.0, mtu};
  out.push_back({"square_6_12", "square", generate_trace(TraceShape::square, sq)});
  TraceParams rd{6.0, 24.0, 10000.0, duration_ms, 100.0, mtu};
  out.push_back({"ramp_drop_6_24", "ramp", generate_trace(TraceShape::ramp_drop, rd)});
  TraceParams tr{6.0, 24.0, 0.0, duration_ms, 100.0, mtu};
  out.push_back({"triangle_6_24", "triangle", generate_trace(TraceShape::triangle, tr)});
  return out;
}

// ---------------------------------------------------------------- controllers

Controller Controller::policy(Network net) {
  if (net.input_dim() < 1 || net.output_dim() != 1) throw std::invalid_argument("policy must have one output");
  Controller c;
  c.kind = Kind::policy;
  c.net = std::move(net);
  return c;
}

Controller Controller::oracle(double bdp_scale) {
  if (!(bdp_scale > 0.0)) throw std::invalid_argument("oracle bdp scale must be positive");
  Controller c;
  c.kind = Kind::oracle_bdp;
  c.bdp_scale = bdp_scale;
  return c;
}

Controller Controller::cubic() { return Controller{}; }

std::string Controller::name() const {
  switch (kind) {
    case Kind::policy: return "policy";
    case Kind::oracle_bdp: return "oracle_bdp";
    case Kind::cubic: return "cubic";
  }
  return "?";
}

// ---------------------------------------------------------------- evaluation

void EvalOptions::validate() const {
  if (n_components < 1) throw std::invalid_argument("eval: n_components must be >= 1");
  if (repeats < 1) throw std::invalid_argument("eval: repeats must be >= 1");
  if (!(min_rtt_ms > 0.0)) throw std::invalid_argument("eval: min_rtt must be positive");
  if (!(buffer_bdp > 0.0)) throw std::invalid_argument("eval: buffer_bdp must be positive");
  if (monitor_interval_ms < 1) throw std::invalid_argument("eval: monitor interval must be >= 1 ms");
  if (history < 1) throw std::invalid_argument("eval: history must be >= 1");
  if (noise && !(*noise >= 0.0 && *noise < 1.0)) throw std::invalid_argument("eval: noise must be in [0, 1)");
  property.validate();
}

EvalOptions EvalOptions::from_map(const ConfigMap& map, const EvalOptions& base) {
  static const std::set<std::string> known = {"n_components", "repeats", "seed", "min_rtt_ms",
                                               "buffer_bdp", "monitor_interval_ms", "history", "zeta",
                                               "beta", "noise", "certify", "threads", "property",
                                               "p", "q", "mu", "epsilon"};
  for (const auto& [k, v] : map.values())
    if (!known.count(k)) throw std::invalid_argument("unknown eval key '" + k + "'");
  auto nonneg = [&](const std::string& key, std::int64_t fallback) {
    const std::int64_t v = map.get_int(key, fallback);
    if (v < 0) throw std::invalid_argument("eval key '" + key + "' must be non-negative");
    return v;
  };

  EvalOptions o = base;
  o.n_components = static_cast<std::size_t>(nonneg("n_components", static_cast<std::int64_t>(o.n_components)));
  o.repeats = static_cast<int>(nonneg("repeats", o.repeats));
  o.seed = static_cast<std::uint64_t>(nonneg("seed", static_cast<std::int64_t>(o.seed)));
  o.min_rtt_ms = map.get_double("min_rtt_ms", o.min_rtt_ms);
  o.buffer_bdp = map.get_double("buffer_bdp", o.buffer_bdp);
  o.monitor_interval_ms = static_cast<int>(nonneg("monitor_interval_ms", o.monitor_interval_ms));
  o.history = static_cast<int>(nonneg("history", o.history));
  o.zeta = map.get_double("zeta", o.zeta);
  o.beta = map.get_double("beta", o.beta);
  if (map.has("noise")) {
    const double n = map.get_double("noise", 0.0);
    if (n > 0.0) o.noise = n; else o.noise.reset();
  }
  o.certify = map.get_bool("certify", o.certify);
  o.threads = static_cast<int>(nonneg("threads", o.threads));
  if (map.has("property") || map.has("p") || map.has("q") || map.has("mu") || map.has("epsilon")) {
    ConfigMap pm;
    property_to_map(o.property, pm);
    for (const char* k : {"property", "p", "q", "mu", "epsilon"})
      if (map.has(k)) pm.set(k, map.get_string(k, ""));
    o.property = property_from_map(pm, {o.history, kFeatureCount});
  }
  o.property.layout = {o.history, kFeatureCount};
  o.validate();
  return o;
}

ConfigMap EvalOptions::to_map() const {
  ConfigMap m;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  m.set("n_components", std::to_string(n_components));
  m.set("repeats", std::to_string(repeats));
  m.set("seed", std::to_string(seed));
  m.set("min_rtt_ms", num(min_rtt_ms));
  m.set("buffer_bdp", num(buffer_bdp));
  m.set("monitor_interval_ms", std::to_string(monitor_interval_ms));
  m.set("history", std::to_string(history));
  m.set("zeta", num(zeta));
  m.set("beta", num(beta));
  m.set("noise", num(noise.value_or(0.0)));
  m.set("certify", certify ? "true" : "false");
  m.set("threads", std::to_string(threads));
  property_to_map(property, m);
  return m;
}

LinkConfig EvalOptions::link_for(const Trace& trace) const {
  LinkConfig link;
  link.trace = trace;
  link.min_rtt_ms = min_rtt_ms;
  link.buffer_pkts = std::max(1.0, std::round(buffer_bdp * link.bdp_packets(trace.mean_capacity())));
  link.monitor_interval_ms = monitor_interval_ms;
  return link;
}

RunRecord evaluate_run(const Controller& ctrl, const Trace& trace, const EvalOptions& opts,
                       std::uint64_t noise_seed, bool keep_records) {
  opts.validate();
  LinkConfig link = opts.link_for(trace);
  if (opts.noise && *opts.noise > 0.0) link.noise = NoiseSpec{opts.property.delay_feature, *opts.noise};
  link.noise_seed = noise_seed;

  EnvOptions eo;
  eo.history = opts.history;
  eo.zeta = opts.zeta;
  eo.beta = opts.beta;
  eo.record_delays = true;
  CongestionEnv env(link, eo);

  const bool certify = opts.certify && ctrl.kind == Controller::Kind::policy;
  const bool perf = opts.property.kind == PropertyKind::performance;
  if (ctrl.kind == Controller::Kind::policy && ctrl.net->input_dim() != env.layout().dim())
    throw std::invalid_argument("policy input dimension " + std::to_string(ctrl.net->input_dim()) +
                                " does not match state dimension " + std::to_string(env.layout().dim()));
  PropertySpec spec = opts.property;
  spec.layout = env.layout();

  RunRecord rec;
  std::vector<CertificateReport> large, small, joint, robust;
  double cwnd_sum = 0.0;
  std::size_t step = 0;
  while (!env.done()) {
    switch (ctrl.kind) {
      case Controller::Kind::policy: {
        const Vector& s = env.state();
        const double cwnd_prev = env.cwnd_prev(), cwnd_tcp = env.cwnd_tcp();
        if (keep_records) {
          std::vector<double> row{static_cast<double>(step), cwnd_prev, cwnd_tcp};
          row.insert(row.end(), s.data(), s.data() + s.size());
          rec.state_log.push_back(std::move(row));
        }
        if (certify) {
          if (perf) {
            const auto cert = certify_performance(*ctrl.net, spec, s, cwnd_prev, cwnd_tcp, opts.n_components);
            large.push_back(cert.large);
            small.push_back(cert.small);
            joint.push_back(cert.joint());
            if (keep_records) {
              append_certificate_rows(rec.certificates, step, "large", cert.large);
              append_certificate_rows(rec.certificates, step, "small", cert.small);
            }
          } else {
            robust.push_back(certify_robustness(*ctrl.net, spec, s, cwnd_tcp, opts.n_components));
            if (keep_records) append_certificate_rows(rec.certificates, step, "robustness", robust.back());
          }
        }
        cwnd_sum += env.step(ctrl.net->forward(s)).cwnd;
        break;
      }
      case Controller::Kind::oracle_bdp: {
        const double cap = trace.capacity_at(env.link().clock_ms);
        const double w = std::max(1.0, std::round(ctrl.bdp_scale * cap * opts.min_rtt_ms / 1000.0));
        cwnd_sum += env.step_with_cwnd(w).cwnd;
        break;
      }
      case Controller::Kind::cubic:
        cwnd_sum += env.step_with_cwnd(env.cwnd_tcp(), false).cwnd;
        break;
    }
    ++step;
  }

  const LinkState& ls = env.link();
  Metrics& m = rec.metrics;
  m["utilization"] = ls.capacity_packets > 0.0 ? static_cast<double>(ls.delivered) / ls.capacity_packets : 0.0;
  const auto& d = ls.delivered_delays;
  m["avg_delay_ms"] = d.empty() ? 0.0 : std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  m["p95_delay_ms"] = percentile(d, 0.95);
  m["loss_rate"] = static_cast<double>(ls.dropped) / std::max(1.0, static_cast<double>(ls.sent));
  m["mean_cwnd"] = step ? cwnd_sum / static_cast<double>(step) : 0.0;
  if (certify && step > 0) {
    if (perf) {
      add_cert_metrics(m, "large", large);
      add_cert_metrics(m, "small", small);
      add_cert_metrics(m, "joint", joint);
    } else {
      add_cert_metrics(m, "robustness", robust);
    }
  }
  return rec;
}

std::map<std::string, MetricStat> summarize(const std::vector<Metrics>& runs) {
  std::map<std::string, MetricStat> out;
  if (runs.empty()) return out;
  for (const auto& [k, v] : runs.front()) {
    double s = 0.0;
    for (const auto& r : runs) s += r.at(k);
    const double mean = s / static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& r : runs) var += (r.at(k) - mean) * (r.at(k) - mean);
    out[k] = {mean, runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0};
  }
  return out;
}

double EvalSummary::mean(const std::string& metric) const {
  if (traces.empty()) throw std::runtime_error("evaluation has no traces");
  double s = 0.0;
  for (const auto& t : traces) {
    auto it = t.stats.find(metric);
    if (it == t.stats.end()) throw std::out_of_range("metric '" + metric + "' not reported");
    s += it->second.mean;
  }
  return s / static_cast<double>(traces.size());
}

double EvalSummary::worst_abs_change(const std::string& metric) const {
  double worst = 0.0;
  for (const auto& t : traces) {
    auto it = t.noise_change.find(metric);
    if (it == t.noise_change.end()) throw std::out_of_range("no noise change for '" + metric + "'");
    worst = std::max(worst, std::abs(it->second.delta));
  }
  return worst;
}

EvalSummary evaluate(const Controller& ctrl, const std::vector<NamedTrace>& traces,
                     const EvalOptions& opts, bool keep_records) {
  opts.validate();
  if (traces.empty()) throw std::invalid_argument("evaluate: no traces");
  const bool noisy = opts.noise && *opts.noise > 0.0;
  const auto T = traces.size();
  const auto R = static_cast<std::size_t>(opts.repeats);
  const std::size_t per_trace = R + (noisy ? 1 : 0);

  std::vector<RunRecord> records(T * per_trace);
  parallel_for(records.size(), opts.threads, [&](std::size_t job) {
    const std::size_t t = job / per_trace, r = job % per_trace;
    if (r < R) {
      records[job] = evaluate_run(ctrl, traces[t].trace, opts, opts.seed + r, keep_records && r == 0);
    } else {
      EvalOptions clean = opts;
      clean.noise.reset();
      records[job] = evaluate_run(ctrl, traces[t].trace, clean, opts.seed, false);
    }
  });

  EvalSummary sum;
  sum.controller = ctrl.name();
  sum.options = opts;
  std::map<std::string, std::vector<Metrics>> by_category;
  for (std::size_t t = 0; t < T; ++t) {
    TraceSummary ts;
    ts.name = traces[t].name;
    ts.category = traces[t].category;
    for (std::size_t r = 0; r < R; ++r) ts.runs.push_back(records[t * per_trace + r].metrics);
    ts.stats = summarize(ts.runs);
    if (noisy) {
      const Metrics& clean = records[t * per_trace + R].metrics;
      for (const auto& [k, s] : ts.stats) {
        const double base = clean.at(k);
        const double delta = s.mean - base;
        ts.noise_change[k] = {delta, base != 0.0 ? 100.0 * delta / std::abs(base) : 0.0};
      }
    }
    ts.certificates = std::move(records[t * per_trace].certificates);
    ts.state_log = std::move(records[t * per_trace].state_log);
    auto& cat = by_category[ts.category];
    cat.insert(cat.end(), ts.runs.begin(), ts.runs.end());
    sum.traces.push_back(std::move(ts));
  }
  for (const auto& [c, runs] : by_category) sum.categories[c] = summarize(runs);
  return sum;
}

void write_eval_json(std::ostream& os, const EvalSummary& s) {
  const EvalOptions& o = s.options;
  json j;
  j["schema"] = "certcc-eval/1";
  j["controller"] = s.controller;
  j["options"] = {{"n_components", o.n_components},
                  {"repeats", o.repeats},
                  {"seed", o.seed},
                  {"min_rtt_ms", o.min_rtt_ms},
                  {"buffer_bdp", o.buffer_bdp},
                  {"monitor_interval_ms", o.monitor_interval_ms},
                  {"history", o.history},
                  {"zeta", o.zeta},
                  {"beta", o.beta},
                  {"noise", o.noise ? json(*o.noise) : json(nullptr)},
                  {"certify", o.certify},
                  {"property", property_json(o.property)}};
  json traces = json::array();
  json overall = json::object();
  for (const auto& t : s.traces) {
    json tj;
    tj["name"] = t.name;
    tj["category"] = t.category;
    tj["runs"] = t.runs;
    tj["stats"] = stats_json(t.stats);
    json ch = json::object();
    for (const auto& [k, c] : t.noise_change) ch[k] = {{"delta", c.delta}, {"pct", c.pct}};
    tj["noise_change"] = ch;
    traces.push_back(std::move(tj));
  }
  if (!s.traces.empty())
    for (const auto& [k, st] : s.traces.front().stats) overall[k] = s.mean(k);
  j["traces"] = std::move(traces);
  json cats = json::object();
  for (const auto& [c, st] : s.categories) cats[c] = stats_json(st);
  j["categories"] = std::move(cats);
  j["overall"] = std::move(overall);
  os << j.dump(2) << '\n';
}

void write_eval_csv(std::ostream& os, const EvalSummary& s) {
  os << "trace,category,metric,mean,std,noise_delta,noise_pct\n" << std::setprecision(17);
  for (const auto& t : s.traces)
    for (const auto& [k, st] : t.stats) {
      os << t.name << ',' << t.category << ',' << k << ',' << st.mean << ',' << st.std << ',';
      auto it = t.noise_change.find(k);
      if (it != t.noise_change.end()) os << it->second.delta << ',' << it->second.pct;
      else os << ',';
      os << '\n';
    }
}

void write_state_log(std::ostream& os, const std::vector<std::vector<double>>& log) {
  os << "step,cwnd_prev,cwnd_tcp";
  const std::size_t dim = log.empty() ? 0 : log.front().size() - 3;
  for (std::size_t i = 0; i < dim; ++i) os << ",s" << i;
  os << '\n' << std::setprecision(17);
  for (const auto& row : log) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
}

std::vector<std::vector<double>> read_state_log(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("step,cwnd_prev,cwnd_tcp", 0) != 0)
    throw std::runtime_error("state log: missing or unexpected header");
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<std::vector<double>> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error("state log line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != cols)
      throw std::runtime_error("state log line " + std::to_string(lineno) + ": expected " +
                               std::to_string(cols) + " columns");
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<CertificateRow> certify_state_log(const Network& net, const PropertySpec& spec,
                                              const std::vector<std::vector<double>>& log,
                                              std::size_t n_components) {
  spec.validate();
  std::vector<CertificateRow> rows;
  for (const auto& r : log) {
    if (r.size() != static_cast<std::size_t>(net.input_dim()) + 3)
      throw std::invalid_argument("state log width does not match the network input");
    if (static_cast<int>(r.size() - 3) != spec.layout.dim())
      throw std::invalid_argument("state log width does not match the property layout");
    const auto step = static_cast<std::size_t>(r[0]);
    const Vector s = Eigen::Map<const Vector>(r.data() + 3, static_cast<Eigen::Index>(r.size() - 3));
    if (spec.kind == PropertyKind::performance) {
      const auto cert = certify_performance(net, spec, s, r[1], r[2], n_components);
      append_certificate_rows(rows, step, "large", cert.large);
      append_certificate_rows(rows, step, "small", cert.small);
    } else {
      append_certificate_rows(rows, step, "robustness", certify_robustness(net, spec, s, r[2], n_components));
    }
  }
  return rows;
}

std::map<std::string, FccFcs> audit_certificates(const std::vector<CertificateRow>& rows) {
  std::map<std::string, FccFcs> out;
  std::vector<std::string> cases;
  for (const auto& r : rows)
    if (std::find(cases.begin(), cases.end(), r.case_name) == cases.end()) cases.push_back(r.case_name);
  for (const auto& c : cases) {
    const auto reports = reports_from_rows(rows, c);
    out[c] = aggregate_fcc_fcs(reports);
  }
  if (out.count("large") && out.count("small")) out["joint"] = aggregate_fcc_fcs(reports_from_rows(rows, ""));
  return out;
}

// ---------------------------------------------------------------- sweeps

std::string to_string(CheckpointChoice c) { return c == CheckpointChoice::best ? "best" : "final"; }

CheckpointChoice checkpoint_choice_from_string(const std::string& s) {
  if (s == "best") return CheckpointChoice::best;
  if (s == "final") return CheckpointChoice::final;
  throw std::invalid_argument("checkpoint must be best or final, got '" + s + "'");
}

std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const TrainConfig& base, const std::vector<NamedTrace>& traces,
                            const EvalOptions& eval, CheckpointChoice which,
                            const std::function<void(const std::string&)>& progress) {
  if (param != "lambda" && param != "n_components")
    throw std::invalid_argument("sweep: parameter must be lambda or n_components");
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  const std::string cert_case = eval.property.kind == PropertyKind::performance ? "joint" : "robustness";
  std::vector<SweepRow> rows;
  for (double v : values) {
    TrainConfig cfg = base;
    if (param == "lambda") {
      cfg.lambda = v;
    } else {
      if (v < 1 || v != std::floor(v)) throw std::invalid_argument("sweep: n_components must be a positive integer");
      cfg.n_components = static_cast<int>(v);
    }
    cfg.validate();
    if (progress) progress("training " + param + "=" + std::to_string(v));
    const TrainResult tr = train(cfg);
    if (progress) progress("evaluating " + param + "=" + std::to_string(v));
    const EvalSummary es = evaluate(
        Controller::policy((which == CheckpointChoice::best ? tr.best : tr.final).network("actor")), traces, eval,
        false);

    SweepRow row;
    row.param = param;
    row.value = v;
    row.utilization = es.mean("utilization");
    row.p95_delay_ms = es.mean("p95_delay_ms");
    if (eval.certify) {
      row.fcc = es.mean("fcc_" + cert_case);
      row.fcs = es.mean("fcs_" + cert_case);
    }
    double rate = 0.0;
    for (const auto& r : tr.log) rate += r.epoch_rate;
    row.epoch_rate = tr.log.empty() ? 0.0 : rate / static_cast<double>(tr.log.size());
    row.reward_verifier = window_mean(tr.log, true, static_cast<std::size_t>(cfg.log_window),
                                      &TrainLogRow::reward_verifier);
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "param,value,utilization,p95_delay_ms,fcc,fcs,epoch_rate,reward_verifier\n" << std::setprecision(17);
  for (const auto& r : rows)
    os << r.param << ',' << r.value << ',' << r.utilization << ',' << r.p95_delay_ms << ',' << r.fcc << ','
       << r.fcs << ',' << r.epoch_rate << ',' << r.reward_verifier << '\n';
}

// ---------------------------------------------------------------- runs

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

}  // namespace

void save_train_run(const std::filesystem::path& dir, const TrainConfig& cfg, const TrainResult& result) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / RunFiles::config);
    cfg.to_map().write(os);
  }
  {
    auto os = open_out(dir / RunFiles::train_log);
    write_train_log(os, result.log);
  }
  save_checkpoint(result.best, dir / RunFiles::best_checkpoint);
  save_checkpoint(result.final, dir / RunFiles::final_checkpoint);
}

void save_eval_run(const std::filesystem::path& dir, const EvalSummary& summary) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / RunFiles::eval_json);
    write_eval_json(os, summary);
  }
  {
    auto os = open_out(dir / RunFiles::eval_csv);
    write_eval_csv(os, summary);
  }
  for (const auto& t : summary.traces) {
    if (!t.certificates.empty()) {
      std::filesystem::create_directories(dir / RunFiles::certificates_dir);
      auto os = open_out(dir / RunFiles::certificates_dir / (safe_name(t.name) + ".csv"));
      write_certificate_csv(os, t.certificates);
    }
    if (!t.state_log.empty()) {
      std::filesystem::create_directories(dir / RunFiles::states_dir);
      auto os = open_out(dir / RunFiles::states_dir / (safe_name(t.name) + ".csv"));
      write_state_log(os, t.state_log);
    }
  }
}

std::string build_report(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("run directory not found: " + dir.string());
  const bool has_train = fs::exists(dir / RunFiles::train_log);
  const bool has_eval = fs::exists(dir / RunFiles::eval_json);
  if (!has_train && !has_eval)
    throw std::runtime_error("no " + std::string(RunFiles::train_log) + " or " + RunFiles::eval_json +
                             " in " + dir.string());

  json report;
  report["schema"] = "certcc-report/1";
  report["config"] = json::object();
  if (fs::exists(dir / RunFiles::config)) {
    const ConfigMap cfg = ConfigMap::load(dir / RunFiles::config);
    for (const auto& [k, v] : cfg.values()) report["config"][k] = v;
  }
  report["train"] = nullptr;
  report["eval"] = nullptr;
  report["audit"] = json::object();

  if (has_train) {
    std::ifstream is(dir / RunFiles::train_log);
    const auto rows = read_train_log(is);
    if (rows.empty()) throw std::runtime_error("train log is empty");
    const std::size_t w = std::max<std::size_t>(1, rows.size() / 10);
    json t;
    t["epochs"] = rows.size();
    t["window"] = w;
    for (auto [name, field] : {std::pair{"reward_raw", &TrainLogRow::reward_raw},
                               std::pair{"reward_verifier", &TrainLogRow::reward_verifier},
                               std::pair{"reward_mixed", &TrainLogRow::reward_mixed}})
      t[name] = {{"first", window_mean(rows, false, w, field)}, {"last", window_mean(rows, true, w, field)}};
    double rate = 0.0;
    for (const auto& r : rows) rate += r.epoch_rate;
    t["mean_epoch_rate"] = rate / static_cast<double>(rows.size());
    t["wallclock_s"] = rows.back().wallclock;
    report["train"] = std::move(t);

    auto os = open_out(dir / RunFiles::report_train_csv);
    os << "epoch,metric,value\n" << std::setprecision(17);
    for (const auto& r : rows) {
      os << r.epoch << ",reward_raw," << r.reward_raw << '\n';
      os << r.epoch << ",reward_verifier," << r.reward_verifier << '\n';
      os << r.epoch << ",reward_mixed," << r.reward_mixed << '\n';
      os << r.epoch << ",epoch_rate," << r.epoch_rate << '\n';
    }
  }

  if (has_eval) {
    std::ifstream is(dir / RunFiles::eval_json);
    json ev;
    try {
      ev = json::parse(is);
    } catch (const json::exception& e) {
      throw std::runtime_error(std::string("malformed eval.json: ") + e.what());
    }
    if (!ev.contains("traces") || !ev["traces"].is_array() || ev["traces"].empty())
      throw std::runtime_error("evaluation has no traces");

    auto os = open_out(dir / RunFiles::report_eval_csv);
    os << "trace,category,metric,mean,std\n" << std::setprecision(17);
    for (const auto& t : ev["traces"]) {
      const std::string name = t.at("name");
      for (const auto& [k, st] : t.at("stats").items())
        os << name << ',' << t.at("category").get<std::string>() << ',' << k << ','
           << st.at("mean").get<double>() << ',' << st.at("std").get<double>() << '\n';

      const fs::path cert = dir / RunFiles::certificates_dir / (safe_name(name) + ".csv");
      if (!fs::exists(cert)) continue;
      std::ifstream cs(cert);
      const auto rows = read_certificate_csv(cs);
      json a = json::object();
      bool consistent = true;
      const auto& run0 = t.at("runs").at(0);
      for (const auto& [c, f] : audit_certificates(rows)) {
        a[c] = {{"fcc", f.fcc}, {"fcs", f.fcs}};
        const std::string kf = "fcc_" + c, ks = "fcs_" + c;
        if (!run0.contains(kf) || std::abs(run0.at(kf).get<double>() - f.fcc) > 1e-12 ||
            !run0.contains(ks) || std::abs(run0.at(ks).get<double>() - f.fcs) > 1e-12)
          consistent = false;
      }
      a["consistent"] = consistent;
      report["audit"][name] = std::move(a);
    }
    report["eval"] = std::move(ev);
  }

  const std::string text = report.dump(2) + "\n";
  auto os = open_out(dir / RunFiles::report_json);
  os << text;
  return text;
}

}  // namespace certcc
