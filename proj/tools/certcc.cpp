#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "certcc/harness.hpp"

namespace fs = std::filesystem;
using namespace certcc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Config keys prefixed with "eval." configure evaluation; the rest train.
struct SplitConfig {
  ConfigMap train;
  ConfigMap eval;
};

SplitConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigMap all;
  if (!path.empty()) all = ConfigMap::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    all.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  SplitConfig out;
  for (const auto& [k, v] : all.values()) {
    if (k.rfind("eval.", 0) == 0)
      out.eval.set(k.substr(5), v);
    else
      out.train.set(k, v);
  }
  return out;
}

ConfigMap checkpoint_config(const Checkpoint& ckpt) {
  ConfigMap m;
  for (const auto& [k, v] : ckpt.config) m.set(k, v);
  return m;
}

std::vector<NamedTrace> gather_traces(const std::vector<std::string>& paths, double duration_ms, int mtu) {
  if (paths.empty()) return default_eval_traces(duration_ms, mtu);
  std::vector<NamedTrace> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".trace") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw std::runtime_error("no .trace files in " + p);
      for (const auto& f : files) out.push_back(load_named_trace(f, mtu));
    } else {
      out.push_back(load_named_trace(p, mtu));
    }
  }
  return out;
}

std::string fixed(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

void print_summary(const EvalSummary& s) {
  std::cout << "controller " << s.controller << "\n";
  for (const auto& t : s.traces) {
    std::cout << "  " << t.name;
    for (const auto& [k, st] : t.stats) std::cout << "  " << k << "=" << fixed(st.mean) << "+-" << fixed(st.std);
    std::cout << "\n";
    for (const auto& [k, ch] : t.noise_change)
      if (k == "utilization" || k.rfind("fcs_", 0) == 0)
        std::cout << "    noise " << k << " delta=" << fixed(ch.delta) << " pct=" << fixed(ch.pct, 1) << "\n";
  }
}

// ---------------------------------------------------------------- gen-traces

struct GenTracesArgs {
  std::string out;
  std::string shape = "default";
  std::string name;
  TraceParams params;
};

int run_gen_traces(const GenTracesArgs& a) {
  fs::create_directories(a.out);
  std::vector<NamedTrace> traces;
  if (a.shape == "default") {
    traces = default_eval_traces(a.params.duration_ms, a.params.mtu);
  } else {
    const TraceShape shape = trace_shape_from_string(a.shape);
    std::string name = a.name;
    if (name.empty()) {
      std::ostringstream os;
      os << to_string(shape) << '_' << a.params.lo_mbps << '_' << a.params.hi_mbps;
      name = os.str();
    }
    traces.push_back({name, to_string(shape), generate_trace(shape, a.params)});
  }
  for (const auto& t : traces) {
    const fs::path path = fs::path(a.out) / (t.name + ".trace");
    save_trace(t.trace, path, a.params.mtu);
    std::cout << path.string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  SplitConfig sc = load_config(a.config, a.overrides);
  sc.train.set("seed", std::to_string(a.seed));
  const TrainConfig cfg = TrainConfig::from_map(sc.train);
  const int every = std::max(1, cfg.total_epochs / 20);
  const TrainResult result = train(cfg, [&](const TrainLogRow& r) {
    if (!a.quiet && ((r.epoch + 1) % every == 0 || r.epoch + 1 == cfg.total_epochs))
      std::cerr << "epoch " << r.epoch + 1 << "/" << cfg.total_epochs << " raw=" << fixed(r.reward_raw)
                << " verifier=" << fixed(r.reward_verifier) << " mixed=" << fixed(r.reward_mixed)
                << " rate=" << fixed(r.epoch_rate, 1) << "/s\n";
  });
  save_train_run(a.out, cfg, result);
  std::cout << "best epoch " << result.best_epoch << "\n" << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct CheckpointArgs {
  std::string checkpoint;
  std::string run;
  std::string which = "best";

  Checkpoint load() const {
    if (!checkpoint.empty()) return load_checkpoint(checkpoint);
    if (run.empty()) throw std::invalid_argument("a policy needs --checkpoint or --run");
    const CheckpointChoice c = checkpoint_choice_from_string(which);
    return load_checkpoint(fs::path(run) /
                           (c == CheckpointChoice::best ? RunFiles::best_checkpoint : RunFiles::final_checkpoint));
  }
};

struct EvalArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  CheckpointArgs ckpt;
  std::string controller = "policy";
  double bdp_scale = 1.0;
  std::vector<std::string> traces;
  double duration_ms = 30000.0;
  int mtu = 1500;
  std::string out;
};

// Evaluation defaults follow the checkpoint (history, property), then the
// config's eval.* keys override.
EvalOptions eval_options_for(const SplitConfig& sc, const Checkpoint* ckpt, std::uint64_t seed) {
  EvalOptions base;
  if (ckpt) {
    const TrainConfig tc = TrainConfig::from_map(checkpoint_config(*ckpt));
    base.history = tc.history;
    base.property = tc.property;
    base.monitor_interval_ms = tc.monitor_interval_ms;
    base.zeta = tc.zeta;
    base.beta = tc.beta;
  }
  ConfigMap em = sc.eval;
  em.set("seed", std::to_string(seed));
  return EvalOptions::from_map(em, base);
}

int run_eval(const EvalArgs& a) {
  const SplitConfig sc = load_config(a.config, a.overrides);
  std::optional<Checkpoint> ckpt;
  Controller ctrl;
  if (a.controller == "policy") {
    ckpt = a.ckpt.load();
    ctrl = Controller::policy(ckpt->network("actor"));
  } else if (a.controller == "cubic") {
    ctrl = Controller::cubic();
  } else if (a.controller == "oracle") {
    ctrl = Controller::oracle(a.bdp_scale);
  } else {
    throw std::invalid_argument("controller must be policy, cubic or oracle");
  }
  EvalOptions opts = eval_options_for(sc, ckpt ? &*ckpt : nullptr, a.seed);
  if (!ckpt) opts.certify = false;
  const auto traces = gather_traces(a.traces, a.duration_ms, a.mtu);
  const EvalSummary summary = evaluate(ctrl, traces, opts);
  save_eval_run(a.out, summary);
  print_summary(summary);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
  std::string config;
  std::vector<std::string> overrides;
  CheckpointArgs ckpt;
  std::string states;
  std::string out;
};

int run_certify(const CertifyArgs& a) {
  const SplitConfig sc = load_config(a.config, a.overrides);
  const Checkpoint ckpt = a.ckpt.load();
  const EvalOptions opts = eval_options_for(sc, &ckpt, 1);
  std::ifstream is(a.states);
  if (!is) throw std::runtime_error("cannot open state log " + a.states);
  const auto log = read_state_log(is);
  const auto rows = certify_state_log(ckpt.network("actor"), opts.property, log, opts.n_components);
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw std::runtime_error("cannot write " + a.out);
    write_certificate_csv(os, rows);
  }
  std::cout << "steps " << log.size() << " components " << opts.n_components << "\n";
  for (const auto& [c, f] : audit_certificates(rows))
    std::cout << "  " << c << " fcc=" << fixed(f.fcc, 4) << " fcs=" << fixed(f.fcs, 4) << "\n";
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string param = "lambda";
  std::vector<double> values;
  std::string which = "best";
  std::vector<std::string> traces;
  double duration_ms = 30000.0;
  std::string out;
};

int run_sweep(const SweepArgs& a) {
  SplitConfig sc = load_config(a.config, a.overrides);
  sc.train.set("seed", std::to_string(a.seed));
  const TrainConfig base = TrainConfig::from_map(sc.train);
  EvalOptions eo_base;
  eo_base.history = base.history;
  eo_base.property = base.property;
  eo_base.monitor_interval_ms = base.monitor_interval_ms;
  ConfigMap em = sc.eval;
  em.set("seed", std::to_string(a.seed));
  const EvalOptions eo = EvalOptions::from_map(em, eo_base);
  const auto traces = gather_traces(a.traces, a.duration_ms, 1500);
  const auto rows = sweep(a.param, a.values, base, traces, eo, checkpoint_choice_from_string(a.which),
                          [](const std::string& msg) { std::cerr << msg << "\n"; });
  fs::create_directories(a.out);
  std::ofstream os(fs::path(a.out) / RunFiles::sweep_csv);
  if (!os) throw std::runtime_error("cannot write sweep csv in " + a.out);
  write_sweep_csv(os, rows);
  write_sweep_csv(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certcc: certified learning-based congestion control"};
  app.require_subcommand(1);

  GenTracesArgs gen;
  auto* g = app.add_subcommand("gen-traces", "Write synthetic bandwidth traces");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--shape", gen.shape, "default, constant, square, ramp_drop or triangle")->capture_default_str();
  g->add_option("--name", gen.name, "File stem (default <shape>_<lo>_<hi>)");
  g->add_option("--lo", gen.params.lo_mbps, "Low rate, Mbps")->capture_default_str();
  g->add_option("--hi", gen.params.hi_mbps, "High rate, Mbps")->capture_default_str();
  g->add_option("--period", gen.params.period_ms, "Square level time or ramp length, ms")->capture_default_str();
  g->add_option("--duration", gen.params.duration_ms, "Trace length, ms")->capture_default_str();
  g->add_option("--resolution", gen.params.resolution_ms, "Ramp sample spacing, ms")->capture_default_str();
  g->add_option("--mtu", gen.params.mtu, "Packet size, bytes")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a policy");
  t->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  t->add_option("--set", tr.overrides, "Override a config key (key=value)");
  t->add_option("--seed", tr.seed, "Master seed")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_flag("--quiet", tr.quiet, "No progress output");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a controller on traces");
  e->add_option("--config", ev.config, "key = value config file (eval.* keys)")->check(CLI::ExistingFile);
  e->add_option("--set", ev.overrides, "Override a config key (eval.key=value)");
  e->add_option("--seed", ev.seed, "Noise seed of the first repeat")->required();
  e->add_option("--checkpoint", ev.ckpt.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  e->add_option("--run", ev.ckpt.run, "Run directory (with --which)")->check(CLI::ExistingDirectory);
  e->add_option("--which", ev.ckpt.which, "best or final")->capture_default_str();
  e->add_option("--controller", ev.controller, "policy, cubic or oracle")->capture_default_str();
  e->add_option("--bdp-scale", ev.bdp_scale, "Oracle window in BDPs")->capture_default_str();
  e->add_option("--traces", ev.traces, "Trace files or directories (default: built-in set)");
  e->add_option("--duration", ev.duration_ms, "Length of built-in traces, ms")->capture_default_str();
  e->add_option("--mtu", ev.mtu, "Packet size of trace files, bytes")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->required();

  CertifyArgs ce;
  auto* c = app.add_subcommand("certify", "Certify a recorded state log offline");
  c->add_option("--config", ce.config, "key = value config file (eval.* keys)")->check(CLI::ExistingFile);
  c->add_option("--set", ce.overrides, "Override a config key (eval.key=value)");
  c->add_option("--checkpoint", ce.ckpt.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  c->add_option("--run", ce.ckpt.run, "Run directory (with --which)")->check(CLI::ExistingDirectory);
  c->add_option("--which", ce.ckpt.which, "best or final")->capture_default_str();
  c->add_option("--states", ce.states, "State log CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--out", ce.out, "Certificate CSV to write");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Train and evaluate over lambda or n_components");
  s->add_option("--config", sw.config, "key = value config file")->check(CLI::ExistingFile);
  s->add_option("--set", sw.overrides, "Override a config key (key=value)");
  s->add_option("--seed", sw.seed, "Master seed")->required();
  s->add_option("--param", sw.param, "lambda or n_components")->capture_default_str();
  s->add_option("--values", sw.values, "Values to sweep")->required()->delimiter(',');
  s->add_option("--which", sw.which, "Checkpoint to evaluate: best or final")->capture_default_str();
  s->add_option("--traces", sw.traces, "Trace files or directories (default: built-in set)");
  s->add_option("--duration", sw.duration_ms, "Length of built-in traces, ms")->capture_default_str();
  s->add_option("--out", sw.out, "Output directory")->required();

  std::string report_dir;
  auto* r = app.add_subcommand("report", "Build report.json and tidy CSVs from a run directory");
  r->add_option("--run", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return run_gen_traces(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*c) return run_certify(ce);
    if (*s) return run_sweep(sw);
    if (*r) {
      std::cout << build_report(report_dir) << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
