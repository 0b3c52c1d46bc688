#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <stdexcept>

#include "certcc/harness.hpp"

using namespace certcc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("certcc_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(TraceGenerators, SquareAlternatesEveryPeriod) {
  const Trace t = generate_trace(TraceShape::square, {6.0, 12.0, 5000.0, 60000.0, 100.0, 1500});
  EXPECT_EQ(t.duration_ms(), 60000.0);
  for (double ms = 0; ms < 60000; ms += 250) {
    const bool high = static_cast<int>(ms / 5000) % 2 == 1;
    EXPECT_NEAR(pps_to_mbps(t.capacity_at(ms), 1500), high ? 12.0 : 6.0, 1e-12) << ms;
  }
}

TEST(TraceGenerators, TriangleAndRampShapes) {
  const Trace tri = generate_trace(TraceShape::triangle, {6.0, 24.0, 0.0, 10000.0, 100.0, 1500});
  EXPECT_NEAR(pps_to_mbps(tri.capacity_at(0), 1500), 6.0, 1e-12);
  EXPECT_NEAR(pps_to_mbps(tri.capacity_at(5000), 1500), 24.0, 1e-12);
  EXPECT_NEAR(pps_to_mbps(tri.capacity_at(2500), 1500), 15.0, 1e-12);
  EXPECT_NEAR(pps_to_mbps(tri.capacity_at(7550), 1500), 15.0, 1e-12);
  EXPECT_EQ(tri.samples().size(), 100u);

  const Trace rd = generate_trace(TraceShape::ramp_drop, {6.0, 24.0, 10000.0, 30000.0, 100.0, 1500});
  EXPECT_NEAR(pps_to_mbps(rd.capacity_at(9999), 1500), 24.0, 1e-12);
  EXPECT_NEAR(pps_to_mbps(rd.capacity_at(10000), 1500), 6.0, 1e-12);
  for (double ms = 100; ms < 10000; ms += 100) EXPECT_GT(rd.capacity_at(ms), rd.capacity_at(ms - 100));
}

TEST(TraceGenerators, ConstantWritesTwoLines) {
  const Trace t = generate_trace(TraceShape::constant, {12.0, 12.0, 5000.0, 1000.0, 100.0, 1500});
  std::stringstream ss;
  write_trace(ss, t, 1500);
  int lines = 0;
  for (std::string l; std::getline(ss, l);)
    if (!l.empty() && l[0] != '#') ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(TraceGenerators, RejectsBadParameters) {
  EXPECT_THROW(generate_trace(TraceShape::square, {6.0, 12.0, 0.0, 1000.0, 100.0, 1500}), std::invalid_argument);
  EXPECT_THROW(generate_trace(TraceShape::constant, {-1.0, 12.0, 100.0, 1000.0, 100.0, 1500}),
               std::invalid_argument);
  EXPECT_THROW(generate_trace(TraceShape::triangle, {6.0, 12.0, 100.0, 0.0, 100.0, 1500}), std::invalid_argument);
  EXPECT_THROW(trace_shape_from_string("sine"), std::invalid_argument);
  for (auto s : {TraceShape::constant, TraceShape::square, TraceShape::ramp_drop, TraceShape::triangle})
    EXPECT_EQ(trace_shape_from_string(to_string(s)), s);
}

TEST(Controllers, OracleFillsTheLinkWithoutQueueing) {
  EvalOptions opts;
  opts.repeats = 1;
  const auto traces = default_eval_traces(10000.0);
  const EvalSummary s = evaluate(Controller::oracle(), traces, opts, false);
  ASSERT_EQ(s.traces.size(), 3u);
  for (const auto& t : s.traces) {
    EXPECT_GE(t.stats.at("utilization").mean, 0.97) << t.name;
    EXPECT_LT(t.stats.at("avg_delay_ms").mean, 5.0) << t.name;
    EXPECT_EQ(t.stats.count("fcs_joint"), 0u);
  }
}

TEST(Controllers, Construction) {
  EXPECT_THROW(Controller::oracle(0.0), std::invalid_argument);
  EXPECT_THROW(Controller::policy(Network(3, {{LayerKind::fully_connected, 0, 2}})), std::invalid_argument);
  EXPECT_EQ(Controller::cubic().name(), "cubic");
}

TEST(EvalOptions, FromMapOverlaysAndRejectsUnknownKeys) {
  EvalOptions base;
  base.history = 4;
  ConfigMap m;
  m.set("repeats", "2");
  m.set("noise", "0.05");
  m.set("property", "robustness");
  m.set("mu", "0.1");
  m.set("epsilon", "0.02");
  const EvalOptions o = EvalOptions::from_map(m, base);
  EXPECT_EQ(o.history, 4);
  EXPECT_EQ(o.repeats, 2);
  ASSERT_TRUE(o.noise.has_value());
  EXPECT_EQ(*o.noise, 0.05);
  EXPECT_EQ(o.property.kind, PropertyKind::robustness);
  EXPECT_EQ(o.property.mu, 0.1);

  ConfigMap z;
  z.set("noise", "0");
  EXPECT_FALSE(EvalOptions::from_map(z, o).noise.has_value());

  EXPECT_EQ(EvalOptions::from_map(o.to_map()).to_map().values(), o.to_map().values());

  ConfigMap bad;
  bad.set("repeat", "2");
  EXPECT_THROW(EvalOptions::from_map(bad), std::invalid_argument);
  ConfigMap bad2;
  bad2.set("repeats", "0");
  EXPECT_THROW(EvalOptions::from_map(bad2), std::invalid_argument);
}

TEST(CheckpointChoice, Parse) {
  EXPECT_EQ(checkpoint_choice_from_string("best"), CheckpointChoice::best);
  EXPECT_EQ(checkpoint_choice_from_string("final"), CheckpointChoice::final);
  EXPECT_THROW(checkpoint_choice_from_string("last"), std::invalid_argument);
}

TEST(Evaluation, JsonIsDeterministicAndFollowsSchema) {
  std::mt19937_64 rng(3);
  Network actor = Network::actor(6 * 4, 8);
  actor.initialize(rng);
  EvalOptions opts;
  opts.history = 4;
  opts.repeats = 2;
  opts.n_components = 3;
  opts.noise = 0.05;
  const auto traces = default_eval_traces(2000.0);

  std::stringstream a, b;
  write_eval_json(a, evaluate(Controller::policy(actor), traces, opts));
  write_eval_json(b, evaluate(Controller::policy(actor), traces, opts));
  EXPECT_EQ(a.str(), b.str());

  const auto j = nlohmann::json::parse(a.str());
  EXPECT_EQ(j.at("schema"), "certcc-eval/1");
  EXPECT_EQ(j.at("controller"), "policy");
  ASSERT_EQ(j.at("traces").size(), 3u);
  for (const auto& t : j.at("traces")) {
    EXPECT_EQ(t.at("runs").size(), 2u);
    for (const char* k : {"utilization", "avg_delay_ms", "p95_delay_ms", "loss_rate", "mean_cwnd", "fcc_large",
                          "fcs_large", "fcc_small", "fcs_small", "fcc_joint", "fcs_joint"}) {
      EXPECT_TRUE(t.at("stats").contains(k)) << k;
      EXPECT_TRUE(t.at("noise_change").contains(k)) << k;
    }
  }
  for (const char* c : {"square", "ramp", "triangle"}) EXPECT_TRUE(j.at("categories").contains(c)) << c;
  EXPECT_TRUE(j.at("overall").contains("fcs_joint"));
  EXPECT_EQ(j.at("options").at("noise"), 0.05);
}

TEST(Evaluation, OfflineAuditMatchesOnlineCertification) {
  std::mt19937_64 rng(5);
  Network actor = Network::actor(6 * 3, 8);
  actor.initialize(rng);
  EvalOptions opts;
  opts.history = 3;
  opts.repeats = 1;
  opts.n_components = 4;
  opts.property = PropertySpec::performance(0.75, 0.25, {3, kFeatureCount});
  const auto traces = default_eval_traces(2000.0);
  const EvalSummary s = evaluate(Controller::policy(actor), traces, opts);
  const auto& t = s.traces.front();
  const auto offline = certify_state_log(actor, opts.property, t.state_log, opts.n_components);
  ASSERT_EQ(offline.size(), t.certificates.size());
  const auto audit = audit_certificates(offline);
  EXPECT_NEAR(audit.at("joint").fcs, t.stats.at("fcs_joint").mean, 1e-12);
  EXPECT_NEAR(audit.at("large").fcc, t.stats.at("fcc_large").mean, 1e-12);
}

TEST(Reports, RequireAnEvaluationOrATrainLog) {
  EXPECT_THROW(build_report(fs::temp_directory_path() / "certcc_no_such_dir"), std::runtime_error);
  const fs::path empty = scratch_dir("empty");
  EXPECT_THROW(build_report(empty), std::runtime_error);

  const fs::path no_traces = scratch_dir("no_traces");
  std::ofstream(no_traces / RunFiles::eval_json) << R"({"schema":"certcc-eval/1","traces":[]})";
  EXPECT_THROW(build_report(no_traces), std::runtime_error);

  const fs::path ok = scratch_dir("ok");
  EvalOptions opts;
  opts.repeats = 1;
  save_eval_run(ok, evaluate(Controller::cubic(), default_eval_traces(2000.0), opts));
  const auto j = nlohmann::json::parse(build_report(ok));
  EXPECT_EQ(j.at("schema"), "certcc-report/1");
  EXPECT_TRUE(j.at("train").is_null());
  EXPECT_FALSE(j.at("eval").is_null());
  EXPECT_TRUE(fs::exists(ok / RunFiles::report_json));
  EXPECT_EQ(slurp(ok / RunFiles::report_json), build_report(ok));
}

TEST(Cli, ExitCodes) {
  const std::string tool = CERTCC_TOOL_PATH;
  if (tool.empty()) GTEST_SKIP() << "command line tool not built";
  const fs::path dir = scratch_dir("cli");
  auto run = [&](const std::string& args) {
    const int rc = std::system((tool + " " + args + " > " + (dir / "out.txt").string() + " 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("train --out " + (dir / "t").string()), 1);
  EXPECT_EQ(run("train --seed 1 --set bogus=1 --out " + (dir / "t").string()), 1);
  EXPECT_EQ(run("report --run " + (dir / "missing").string()), 2);
  EXPECT_EQ(run("gen-traces --shape square --name square --duration 2000 --out " + (dir / "traces").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "traces" / "square.trace"));
  EXPECT_EQ(run("eval --seed 1 --controller oracle --traces " + (dir / "traces").string() + " --out " +
                (dir / "ev").string()),
            0);
  EXPECT_EQ(run("report --run " + (dir / "ev").string()), 0);
}
