#include "certcc/certifier.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace certcc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(PropertyKind kind) {
  return kind == PropertyKind::performance ? "performance" : "robustness";
}

PropertyKind property_kind_from_string(const std::string& s) {
  if (s == "performance") return PropertyKind::performance;
  if (s == "robustness") return PropertyKind::robustness;
  throw std::invalid_argument("unknown property '" + s + "'");
}

PropertySpec PropertySpec::performance(double p, double q, StateLayout layout) {
  PropertySpec s;
  s.kind = PropertyKind::performance;
  s.p = p;
  s.q = q;
  s.layout = layout;
  s.validate();
  return s;
}

PropertySpec PropertySpec::robustness(double mu, double epsilon, StateLayout layout) {
  PropertySpec s;
  s.kind = PropertyKind::robustness;
  s.mu = mu;
  s.epsilon = epsilon;
  s.layout = layout;
  s.validate();
  return s;
}

void PropertySpec::validate() const {
  if (layout.history < 1 || layout.features < 1)
    throw std::invalid_argument("property layout must be non-empty");
  if (kind == PropertyKind::performance) {
    if (!(0.0 <= q && q < p && p <= 1.0))
      throw std::invalid_argument("performance property requires 0 <= q < p <= 1");
  } else {
    if (!(mu >= 0.0)) throw std::invalid_argument("robustness property requires mu >= 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("robustness property requires epsilon > 0");
    if (perturbed_features.empty())
      throw std::invalid_argument("robustness property needs at least one perturbed feature");
  }
}

int PropertySpec::split_dimension() const {
  const Feature f = kind == PropertyKind::performance ? delay_feature : perturbed_features.front();
  return layout.latest(f);
}

double interval_distance(const Interval& y, const Interval& out) {
  if (y.lo > out.hi || y.hi < out.lo) return 0.0;
  if (y.lo <= out.lo && out.hi <= y.hi) return 1.0;
  // Partial overlap; out has positive width here, and min/max clip any
  // infinite side of y to the output's own bound.
  const double overlap = std::min(y.hi, out.hi) - std::max(y.lo, out.lo);
  return std::clamp(overlap / out.width(), 0.0, 1.0);
}

ComponentResult check_component(const Interval& output, const Interval& target) {
  ComponentResult r;
  r.output = output;
  r.target = target;
  r.certified = target.contains(output);
  r.distance = interval_distance(target, output);
  // Keep d == 1 <=> certified even when the ratio rounds up to 1.
  if (r.certified) {
    r.distance = 1.0;
  } else {
    r.distance = std::min(r.distance, std::nextafter(1.0, 0.0));
  }
  return r;
}

CertificateReport make_report(std::vector<ComponentResult> components) {
  if (components.empty()) throw std::invalid_argument("certificate report needs components");
  CertificateReport rep;
  std::size_t certified = 0;
  double dsum = 0.0;
  for (const auto& c : components) {
    certified += c.certified ? 1 : 0;
    dsum += c.distance;
  }
  const double n = static_cast<double>(components.size());
  rep.fcc_step = static_cast<double>(certified) / n;
  rep.fully_certified = certified == components.size();
  rep.r_verifier = dsum / n;
  rep.components = std::move(components);
  return rep;
}

CertificateReport merge_reports(std::span<const CertificateReport> parts) {
  std::vector<ComponentResult> all;
  for (const auto& p : parts) all.insert(all.end(), p.components.begin(), p.components.end());
  return make_report(std::move(all));
}

Box build_performance_precondition(const PropertySpec& spec, const Vector& observed_state,
                                   DelayCase which) {
  if (observed_state.size() != spec.layout.dim())
    throw std::invalid_argument("observed state does not match property layout");
  Vector c = observed_state;
  Vector e = Vector::Zero(c.size());
  const Interval range = which == DelayCase::large_delay ? Interval{spec.p, 1.0}
                                                         : Interval{0.0, spec.q};
  for (int h = 0; h < spec.layout.history; ++h) {
    const int i = spec.layout.index(h, spec.delay_feature);
    c[i] = range.midpoint();
    e[i] = 0.5 * range.width();
  }
  return Box(std::move(c), std::move(e));
}

Box build_robustness_precondition(const PropertySpec& spec, const Vector& observed_state) {
  if (observed_state.size() != spec.layout.dim())
    throw std::invalid_argument("observed state does not match property layout");
  Vector c = observed_state;
  Vector e = Vector::Zero(c.size());
  for (int h = 0; h < spec.layout.history; ++h) {
    for (Feature f : spec.perturbed_features) {
      const int i = spec.layout.index(h, f);
      const double v = observed_state[i];
      double lo = v * (1.0 - spec.mu);
      double hi = v * (1.0 + spec.mu);
      if (lo > hi) std::swap(lo, hi);
      c[i] = 0.5 * (lo + hi);
      e[i] = 0.5 * (hi - lo);
    }
  }
  return Box(std::move(c), std::move(e));
}

Interval delta_cwnd(const Interval& action, double cwnd_tcp, double cwnd_prev) {
  // 2^{2a} is increasing, so the endpoints bound the image exactly.
  return {std::exp2(2.0 * action.lo) * cwnd_tcp - cwnd_prev,
          std::exp2(2.0 * action.hi) * cwnd_tcp - cwnd_prev};
}

Interval cwnd_change(const Interval& cwnd, double reference) {
  if (reference == 0.0) throw std::invalid_argument("cwnd_change: zero reference cwnd");
  Interval r{(cwnd.lo - reference) / reference, (cwnd.hi - reference) / reference};
  if (r.lo > r.hi) std::swap(r.lo, r.hi);
  return r;
}

Interval performance_target(DelayCase which) {
  return which == DelayCase::large_delay ? Interval{-kInf, 0.0} : Interval{0.0, kInf};
}

CertificateReport PerformanceCertificate::joint() const {
  const CertificateReport parts[] = {large, small};
  return merge_reports(parts);
}

PerformanceCertificate certify_performance(const Network& net, const PropertySpec& spec,
                                           const Vector& observed_state, double cwnd_prev,
                                           double cwnd_tcp, std::size_t n_components) {
  if (!(cwnd_prev > 0.0) || !(cwnd_tcp > 0.0))
    throw std::invalid_argument("certify_performance: cwnd inputs must be positive");
  if (n_components < 1) throw std::invalid_argument("certify_performance: need >= 1 component");
  if (spec.kind != PropertyKind::performance)
    throw std::invalid_argument("certify_performance: property is not a performance property");

  const auto dim = static_cast<std::size_t>(spec.split_dimension());
  PerformanceCertificate cert;
  for (DelayCase which : {DelayCase::large_delay, DelayCase::small_delay}) {
    const Box pre = build_performance_precondition(spec, observed_state, which);
    const Interval target = performance_target(which);
    std::vector<ComponentResult> comps;
    comps.reserve(n_components);
    for (const Box& part : split(pre, dim, n_components)) {
      const Interval a = net.forward_abstract(part);
      comps.push_back(check_component(delta_cwnd(a, cwnd_tcp, cwnd_prev), target));
    }
    (which == DelayCase::large_delay ? cert.large : cert.small) = make_report(std::move(comps));
  }
  return cert;
}

CertificateReport certify_robustness(const Network& net, const PropertySpec& spec,
                                     const Vector& observed_state, double cwnd_tcp,
                                     std::size_t n_components) {
  if (n_components < 1) throw std::invalid_argument("certify_robustness: need >= 1 component");
  if (spec.kind != PropertyKind::robustness)
    throw std::invalid_argument("certify_robustness: property is not a robustness property");

  const double a = net.forward(observed_state);
  const double cwnd_i = std::exp2(2.0 * a) * cwnd_tcp;
  if (cwnd_i == 0.0) throw std::invalid_argument("certify_robustness: reference cwnd is zero");

  const Box pre = build_robustness_precondition(spec, observed_state);
  const Interval target{-spec.epsilon, spec.epsilon};
  std::vector<ComponentResult> comps;
  comps.reserve(n_components);
  for (const Box& part : split(pre, static_cast<std::size_t>(spec.split_dimension()), n_components)) {
    const Interval act = net.forward_abstract(part);
    const Interval cwnd{std::exp2(2.0 * act.lo) * cwnd_tcp, std::exp2(2.0 * act.hi) * cwnd_tcp};
    comps.push_back(check_component(cwnd_change(cwnd, cwnd_i), target));
  }
  return make_report(std::move(comps));
}

FccFcs aggregate_fcc_fcs(std::span<const CertificateReport> steps) {
  if (steps.empty()) throw std::invalid_argument("aggregate_fcc_fcs: no steps");
  double fcc = 0.0;
  std::size_t full = 0;
  for (const auto& s : steps) {
    fcc += s.fcc_step;
    full += s.fully_certified ? 1 : 0;
  }
  const double n = static_cast<double>(steps.size());
  return {fcc / n, static_cast<double>(full) / n};
}

void append_certificate_rows(std::vector<CertificateRow>& rows, std::size_t step,
                             const std::string& case_name, const CertificateReport& report) {
  for (std::size_t i = 0; i < report.components.size(); ++i) {
    const auto& c = report.components[i];
    rows.push_back({step, case_name, i, c.output, c.target, c.distance, c.certified});
  }
}

void write_certificate_csv(std::ostream& os, std::span<const CertificateRow> rows) {
  os << "step,case,component_index,out_lo,out_hi,y_lo,y_hi,distance,certified\n";
  for (const auto& r : rows) {
    os << r.step << ',' << r.case_name << ',' << r.component << ',' << format_double(r.output.lo)
       << ',' << format_double(r.output.hi) << ',' << format_double(r.target.lo) << ','
       << format_double(r.target.hi) << ',' << format_double(r.distance) << ','
       << (r.certified ? 1 : 0) << '\n';
  }
}

std::vector<CertificateRow> read_certificate_csv(std::istream& is) {
  std::vector<CertificateRow> rows;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("certificate dump is empty");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 9) throw std::runtime_error("certificate dump: malformed row '" + line + "'");
    CertificateRow r;
    r.step = std::stoull(f[0]);
    r.case_name = f[1];
    r.component = std::stoull(f[2]);
    r.output = {std::stod(f[3]), std::stod(f[4])};
    r.target = {std::stod(f[5]), std::stod(f[6])};
    r.distance = std::stod(f[7]);
    r.certified = f[8] == "1";
    rows.push_back(r);
  }
  return rows;
}

std::vector<CertificateReport> reports_from_rows(std::span<const CertificateRow> rows,
                                                 const std::string& case_name) {
  std::map<std::size_t, std::vector<ComponentResult>> by_step;
  for (const auto& r : rows) {
    if (!case_name.empty() && r.case_name != case_name) continue;
    by_step[r.step].push_back({r.output, r.target, r.distance, r.certified});
  }
  std::vector<CertificateReport> out;
  out.reserve(by_step.size());
  for (auto& [step, comps] : by_step) out.push_back(make_report(std::move(comps)));
  return out;
}

}  // namespace certcc
