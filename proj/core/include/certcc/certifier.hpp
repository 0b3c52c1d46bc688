#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "certcc/box.hpp"
#include "certcc/features.hpp"
#include "certcc/network.hpp"

namespace certcc {

enum class PropertyKind { performance, robustness };

std::string to_string(PropertyKind kind);
PropertyKind property_kind_from_string(const std::string& s);

struct PropertySpec {
  PropertyKind kind = PropertyKind::performance;
  // performance: normalized-delay thresholds, 0 <= q < p <= 1
  double p = 0.75;
  double q = 0.25;
  // robustness: relative noise bound and allowed relative cwnd change
  double mu = 0.05;
  double epsilon = 0.01;
  Feature delay_feature = Feature::delay;
  std::vector<Feature> perturbed_features{Feature::delay};
  StateLayout layout;

  static PropertySpec performance(double p, double q, StateLayout layout = {});
  static PropertySpec robustness(double mu, double epsilon, StateLayout layout = {});

  void validate() const;
  /// Dimension split into components: the property's feature at the latest step.
  int split_dimension() const;
};

enum class DelayCase { large_delay, small_delay };

struct ComponentResult {
  Interval output;
  Interval target;  // may be half-open (infinite bound)
  double distance = 0.0;
  bool certified = false;
};

struct CertificateReport {
  std::vector<ComponentResult> components;
  double fcc_step = 0.0;
  bool fully_certified = false;
  double r_verifier = 0.0;
};

/// Fraction of `out` lying inside `y`: 0 when disjoint, 1 when contained.
/// An unbounded side of `y` acts as if clipped to the matching bound of `out`.
double interval_distance(const Interval& y, const Interval& out);

ComponentResult check_component(const Interval& output, const Interval& target);
CertificateReport make_report(std::vector<ComponentResult> components);

/// Concatenates the components of several reports into one joint report
/// (fully certified only if every part is).
CertificateReport merge_reports(std::span<const CertificateReport> parts);

Box build_performance_precondition(const PropertySpec& spec, const Vector& observed_state,
                                   DelayCase which);
Box build_robustness_precondition(const PropertySpec& spec, const Vector& observed_state);

/// 2^{2a} * cwnd_tcp for a in `action`, minus cwnd_prev.
Interval delta_cwnd(const Interval& action, double cwnd_tcp, double cwnd_prev);
/// (cwnd - reference) / reference over the interval.
Interval cwnd_change(const Interval& cwnd, double reference);

/// Performance targets: large delay requires delta <= 0, small requires >= 0.
Interval performance_target(DelayCase which);

struct PerformanceCertificate {
  CertificateReport large;
  CertificateReport small;

  /// Mean of the two per-case verifier rewards.
  double r_verifier() const { return 0.5 * (large.r_verifier + small.r_verifier); }
  CertificateReport joint() const;
};

PerformanceCertificate certify_performance(const Network& net, const PropertySpec& spec,
                                           const Vector& observed_state, double cwnd_prev,
                                           double cwnd_tcp, std::size_t n_components);

CertificateReport certify_robustness(const Network& net, const PropertySpec& spec,
                                     const Vector& observed_state, double cwnd_tcp,
                                     std::size_t n_components);

struct FccFcs {
  double fcc = 0.0;
  double fcs = 0.0;
};

FccFcs aggregate_fcc_fcs(std::span<const CertificateReport> steps);

/// One row of a certificate dump.
struct CertificateRow {
  std::size_t step = 0;
  std::string case_name;
  std::size_t component = 0;
  Interval output;
  Interval target;
  double distance = 0.0;
  bool certified = false;
};

void append_certificate_rows(std::vector<CertificateRow>& rows, std::size_t step,
                             const std::string& case_name, const CertificateReport& report);
void write_certificate_csv(std::ostream& os, std::span<const CertificateRow> rows);
std::vector<CertificateRow> read_certificate_csv(std::istream& is);

/// Regroups dump rows into per-step reports for one case (or every case when
/// `case_name` is empty, which yields joint per-step reports).
std::vector<CertificateReport> reports_from_rows(std::span<const CertificateRow> rows,
                                                 const std::string& case_name);

}  // namespace certcc
