#pragma once

#include <stdexcept>
#include <string>

namespace certcc {

/// Per-step observation features fed to the controller, in state order.
enum class Feature : int {
  throughput = 0,  // thr / running max thr
  loss = 1,        // loss rate in [0, 1]
  delay = 2,       // normalized queuing delay d / (d + min_rtt)
  acks = 3,        // ack count / running max ack count
  interval = 4,    // time since last report / monitor interval
  inv_rtt = 5,     // min_rtt / srtt
};

inline constexpr int kFeatureCount = 6;

inline const char* feature_name(Feature f) {
  switch (f) {
    case Feature::throughput: return "throughput";
    case Feature::loss: return "loss";
    case Feature::delay: return "delay";
    case Feature::acks: return "acks";
    case Feature::interval: return "interval";
    case Feature::inv_rtt: return "inv_rtt";
  }
  return "?";
}

inline Feature feature_from_name(const std::string& name) {
  for (int i = 0; i < kFeatureCount; ++i)
    if (name == feature_name(static_cast<Feature>(i))) return static_cast<Feature>(i);
  throw std::invalid_argument("unknown feature '" + name + "'");
}

/// k stacked observations; history step 0 is the oldest, k-1 the latest.
struct StateLayout {
  int history = 10;
  int features = kFeatureCount;

  int dim() const { return history * features; }
  int index(int step, Feature f) const { return step * features + static_cast<int>(f); }
  int latest(Feature f) const { return index(history - 1, f); }
};

}  // namespace certcc
