#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "certcc/network.hpp"

namespace certcc {

/// Named networks plus the resolved training configuration and step counter.
///
/// Stored as plain text; every double is written as a hex float so a
/// save/load cycle reproduces parameters bit for bit.
struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, Network>> networks;

  const Network& network(const std::string& name) const;
  bool has_network(const std::string& name) const;
  std::string config_value(const std::string& key, const std::string& fallback = {}) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace certcc
