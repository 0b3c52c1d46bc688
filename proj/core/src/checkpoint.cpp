#include "certcc/checkpoint.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace certcc {
namespace {

constexpr const char* kMagic = "certcc-checkpoint";
constexpr int kVersion = 1;

void write_doubles(std::ostream& os, const Vector& v) {
  os << std::hexfloat;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    os << v[i];
  }
  os << std::defaultfloat << '\n';
}

// libstdc++ cannot parse hex floats through operator>>, so go through strtod.
Vector read_doubles(std::istream& is, Eigen::Index n) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated array");
  Vector v(n);
  std::istringstream ls(line);
  std::string tok;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(ls >> tok)) throw std::runtime_error("checkpoint: array shorter than declared");
    char* end = nullptr;
    v[i] = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
      throw std::runtime_error("checkpoint: bad number '" + tok + "'");
  }
  if (ls >> tok) throw std::runtime_error("checkpoint: array longer than declared");
  return v;
}

std::string expect_line(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: unexpected end of file");
  return line;
}

}  // namespace

const Network& Checkpoint::network(const std::string& name) const {
  for (const auto& [n, net] : networks)
    if (n == name) return net;
  throw std::runtime_error("checkpoint has no network named '" + name + "'");
}

bool Checkpoint::has_network(const std::string& name) const {
  for (const auto& entry : networks)
    if (entry.first == name) return true;
  return false;
}

std::string Checkpoint::config_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  return fallback;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os << kMagic << ' ' << kVersion << '\n';
  os << "step " << ckpt.step << '\n';
  os << "config " << ckpt.config.size() << '\n';
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw std::invalid_argument("checkpoint: config entries must be single-line, keys without spaces");
    os << k << ' ' << v << '\n';
  }
  os << "networks " << ckpt.networks.size() << '\n';
  for (const auto& [name, net] : ckpt.networks) {
    os << "network " << name << ' ' << net.architecture() << ' ' << net.params().size() << ' '
       << net.bn_stats().size() << ' ' << std::hexfloat << net.bn_momentum() << std::defaultfloat
       << '\n';
    write_doubles(os, net.params());
    write_doubles(os, net.bn_stats());
  }
  os << "end\n";
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ckpt;
  {
    std::istringstream hs(expect_line(is));
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != kMagic) throw std::runtime_error("not a certcc checkpoint");
    if (version != kVersion)
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  {
    std::istringstream ss(expect_line(is));
    std::string tag;
    ss >> tag >> ckpt.step;
    if (tag != "step" || !ss) throw std::runtime_error("checkpoint: missing step");
  }
  std::size_t n_config = 0;
  {
    std::istringstream ss(expect_line(is));
    std::string tag;
    ss >> tag >> n_config;
    if (tag != "config" || !ss) throw std::runtime_error("checkpoint: missing config header");
  }
  for (std::size_t i = 0; i < n_config; ++i) {
    const std::string line = expect_line(is);
    const auto sp = line.find(' ');
    if (sp == std::string::npos) {
      ckpt.config.emplace_back(line, "");
    } else {
      ckpt.config.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
  }
  std::size_t n_nets = 0;
  {
    std::istringstream ss(expect_line(is));
    std::string tag;
    ss >> tag >> n_nets;
    if (tag != "networks" || !ss) throw std::runtime_error("checkpoint: missing networks header");
  }
  for (std::size_t i = 0; i < n_nets; ++i) {
    std::istringstream ss(expect_line(is));
    std::string tag, name, arch, momentum;
    Eigen::Index np = 0, ns = 0;
    ss >> tag >> name >> arch >> np >> ns >> momentum;
    if (tag != "network" || !ss) throw std::runtime_error("checkpoint: bad network header");
    Network net = Network::from_architecture(arch);
    if (net.params().size() != np || net.bn_stats().size() != ns)
      throw std::runtime_error("checkpoint: parameter count does not match architecture '" +
                               arch + "'");
    net.params() = read_doubles(is, np);
    net.bn_stats() = read_doubles(is, ns);
    net.set_bn_momentum(std::strtod(momentum.c_str(), nullptr));
    // Running variances must stay positive for the inference-mode BN.
    std::size_t offset = 0;
    for (const LayerSpec& l : net.layers()) {
      if (l.kind != LayerKind::batch_norm) continue;
      for (int d = 0; d < l.out_dim; ++d)
        if (!(net.bn_stats()[static_cast<Eigen::Index>(offset) + l.out_dim + d] > 0.0))
          throw std::runtime_error("checkpoint: non-positive BN running variance");
      offset += 2 * static_cast<std::size_t>(l.out_dim);
    }
    ckpt.networks.emplace_back(name, std::move(net));
  }
  if (expect_line(is) != "end") throw std::runtime_error("checkpoint: missing end marker");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace certcc
