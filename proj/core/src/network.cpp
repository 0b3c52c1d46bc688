#include "certcc/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace certcc {
namespace {

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Network::Network(int input_dim, std::vector<LayerSpec> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  if (input_dim_ <= 0) throw std::invalid_argument("network input_dim must be positive");
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");

  Eigen::Index p = 0;
  Eigen::Index s = 0;
  int width = input_dim_;
  for (LayerSpec& l : layers_) {
    if (l.in_dim == 0) l.in_dim = width;
    if (l.in_dim != width)
      throw std::invalid_argument("layer dimensions do not chain");
    if (l.kind != LayerKind::fully_connected) l.out_dim = l.in_dim;
    if (l.out_dim <= 0) throw std::invalid_argument("layer out_dim must be positive");

    slots_.push_back({p, s});
    switch (l.kind) {
      case LayerKind::fully_connected:
        p += static_cast<Eigen::Index>(l.in_dim) * l.out_dim + l.out_dim;
        break;
      case LayerKind::batch_norm:
        if (!(l.epsilon > 0.0)) throw std::invalid_argument("batch_norm epsilon must be > 0");
        p += 2 * l.out_dim;
        s += 2 * l.out_dim;
        break;
      case LayerKind::leaky_relu:
      case LayerKind::tanh:
        break;
    }
    width = l.out_dim;
  }
  params_ = Vector::Zero(p);
  stats_ = Vector::Zero(s);
  // Running variance starts at 1 so a fresh network is a valid inference net.
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::batch_norm) {
      const int d = layers_[i].out_dim;
      stats_.segment(slots_[i].stats_offset + d, d).setOnes();
      params_.segment(slots_[i].param_offset, d).setOnes();
    }
  }
}

Network Network::actor(int input_dim, int hidden, double slope) {
  std::vector<LayerSpec> ls;
  ls.push_back({LayerKind::fully_connected, 0, hidden});
  ls.push_back({LayerKind::batch_norm});
  ls.push_back({LayerKind::leaky_relu, 0, 0, slope});
  ls.push_back({LayerKind::fully_connected, 0, hidden});
  ls.push_back({LayerKind::batch_norm});
  ls.push_back({LayerKind::leaky_relu, 0, 0, slope});
  ls.push_back({LayerKind::fully_connected, 0, 1});
  ls.push_back({LayerKind::tanh});
  return Network(input_dim, std::move(ls));
}

Network Network::critic(int input_dim, int hidden, double slope) {
  std::vector<LayerSpec> ls;
  ls.push_back({LayerKind::fully_connected, 0, hidden});
  ls.push_back({LayerKind::leaky_relu, 0, 0, slope});
  ls.push_back({LayerKind::fully_connected, 0, hidden});
  ls.push_back({LayerKind::leaky_relu, 0, 0, slope});
  ls.push_back({LayerKind::fully_connected, 0, 1});
  return Network(input_dim, std::move(ls));
}

std::string Network::architecture() const {
  std::ostringstream os;
  os.precision(17);
  os << "in=" << input_dim_;
  for (const LayerSpec& l : layers_) {
    switch (l.kind) {
      case LayerKind::fully_connected: os << ";fc:" << l.out_dim; break;
      case LayerKind::batch_norm: os << ";bn:" << l.epsilon; break;
      case LayerKind::leaky_relu: os << ";lrelu:" << l.slope; break;
      case LayerKind::tanh: os << ";tanh"; break;
    }
  }
  return os.str();
}

Network Network::from_architecture(const std::string& arch) {
  const auto tokens = split_on(arch, ';');
  if (tokens.empty() || tokens[0].rfind("in=", 0) != 0)
    throw std::invalid_argument("architecture must start with in=<dim>: " + arch);
  const int in = std::stoi(tokens[0].substr(3));
  std::vector<LayerSpec> ls;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto parts = split_on(tokens[i], ':');
    const std::string& kind = parts[0];
    LayerSpec l;
    if (kind == "fc" && parts.size() == 2) {
      l.kind = LayerKind::fully_connected;
      l.out_dim = std::stoi(parts[1]);
    } else if (kind == "bn") {
      l.kind = LayerKind::batch_norm;
      if (parts.size() == 2) l.epsilon = std::stod(parts[1]);
    } else if (kind == "lrelu") {
      l.kind = LayerKind::leaky_relu;
      if (parts.size() == 2) l.slope = std::stod(parts[1]);
    } else if (kind == "tanh") {
      l.kind = LayerKind::tanh;
    } else {
      throw std::invalid_argument("unknown layer token '" + tokens[i] + "'");
    }
    ls.push_back(l);
  }
  return Network(in, std::move(ls));
}

void Network::initialize(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Slot& s = slots_[i];
    if (l.kind == LayerKind::fully_connected) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
      std::uniform_real_distribution<double> u(-bound, bound);
      const Eigen::Index n = static_cast<Eigen::Index>(l.in_dim) * l.out_dim + l.out_dim;
      for (Eigen::Index k = 0; k < n; ++k) params_[s.param_offset + k] = u(rng);
    } else if (l.kind == LayerKind::batch_norm) {
      params_.segment(s.param_offset, l.out_dim).setOnes();
      params_.segment(s.param_offset + l.out_dim, l.out_dim).setZero();
      stats_.segment(s.stats_offset, l.out_dim).setZero();
      stats_.segment(s.stats_offset + l.out_dim, l.out_dim).setOnes();
    }
  }
}

void Network::check_input(Eigen::Index rows) const {
  if (rows != input_dim_)
    throw std::invalid_argument("input dimension " + std::to_string(rows) +
                                " != network input_dim " + std::to_string(input_dim_));
}

double Network::forward(const Vector& x) const {
  if (output_dim() != 1) throw std::logic_error("forward(): network has more than one output");
  check_input(x.size());
  return forward_batch(x, Mode::inference)(0, 0);
}

Matrix Network::forward_batch(const Matrix& x, Mode mode, Tape* tape) const {
  check_input(x.rows());
  if (tape) {
    tape->inputs.clear();
    tape->batch_mean.clear();
    tape->batch_var.clear();
    tape->mode = mode;
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Slot& s = slots_[i];
    if (tape) tape->inputs.push_back(h);
    switch (l.kind) {
      case LayerKind::fully_connected: {
        Eigen::Map<const Matrix> w(params_.data() + s.param_offset, l.out_dim, l.in_dim);
        Eigen::Map<const Vector> b(params_.data() + s.param_offset +
                                       static_cast<Eigen::Index>(l.in_dim) * l.out_dim,
                                   l.out_dim);
        Matrix out = w * h;
        out.colwise() += b;
        h = std::move(out);
        break;
      }
      case LayerKind::batch_norm: {
        const auto gamma = params_.segment(s.param_offset, l.out_dim);
        const auto beta = params_.segment(s.param_offset + l.out_dim, l.out_dim);
        Vector mean, var;
        if (mode == Mode::training) {
          mean = h.rowwise().mean();
          var = (h.colwise() - mean).array().square().rowwise().mean().matrix();
          if (tape) {
            tape->batch_mean.push_back(mean);
            tape->batch_var.push_back(var);
          }
        } else {
          mean = stats_.segment(s.stats_offset, l.out_dim);
          var = stats_.segment(s.stats_offset + l.out_dim, l.out_dim);
        }
        const Vector scale =
            (gamma.array() / (var.array() + l.epsilon).sqrt()).matrix();
        const Vector shift = beta - scale.cwiseProduct(mean);
        h = (scale.asDiagonal() * h).colwise() + shift;
        break;
      }
      case LayerKind::leaky_relu: {
        const double slope = l.slope;
        h = h.unaryExpr([slope](double v) { return leaky(v, slope); });
        break;
      }
      case LayerKind::tanh:
        h = h.array().tanh().matrix();
        break;
    }
  }
  return h;
}

Box Network::forward_abstract_box(const Box& box, AbstractTape* tape) const {
  check_input(static_cast<Eigen::Index>(box.dim()));
  if (tape) {
    tape->centers.clear();
    tape->deviations.clear();
  }
  Vector c = box.center();
  Vector e = box.deviation();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Slot& s = slots_[i];
    if (tape) {
      tape->centers.push_back(c);
      tape->deviations.push_back(e);
    }
    switch (l.kind) {
      case LayerKind::fully_connected: {
        Eigen::Map<const Matrix> w(params_.data() + s.param_offset, l.out_dim, l.in_dim);
        Eigen::Map<const Vector> b(params_.data() + s.param_offset +
                                       static_cast<Eigen::Index>(l.in_dim) * l.out_dim,
                                   l.out_dim);
        Vector nc = w * c + b;
        e = w.cwiseAbs() * e;
        c = std::move(nc);
        break;
      }
      case LayerKind::batch_norm: {
        // Inference-mode BN is a diagonal affine map.
        const auto gamma = params_.segment(s.param_offset, l.out_dim);
        const auto beta = params_.segment(s.param_offset + l.out_dim, l.out_dim);
        const auto mean = stats_.segment(s.stats_offset, l.out_dim);
        const auto var = stats_.segment(s.stats_offset + l.out_dim, l.out_dim);
        const Vector scale = (gamma.array() / (var.array() + l.epsilon).sqrt()).matrix();
        c = scale.cwiseProduct(c - mean) + beta;
        e = scale.cwiseAbs().cwiseProduct(e);
        break;
      }
      case LayerKind::leaky_relu:
      case LayerKind::tanh: {
        const bool is_tanh = l.kind == LayerKind::tanh;
        const double slope = l.slope;
        for (Eigen::Index k = 0; k < c.size(); ++k) {
          const double lo = is_tanh ? std::tanh(c[k] - e[k]) : leaky(c[k] - e[k], slope);
          const double hi = is_tanh ? std::tanh(c[k] + e[k]) : leaky(c[k] + e[k], slope);
          c[k] = 0.5 * (lo + hi);
          e[k] = std::max(0.0, 0.5 * (hi - lo));
        }
        break;
      }
    }
  }
  return Box(std::move(c), std::move(e));
}

Interval Network::forward_abstract(const Box& box, AbstractTape* tape) const {
  if (output_dim() != 1)
    throw std::logic_error("forward_abstract(): network has more than one output");
  const Box out = forward_abstract_box(box, tape);
  Interval iv = out.interval(0);
  if (bounded_output()) {
    iv.lo = std::max(iv.lo, -1.0);
    iv.hi = std::min(iv.hi, 1.0);
  }
  return iv;
}

Matrix Network::backward(const Tape& tape, const Matrix& grad_out, Vector& grad_params) const {
  if (tape.inputs.size() != layers_.size())
    throw std::logic_error("backward(): tape does not match network");
  if (grad_params.size() != params_.size()) grad_params = Vector::Zero(params_.size());

  Matrix g = grad_out;
  std::size_t bn_index = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].kind == LayerKind::batch_norm && tape.mode == Mode::training) ++bn_index;

  for (std::size_t ri = layers_.size(); ri-- > 0;) {
    const LayerSpec& l = layers_[ri];
    const Slot& s = slots_[ri];
    const Matrix& in = tape.inputs[ri];
    switch (l.kind) {
      case LayerKind::fully_connected: {
        Eigen::Map<const Matrix> w(params_.data() + s.param_offset, l.out_dim, l.in_dim);
        Eigen::Map<Matrix> gw(grad_params.data() + s.param_offset, l.out_dim, l.in_dim);
        Eigen::Map<Vector> gb(grad_params.data() + s.param_offset +
                                  static_cast<Eigen::Index>(l.in_dim) * l.out_dim,
                              l.out_dim);
        gw.noalias() += g * in.transpose();
        gb += g.rowwise().sum();
        g = w.transpose() * g;
        break;
      }
      case LayerKind::batch_norm: {
        const auto gamma = params_.segment(s.param_offset, l.out_dim);
        auto ggamma = grad_params.segment(s.param_offset, l.out_dim);
        auto gbeta = grad_params.segment(s.param_offset + l.out_dim, l.out_dim);
        Vector mean, var;
        if (tape.mode == Mode::training) {
          --bn_index;
          mean = tape.batch_mean[bn_index];
          var = tape.batch_var[bn_index];
        } else {
          mean = stats_.segment(s.stats_offset, l.out_dim);
          var = stats_.segment(s.stats_offset + l.out_dim, l.out_dim);
        }
        const Vector inv_std = (var.array() + l.epsilon).rsqrt().matrix();
        const Matrix xhat = inv_std.asDiagonal() * (in.colwise() - mean);
        ggamma += (g.cwiseProduct(xhat)).rowwise().sum();
        gbeta += g.rowwise().sum();
        const Matrix gxhat = gamma.asDiagonal() * g;
        if (tape.mode == Mode::training) {
          const double n = static_cast<double>(in.cols());
          const Vector sum_g = gxhat.rowwise().sum();
          const Vector sum_gx = gxhat.cwiseProduct(xhat).rowwise().sum();
          Matrix dx = (gxhat * n).colwise() - sum_g;
          dx -= sum_gx.asDiagonal() * xhat;
          g = (inv_std / n).asDiagonal() * dx;
        } else {
          g = inv_std.asDiagonal() * gxhat;
        }
        break;
      }
      case LayerKind::leaky_relu: {
        const double slope = l.slope;
        g = g.cwiseProduct(in.unaryExpr([slope](double v) { return leaky_grad(v, slope); }));
        break;
      }
      case LayerKind::tanh: {
        const Matrix t = in.array().tanh().matrix();
        g = g.cwiseProduct((1.0 - t.array().square()).matrix());
        break;
      }
    }
  }
  return g;
}

void Network::backward_abstract(const AbstractTape& tape, double grad_lo, double grad_hi,
                                Vector& grad_params) const {
  if (tape.centers.size() != layers_.size())
    throw std::logic_error("backward_abstract(): tape does not match network");
  if (grad_params.size() != params_.size()) grad_params = Vector::Zero(params_.size());

  // lo = c - e, hi = c + e.
  Vector gc = Vector::Constant(1, grad_lo + grad_hi);
  Vector ge = Vector::Constant(1, grad_hi - grad_lo);

  for (std::size_t ri = layers_.size(); ri-- > 0;) {
    const LayerSpec& l = layers_[ri];
    const Slot& s = slots_[ri];
    const Vector& c = tape.centers[ri];
    const Vector& e = tape.deviations[ri];
    switch (l.kind) {
      case LayerKind::fully_connected: {
        Eigen::Map<const Matrix> w(params_.data() + s.param_offset, l.out_dim, l.in_dim);
        Eigen::Map<Matrix> gw(grad_params.data() + s.param_offset, l.out_dim, l.in_dim);
        Eigen::Map<Vector> gb(grad_params.data() + s.param_offset +
                                  static_cast<Eigen::Index>(l.in_dim) * l.out_dim,
                              l.out_dim);
        const Matrix sign = w.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
        gw.noalias() += gc * c.transpose();
        gw += sign.cwiseProduct(ge * e.transpose());
        gb += gc;
        Vector nc = w.transpose() * gc;
        ge = w.cwiseAbs().transpose() * ge;
        gc = std::move(nc);
        break;
      }
      case LayerKind::batch_norm: {
        const auto gamma = params_.segment(s.param_offset, l.out_dim);
        const auto mean = stats_.segment(s.stats_offset, l.out_dim);
        const auto var = stats_.segment(s.stats_offset + l.out_dim, l.out_dim);
        const Vector inv_std = (var.array() + l.epsilon).rsqrt().matrix();
        const Vector scale = gamma.cwiseProduct(inv_std);
        const Vector sign = scale.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
        auto ggamma = grad_params.segment(s.param_offset, l.out_dim);
        auto gbeta = grad_params.segment(s.param_offset + l.out_dim, l.out_dim);
        ggamma += (gc.cwiseProduct(c - mean) + ge.cwiseProduct(sign).cwiseProduct(e))
                      .cwiseProduct(inv_std);
        gbeta += gc;
        gc = scale.cwiseProduct(gc);
        ge = scale.cwiseAbs().cwiseProduct(ge);
        break;
      }
      case LayerKind::leaky_relu:
      case LayerKind::tanh: {
        const bool is_tanh = l.kind == LayerKind::tanh;
        for (Eigen::Index k = 0; k < c.size(); ++k) {
          const double lo = c[k] - e[k];
          const double hi = c[k] + e[k];
          const double dlo = is_tanh ? 1.0 - std::tanh(lo) * std::tanh(lo) : leaky_grad(lo, l.slope);
          const double dhi = is_tanh ? 1.0 - std::tanh(hi) * std::tanh(hi) : leaky_grad(hi, l.slope);
          const double g_lo_out = 0.5 * (gc[k] - ge[k]);
          const double g_hi_out = 0.5 * (gc[k] + ge[k]);
          const double g_lo = dlo * g_lo_out;
          const double g_hi = dhi * g_hi_out;
          gc[k] = g_lo + g_hi;
          ge[k] = g_hi - g_lo;
        }
        break;
      }
    }
  }
}

Vector Network::gradients(const Vector& state, double upstream, Mode mode) const {
  Tape tape;
  forward_batch(state, mode, &tape);
  Vector grads = Vector::Zero(params_.size());
  backward(tape, Matrix::Constant(output_dim(), 1, upstream), grads);
  return grads;
}

void Network::update_running_stats(const Tape& tape) {
  if (tape.mode != Mode::training) return;
  std::size_t bn = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerKind::batch_norm) continue;
    const int d = layers_[i].out_dim;
    auto mean = stats_.segment(slots_[i].stats_offset, d);
    auto var = stats_.segment(slots_[i].stats_offset + d, d);
    mean = (1.0 - bn_momentum_) * mean + bn_momentum_ * tape.batch_mean[bn];
    var = (1.0 - bn_momentum_) * var + bn_momentum_ * tape.batch_var[bn];
    ++bn;
  }
}

bool Network::all_finite() const { return params_.allFinite() && stats_.allFinite(); }

}  // namespace certcc
