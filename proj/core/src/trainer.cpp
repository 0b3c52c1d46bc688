#include "certcc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace certcc {
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "lambda", "n_components", "gamma", "actor_count", "replay_capacity", "batch_size",
      "actor_lr", "critic_lr", "tau", "policy_delay", "exploration_noise", "target_noise",
      "target_noise_clip", "total_epochs", "seed", "hidden", "history", "leaky_slope",
      "steps_per_epoch", "updates_per_epoch", "warmup_transitions", "sync_interval", "threads",
      "log_window", "cert_grad_weight", "cert_grad_batch", "episode_ms", "bw_min_mbps",
      "bw_max_mbps", "rtt_min_ms", "rtt_max_ms", "buffer_bdp", "monitor_interval_ms", "zeta",
      "beta", "property", "p", "q", "mu", "epsilon"};
  return keys;
}

int to_int(std::int64_t v, const char* key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw std::invalid_argument(std::string("config key '") + key + "' out of range");
  return static_cast<int>(v);
}

std::size_t to_size(std::int64_t v, const char* key) {
  if (v < 0) throw std::invalid_argument(std::string("config key '") + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

double log_uniform(double lo, double hi, std::mt19937_64& rng) {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

EnvOptions env_options(const TrainConfig& cfg) {
  EnvOptions o;
  o.history = cfg.history;
  o.zeta = cfg.zeta;
  o.beta = cfg.beta;
  return o;
}

Matrix gather_states(const std::vector<const Transition*>& batch, bool next) {
  const auto dim = (next ? batch.front()->next_state : batch.front()->state).size();
  Matrix S(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j)
    S.col(static_cast<Eigen::Index>(j)) = next ? batch[j]->next_state : batch[j]->state;
  return S;
}

}  // namespace

// ------------------------------------------------------------------- config

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  require(n_components >= 1, "n_components must be >= 1");
  require(gamma >= 0.0 && gamma < 1.0, "gamma must be in [0, 1)");
  require(actor_count >= 1, "actor_count must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(replay_capacity >= static_cast<std::size_t>(batch_size), "replay_capacity < batch_size");
  require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  require(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
  require(policy_delay >= 1, "policy_delay must be >= 1");
  require(exploration_noise >= 0.0, "exploration_noise must be >= 0");
  require(target_noise >= 0.0 && target_noise_clip >= 0.0, "target noise must be >= 0");
  require(total_epochs >= 0, "total_epochs must be >= 0");
  require(hidden >= 1, "hidden must be >= 1");
  require(history >= 1, "history must be >= 1");
  require(leaky_slope >= 0.0, "leaky_slope must be >= 0");
  require(steps_per_epoch >= 1, "steps_per_epoch must be >= 1");
  require(updates_per_epoch >= 0, "updates_per_epoch must be >= 0");
  require(sync_interval >= 1, "sync_interval must be >= 1");
  require(threads >= 0, "threads must be >= 0");
  require(log_window >= 1, "log_window must be >= 1");
  require(cert_grad_weight >= 0.0, "cert_grad_weight must be >= 0");
  require(cert_grad_batch >= 0, "cert_grad_batch must be >= 0");
  require(episode_ms > 0.0, "episode_ms must be positive");
  require(bw_min_mbps > 0.0 && bw_min_mbps <= bw_max_mbps, "bad bandwidth range");
  require(rtt_min_ms > 0.0 && rtt_min_ms <= rtt_max_ms, "bad rtt range");
  require(buffer_bdp > 0.0, "buffer_bdp must be positive");
  require(monitor_interval_ms >= 1, "monitor_interval_ms must be >= 1");
  require(zeta >= 0.0 && beta >= 0.0, "reward weights must be >= 0");
  property.validate();
  require(property.layout.history == history && property.layout.features == kFeatureCount,
          "property layout does not match history");
}

PropertySpec property_from_map(const ConfigMap& map, StateLayout layout) {
  const PropertyKind kind = property_kind_from_string(map.get_string("property", "performance"));
  PropertySpec spec = kind == PropertyKind::performance
                          ? PropertySpec::performance(map.get_double("p", 0.75), map.get_double("q", 0.25), layout)
                          : PropertySpec::robustness(map.get_double("mu", 0.05), map.get_double("epsilon", 0.01), layout);
  // Both sets of thresholds are carried so a checkpoint can be re-certified
  // under the other property.
  spec.p = map.get_double("p", spec.p);
  spec.q = map.get_double("q", spec.q);
  spec.mu = map.get_double("mu", spec.mu);
  spec.epsilon = map.get_double("epsilon", spec.epsilon);
  spec.validate();
  return spec;
}

void property_to_map(const PropertySpec& spec, ConfigMap& map) {
  map.set("property", to_string(spec.kind));
  map.set("p", fmt(spec.p));
  map.set("q", fmt(spec.q));
  map.set("mu", fmt(spec.mu));
  map.set("epsilon", fmt(spec.epsilon));
}

TrainConfig TrainConfig::from_map(const ConfigMap& map) {
  for (const auto& [k, v] : map.values())
    if (!known_keys().count(k)) throw std::invalid_argument("unknown config key '" + k + "'");

  TrainConfig c;
  c.lambda = map.get_double("lambda", c.lambda);
  c.n_components = to_int(map.get_int("n_components", c.n_components), "n_components");
  c.gamma = map.get_double("gamma", c.gamma);
  c.actor_count = to_int(map.get_int("actor_count", c.actor_count), "actor_count");
  c.replay_capacity = to_size(map.get_int("replay_capacity", static_cast<std::int64_t>(c.replay_capacity)), "replay_capacity");
  c.batch_size = to_int(map.get_int("batch_size", c.batch_size), "batch_size");
  c.actor_lr = map.get_double("actor_lr", c.actor_lr);
  c.critic_lr = map.get_double("critic_lr", c.critic_lr);
  c.tau = map.get_double("tau", c.tau);
  c.policy_delay = to_int(map.get_int("policy_delay", c.policy_delay), "policy_delay");
  c.exploration_noise = map.get_double("exploration_noise", c.exploration_noise);
  c.target_noise = map.get_double("target_noise", c.target_noise);
  c.target_noise_clip = map.get_double("target_noise_clip", c.target_noise_clip);
  c.total_epochs = to_int(map.get_int("total_epochs", c.total_epochs), "total_epochs");
  c.seed = static_cast<std::uint64_t>(to_size(map.get_int("seed", static_cast<std::int64_t>(c.seed)), "seed"));
  c.hidden = to_int(map.get_int("hidden", c.hidden), "hidden");
  c.history = to_int(map.get_int("history", c.history), "history");
  c.leaky_slope = map.get_double("leaky_slope", c.leaky_slope);
  c.steps_per_epoch = to_int(map.get_int("steps_per_epoch", c.steps_per_epoch), "steps_per_epoch");
  c.updates_per_epoch = to_int(map.get_int("updates_per_epoch", c.updates_per_epoch), "updates_per_epoch");
  c.warmup_transitions = to_size(map.get_int("warmup_transitions", static_cast<std::int64_t>(c.warmup_transitions)), "warmup_transitions");
  c.sync_interval = to_int(map.get_int("sync_interval", c.sync_interval), "sync_interval");
  c.threads = to_int(map.get_int("threads", c.threads), "threads");
  c.log_window = to_int(map.get_int("log_window", c.log_window), "log_window");
  c.cert_grad_weight = map.get_double("cert_grad_weight", c.cert_grad_weight);
  c.cert_grad_batch = to_int(map.get_int("cert_grad_batch", c.cert_grad_batch), "cert_grad_batch");
  c.episode_ms = map.get_double("episode_ms", c.episode_ms);
  c.bw_min_mbps = map.get_double("bw_min_mbps", c.bw_min_mbps);
  c.bw_max_mbps = map.get_double("bw_max_mbps", c.bw_max_mbps);
  c.rtt_min_ms = map.get_double("rtt_min_ms", c.rtt_min_ms);
  c.rtt_max_ms = map.get_double("rtt_max_ms", c.rtt_max_ms);
  c.buffer_bdp = map.get_double("buffer_bdp", c.buffer_bdp);
  c.monitor_interval_ms = to_int(map.get_int("monitor_interval_ms", c.monitor_interval_ms), "monitor_interval_ms");
  c.zeta = map.get_double("zeta", c.zeta);
  c.beta = map.get_double("beta", c.beta);
  c.property = property_from_map(map, c.layout());
  c.validate();
  return c;
}

ConfigMap TrainConfig::to_map() const {
  ConfigMap m;
  m.set("lambda", fmt(lambda));
  m.set("n_components", std::to_string(n_components));
  m.set("gamma", fmt(gamma));
  m.set("actor_count", std::to_string(actor_count));
  m.set("replay_capacity", std::to_string(replay_capacity));
  m.set("batch_size", std::to_string(batch_size));
  m.set("actor_lr", fmt(actor_lr));
  m.set("critic_lr", fmt(critic_lr));
  m.set("tau", fmt(tau));
  m.set("policy_delay", std::to_string(policy_delay));
  m.set("exploration_noise", fmt(exploration_noise));
  m.set("target_noise", fmt(target_noise));
  m.set("target_noise_clip", fmt(target_noise_clip));
  m.set("total_epochs", std::to_string(total_epochs));
  m.set("seed", std::to_string(seed));
  m.set("hidden", std::to_string(hidden));
  m.set("history", std::to_string(history));
  m.set("leaky_slope", fmt(leaky_slope));
  m.set("steps_per_epoch", std::to_string(steps_per_epoch));
  m.set("updates_per_epoch", std::to_string(updates_per_epoch));
  m.set("warmup_transitions", std::to_string(warmup_transitions));
  m.set("sync_interval", std::to_string(sync_interval));
  m.set("threads", std::to_string(threads));
  m.set("log_window", std::to_string(log_window));
  m.set("cert_grad_weight", fmt(cert_grad_weight));
  m.set("cert_grad_batch", std::to_string(cert_grad_batch));
  m.set("episode_ms", fmt(episode_ms));
  m.set("bw_min_mbps", fmt(bw_min_mbps));
  m.set("bw_max_mbps", fmt(bw_max_mbps));
  m.set("rtt_min_ms", fmt(rtt_min_ms));
  m.set("rtt_max_ms", fmt(rtt_max_ms));
  m.set("buffer_bdp", fmt(buffer_bdp));
  m.set("monitor_interval_ms", std::to_string(monitor_interval_ms));
  m.set("zeta", fmt(zeta));
  m.set("beta", fmt(beta));
  property_to_map(property, m);
  return m;
}

double mixed_reward(double raw, double verifier, double lambda) {
  return (1.0 - lambda) * raw + lambda * verifier;
}

// ------------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    return;
  }
  data_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (data_.empty()) throw std::runtime_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != params.size()) throw std::invalid_argument("Adam: gradient size mismatch");
  if (m.size() != params.size()) {
    m = Vector::Zero(params.size());
    v = Vector::Zero(params.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

// ---------------------------------------------------------------- verifier

double verifier_reward(const Network& actor, const PropertySpec& spec, const Vector& state,
                       double cwnd_prev, double cwnd_tcp, std::size_t n_components) {
  if (spec.kind == PropertyKind::performance)
    return certify_performance(actor, spec, state, cwnd_prev, cwnd_tcp, n_components).r_verifier();
  return certify_robustness(actor, spec, state, cwnd_tcp, n_components).r_verifier;
}

double certified_bound_loss(const Network& actor, const PropertySpec& spec, const Vector& state,
                             double cwnd_prev, double cwnd_tcp, std::size_t n_components,
                             double scale, Vector& grad) {
  if (grad.size() != static_cast<Eigen::Index>(actor.param_count()))
    throw std::invalid_argument("certified_bound_loss: gradient size mismatch");
  if (!(cwnd_prev > 0.0) || !(cwnd_tcp > 0.0))
    throw std::invalid_argument("certified_bound_loss: cwnd inputs must be positive");
  const auto dim = static_cast<std::size_t>(spec.split_dimension());
  double loss = 0.0;

  if (spec.kind == PropertyKind::performance) {
    // Action at which the enforced window equals the previous one.
    const double a_star = 0.5 * std::log2(cwnd_prev / cwnd_tcp);
    const double w = scale / (2.0 * static_cast<double>(n_components));
    for (DelayCase which : {DelayCase::large_delay, DelayCase::small_delay}) {
      const Box pre = build_performance_precondition(spec, state, which);
      for (const Box& part : split(pre, dim, n_components)) {
        AbstractTape tape;
        const Box out = actor.forward_abstract_box(part, &tape);
        const double lo = out.lower()[0], hi = out.upper()[0];
        if (which == DelayCase::large_delay && hi > a_star) {
          loss += (hi - a_star) * w;
          actor.backward_abstract(tape, 0.0, w, grad);
        } else if (which == DelayCase::small_delay && lo < a_star) {
          loss += (a_star - lo) * w;
          actor.backward_abstract(tape, -w, 0.0, grad);
        }
      }
    }
    return loss;
  }

  const double a = actor.forward(state);
  const double up = a + 0.5 * std::log2(1.0 + spec.epsilon);
  const double down = a + 0.5 * std::log2(1.0 - spec.epsilon);
  const double w = scale / static_cast<double>(n_components);
  const Box pre = build_robustness_precondition(spec, state);
  double ref_grad = 0.0;
  for (const Box& part : split(pre, dim, n_components)) {
    AbstractTape tape;
    const Box out = actor.forward_abstract_box(part, &tape);
    const double lo = out.lower()[0], hi = out.upper()[0];
    double g_lo = 0.0, g_hi = 0.0;
    if (hi > up) {
      loss += (hi - up) * w;
      g_hi = w;
      ref_grad -= w;
    }
    if (lo < down) {
      loss += (down - lo) * w;
      g_lo = -w;
      ref_grad += w;
    }
    if (g_lo != 0.0 || g_hi != 0.0) actor.backward_abstract(tape, g_lo, g_hi, grad);
  }
  if (ref_grad != 0.0) grad += actor.gradients(state, ref_grad);
  return loss;
}

// ------------------------------------------------------------------- actors

LinkConfig sample_training_link(const TrainConfig& cfg, std::mt19937_64& rng) {
  LinkConfig link;
  const double cap = mbps_to_pps(log_uniform(cfg.bw_min_mbps, cfg.bw_max_mbps, rng), link.mtu);
  link.min_rtt_ms = log_uniform(cfg.rtt_min_ms, cfg.rtt_max_ms, rng);
  link.trace = Trace::constant(cap, cfg.episode_ms);
  link.buffer_pkts = std::max(2.0, std::round(cfg.buffer_bdp * link.bdp_packets(cap)));
  link.monitor_interval_ms = cfg.monitor_interval_ms;
  return link;
}

ActorWorker::ActorWorker(const TrainConfig& cfg, std::uint64_t seed,
                         std::function<LinkConfig(std::mt19937_64&)> make_link)
    : cfg_(cfg), rng_(seed), make_link_(std::move(make_link)) {
  if (!make_link_) {
    const TrainConfig c = cfg_;
    make_link_ = [c](std::mt19937_64& rng) { return sample_training_link(c, rng); };
  }
  reset_env();
}

void ActorWorker::reset_env() { env_.emplace(make_link_(rng_), env_options(cfg_)); }

std::vector<Transition> ActorWorker::collect(int steps, bool random_actions) {
  if (!policy_) throw std::logic_error("ActorWorker: no policy set");
  std::normal_distribution<double> noise(0.0, cfg_.exploration_noise);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    if (env_->done()) reset_env();
    Transition t;
    t.state = env_->state();
    t.cwnd_prev = env_->cwnd_prev();
    t.cwnd_tcp = env_->cwnd_tcp();
    double a = 0.0;
    if (random_actions) {
      a = uniform(rng_);
    } else {
      a = policy_->forward(t.state);
      if (cfg_.exploration_noise > 0.0) a += noise(rng_);
    }
    t.action = std::clamp(a, -1.0, 1.0);
    t.reward_verifier = verifier_reward(*policy_, cfg_.property, t.state, t.cwnd_prev, t.cwnd_tcp,
                                        static_cast<std::size_t>(cfg_.n_components));
    const EnvStep s = env_->step(t.action);
    t.reward_raw = s.reward;
    t.next_state = env_->state();
    t.done = s.done;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Transition> actor_rollout(const LinkConfig& link, const Network& actor,
                                      const TrainConfig& cfg, int steps, std::uint64_t seed) {
  ActorWorker w(cfg, seed, [link](std::mt19937_64&) { return link; });
  w.set_policy(actor);
  return w.collect(steps);
}

// ------------------------------------------------------------------ learner

Matrix critic_input(const Matrix& states, const Matrix& actions) {
  if (states.cols() != actions.cols()) throw std::invalid_argument("critic_input: batch mismatch");
  Matrix x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

Td3Learner::Td3Learner(const TrainConfig& cfg, std::mt19937_64& rng)
    : actor(Network::actor(cfg.layout().dim(), cfg.hidden, cfg.leaky_slope)),
      critic1(Network::critic(cfg.layout().dim() + 1, cfg.hidden, cfg.leaky_slope)),
      critic2(Network::critic(cfg.layout().dim() + 1, cfg.hidden, cfg.leaky_slope)),
      actor_target(actor),
      critic1_target(critic1),
      critic2_target(critic2),
      cfg_(cfg) {
  cfg_.validate();
  actor.initialize(rng);
  critic1.initialize(rng);
  critic2.initialize(rng);
  actor_target = actor;
  critic1_target = critic1;
  critic2_target = critic2;
  actor_opt.lr = cfg.actor_lr;
  critic1_opt.lr = cfg.critic_lr;
  critic2_opt.lr = cfg.critic_lr;
}

void Td3Learner::soft_update(double t) {
  auto blend = [t](Network& target, const Network& online) {
    target.params() = t * online.params() + (1.0 - t) * target.params();
    target.bn_stats() = t * online.bn_stats() + (1.0 - t) * target.bn_stats();
  };
  blend(actor_target, actor);
  blend(critic1_target, critic1);
  blend(critic2_target, critic2);
}

Vector Td3Learner::bellman_targets(const std::vector<const Transition*>& batch,
                                   std::mt19937_64& rng) const {
  const Matrix S2 = gather_states(batch, true);
  Matrix A2 = actor_target.forward_batch(S2, Mode::inference);
  std::normal_distribution<double> noise(0.0, cfg_.target_noise);
  for (Eigen::Index j = 0; j < A2.cols(); ++j) {
    const double eps = cfg_.target_noise > 0.0
                           ? std::clamp(noise(rng), -cfg_.target_noise_clip, cfg_.target_noise_clip)
                           : 0.0;
    A2(0, j) = std::clamp(A2(0, j) + eps, -1.0, 1.0);
  }
  const Matrix X2 = critic_input(S2, A2);
  const Matrix q1 = critic1_target.forward_batch(X2, Mode::inference);
  const Matrix q2 = critic2_target.forward_batch(X2, Mode::inference);
  Vector y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    const Transition& t = *batch[j];
    const double r = mixed_reward(t.reward_raw, t.reward_verifier, cfg_.lambda);
    y[c] = r + (t.done ? 0.0 : cfg_.gamma * std::min(q1(0, c), q2(0, c)));
  }
  return y;
}

LearnerDiagnostics Td3Learner::step(const ReplayBuffer& replay, std::mt19937_64& rng) {
  LearnerDiagnostics d;
  const auto idx = replay.sample(static_cast<std::size_t>(cfg_.batch_size), rng);
  std::vector<const Transition*> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(&replay.at(i));
  const auto B = static_cast<Eigen::Index>(batch.size());

  const Matrix S = gather_states(batch, false);
  Matrix A(1, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Transition& t = *batch[static_cast<std::size_t>(j)];
    A(0, j) = t.action;
    d.reward_raw += t.reward_raw / static_cast<double>(B);
    d.reward_verifier += t.reward_verifier / static_cast<double>(B);
  }
  d.reward_mixed = mixed_reward(d.reward_raw, d.reward_verifier, cfg_.lambda);
  const Vector y = bellman_targets(batch, rng);
  const Matrix X = critic_input(S, A);

  auto fit = [&](Network& critic, Adam& opt) {
    Tape tape;
    const Matrix q = critic.forward_batch(X, Mode::training, &tape);
    const Matrix diff = q - y.transpose();
    Vector g = Vector::Zero(static_cast<Eigen::Index>(critic.param_count()));
    critic.backward(tape, diff * (2.0 / static_cast<double>(B)), g);
    opt.step(critic.params(), g);
    return diff.squaredNorm() / static_cast<double>(B);
  };
  d.critic_loss = 0.5 * (fit(critic1, critic1_opt) + fit(critic2, critic2_opt));
  ++steps;

  if (steps % static_cast<std::uint64_t>(cfg_.policy_delay) == 0) {
    Tape ta;
    const Matrix pi = actor.forward_batch(S, Mode::training, &ta);
    Tape tc;
    const Matrix q = critic1.forward_batch(critic_input(S, pi), Mode::training, &tc);
    d.actor_loss = -q.mean();
    Vector unused = Vector::Zero(static_cast<Eigen::Index>(critic1.param_count()));
    const Matrix gin =
        critic1.backward(tc, Matrix::Constant(1, B, -1.0 / static_cast<double>(B)), unused);
    Vector ga = Vector::Zero(static_cast<Eigen::Index>(actor.param_count()));
    actor.backward(ta, gin.bottomRows(1), ga);

    const double w = cfg_.cert_grad_weight * cfg_.lambda;
    const int m = std::min<int>(cfg_.cert_grad_batch, static_cast<int>(B));
    if (w > 0.0 && m > 0) {
      for (int j = 0; j < m; ++j) {
        const Transition& t = *batch[static_cast<std::size_t>(j)];
        d.cert_loss += certified_bound_loss(actor, cfg_.property, t.state, t.cwnd_prev, t.cwnd_tcp,
                                            static_cast<std::size_t>(cfg_.n_components),
                                            w / static_cast<double>(m), ga);
      }
    }
    actor_opt.step(actor.params(), ga);
    actor.update_running_stats(ta);
    soft_update(cfg_.tau);
    d.actor_updated = true;
  }

  if (!actor.all_finite() || !critic1.all_finite() || !critic2.all_finite())
    throw std::runtime_error("training diverged: non-finite parameters");
  return d;
}

// ---------------------------------------------------------------------- log

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "epoch,reward_raw,reward_verifier,reward_mixed,epoch_rate,wallclock\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.reward_raw << ',' << r.reward_verifier << ',' << r.reward_mixed << ','
       << r.epoch_rate << ',' << r.wallclock << '\n';
}

std::vector<TrainLogRow> read_train_log(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line.rfind("epoch,reward_raw,reward_verifier,reward_mixed,epoch_rate,wallclock", 0) != 0)
    throw std::runtime_error("train log: missing or unexpected header");
  std::vector<TrainLogRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    TrainLogRow r;
    if (!(ls >> r.epoch >> r.reward_raw >> r.reward_verifier >> r.reward_mixed >> r.epoch_rate >>
          r.wallclock))
      throw std::runtime_error("train log line " + std::to_string(lineno) + ": malformed");
    rows.push_back(r);
  }
  return rows;
}

// -------------------------------------------------------------------- train

Checkpoint make_checkpoint(const TrainConfig& cfg, const Td3Learner& learner) {
  Checkpoint c;
  c.step = learner.steps;
  const ConfigMap map = cfg.to_map();
  for (const auto& [k, v] : map.values()) c.config.emplace_back(k, v);
  c.networks.emplace_back("actor", learner.actor);
  c.networks.emplace_back("critic1", learner.critic1);
  c.networks.emplace_back("critic2", learner.critic2);
  c.networks.emplace_back("actor_target", learner.actor_target);
  c.networks.emplace_back("critic1_target", learner.critic1_target);
  c.networks.emplace_back("critic2_target", learner.critic2_target);
  return c;
}

TrainResult train(const TrainConfig& cfg, const std::function<void(const TrainLogRow&)>& on_epoch) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  std::mt19937_64 rng(cfg.seed);
  Td3Learner learner(cfg, rng);

  std::vector<ActorWorker> workers;
  workers.reserve(static_cast<std::size_t>(cfg.actor_count));
  for (int i = 0; i < cfg.actor_count; ++i) {
    workers.emplace_back(cfg, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i) + 1);
    workers.back().set_policy(learner.actor);
  }
  int threads = cfg.threads;
  if (threads == 0)
    threads = static_cast<int>(std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                               static_cast<unsigned>(cfg.actor_count))));

  ReplayBuffer replay(cfg.replay_capacity);
  TrainResult result;
  std::deque<double> window;
  double window_sum = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::uint64_t last_sync = 0;
  const auto start = clock::now();

  std::vector<std::vector<Transition>> batches(workers.size());
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const auto t0 = clock::now();
    const bool random_actions = replay.size() < cfg.warmup_transitions;
    if (threads > 1) {
      // Each worker only touches its own state, so results are independent of
      // scheduling; they are merged in actor order below.
      std::vector<std::thread> pool;
      const auto per = (workers.size() + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
      for (std::size_t t = 0; t < static_cast<std::size_t>(threads); ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t * per; i < std::min(workers.size(), (t + 1) * per); ++i)
              batches[i] = workers[i].collect(cfg.steps_per_epoch, random_actions);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    } else {
      for (std::size_t i = 0; i < workers.size(); ++i) batches[i] = workers[i].collect(cfg.steps_per_epoch, random_actions);
    }

    TrainLogRow row;
    row.epoch = epoch;
    std::size_t count = 0;
    for (auto& b : batches) {
      for (auto& t : b) {
        row.reward_raw += t.reward_raw;
        row.reward_verifier += t.reward_verifier;
        ++count;
        replay.push(std::move(t));
      }
      b.clear();
    }
    row.reward_raw /= static_cast<double>(count);
    row.reward_verifier /= static_cast<double>(count);
    row.reward_mixed = mixed_reward(row.reward_raw, row.reward_verifier, cfg.lambda);

    const bool learning = replay.size() >= std::max(cfg.warmup_transitions, static_cast<std::size_t>(cfg.batch_size));
    if (learning) {
      for (int u = 0; u < cfg.updates_per_epoch; ++u) learner.step(replay, rng);
      if (learner.steps - last_sync >= static_cast<std::uint64_t>(cfg.sync_interval)) {
        for (auto& w : workers) w.set_policy(learner.actor);
        last_sync = learner.steps;
      }
    }

    const auto t1 = clock::now();
    const double dt = std::chrono::duration<double>(t1 - t0).count();
    row.epoch_rate = dt > 0.0 ? 1.0 / dt : 0.0;
    row.wallclock = std::chrono::duration<double>(t1 - start).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    window.push_back(row.reward_mixed);
    window_sum += row.reward_mixed;
    if (window.size() > static_cast<std::size_t>(cfg.log_window)) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (learning && window.size() == static_cast<std::size_t>(cfg.log_window)) {
      const double score = window_sum / static_cast<double>(window.size());
      if (score > best_score) {
        best_score = score;
        result.best = make_checkpoint(cfg, learner);
        result.best_epoch = epoch;
      }
    }
  }
  result.final = make_checkpoint(cfg, learner);
  if (result.best_epoch < 0) {
    result.best = result.final;
    result.best_epoch = cfg.total_epochs - 1;
  }
  return result;
}

}  // namespace certcc
