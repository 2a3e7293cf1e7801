#include "rsdrl/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rsdrl/kernels.hpp"
#include "rsdrl/random.hpp"

namespace rsdrl {

std::string_view to_string(Activation a) { return a == Activation::Softplus ? "softplus" : "silu"; }

Activation parse_activation(std::string_view name) {
  if (name == "softplus") return Activation::Softplus;
  if (name == "silu") return Activation::Silu;
  throw std::invalid_argument("unknown activation '" + std::string(name) +
                              "' (expected softplus or silu)");
}

std::string_view to_string(ClipMode m) { return m == ClipMode::Norm ? "norm" : "component"; }

ClipMode parse_clip_mode(std::string_view name) {
  if (name == "norm") return ClipMode::Norm;
  if (name == "component") return ClipMode::Component;
  throw std::invalid_argument("unknown clip mode '" + std::string(name) +
                              "' (expected norm or component)");
}

std::string_view to_string(CramerForm f) { return f == CramerForm::Root ? "root" : "squared"; }

CramerForm parse_cramer_form(std::string_view name) {
  if (name == "squared") return CramerForm::Squared;
  if (name == "root") return CramerForm::Root;
  throw std::invalid_argument("unknown Cramer loss form '" + std::string(name) +
                              "' (expected squared or root)");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Softplus: return x > 30.0 ? x : std::log1p(std::exp(x));
    case Activation::Silu: return x / (1.0 + std::exp(-x));
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  const double sig = 1.0 / (1.0 + std::exp(-x));
  switch (a) {
    case Activation::Softplus: return sig;
    case Activation::Silu: return sig * (1.0 + x * (1.0 - sig));
  }
  return 1.0;
}

std::array<double, 2> state_features(GridState s) {
  return {static_cast<double>(s.x) / (kGridSize - 1), static_cast<double>(s.y) / (kGridSize - 1)};
}

// ---------------------------------------------------------------------------
// Mlp

std::size_t MlpShape::num_params() const {
  std::size_t n = 0;
  std::size_t in = static_cast<std::size_t>(inputs);
  for (int h : hidden) {
    n += static_cast<std::size_t>(h) * (in + 1);
    in = static_cast<std::size_t>(h);
  }
  return n + static_cast<std::size_t>(outputs) * (in + 1);
}

Mlp::Mlp(MlpShape shape) : shape_(std::move(shape)) {
  if (shape_.inputs <= 0 || shape_.outputs <= 0 || shape_.hidden.empty()) {
    throw std::invalid_argument("Mlp: needs inputs, outputs and at least one hidden layer");
  }
  std::size_t offset = 0;
  std::size_t in = static_cast<std::size_t>(shape_.inputs);
  auto add = [&](std::size_t out) {
    layers_.push_back({in, out, offset, offset + in * out});
    offset += in * out + out;
    in = out;
  };
  for (int h : shape_.hidden) {
    if (h <= 0) throw std::invalid_argument("Mlp: hidden sizes must be positive");
    add(static_cast<std::size_t>(h));
  }
  add(static_cast<std::size_t>(shape_.outputs));
  params_.assign(offset, 0.0);
}

void Mlp::xavier_init(std::mt19937_64& rng, double output_gain) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const auto& layer : layers_) {
    double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    if (&layer == &layers_.back()) bound *= output_gain;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < layer.in * layer.out; ++i) params_[layer.weight_offset + i] = dist(rng);
  }
}

void Mlp::forward_trunk(std::span<const double> input, TrunkCache& cache) const {
  cache.input.assign(input.begin(), input.end());
  const std::size_t hidden = layers_.size() - 1;
  cache.pre.resize(hidden);
  cache.post.resize(hidden);
  std::span<const double> x = cache.input;
  for (std::size_t l = 0; l < hidden; ++l) {
    const Layer& layer = layers_[l];
    cache.pre[l].resize(layer.out);
    cache.post[l].resize(layer.out);
    kernels::dense_forward(params_.data() + layer.weight_offset, params_.data() + layer.bias_offset,
                           layer.in, x, cache.pre[l]);
    for (std::size_t i = 0; i < layer.out; ++i) {
      cache.post[l][i] = activate(shape_.activation, cache.pre[l][i]);
    }
    x = cache.post[l];
  }
}

void Mlp::forward_output_rows(const TrunkCache& cache, std::size_t row_begin,
                              std::span<double> out) const {
  const Layer& layer = layers_.back();
  kernels::dense_forward(params_.data() + layer.weight_offset + row_begin * layer.in,
                         params_.data() + layer.bias_offset + row_begin, layer.in,
                         cache.features(), out);
}

void Mlp::backward_trunk(std::span<const TrunkCache* const> caches,
                         std::span<const std::vector<double>> feature_grads,
                         std::span<double> grad) const {
  const std::size_t n = caches.size();
  std::vector<std::vector<double>> g_post(feature_grads.begin(), feature_grads.end());
  std::vector<std::vector<double>> g_pre(n);
  std::vector<kernels::GradContribution> contribs(n);
  for (std::size_t l = layers_.size() - 1; l-- > 0;) {
    const Layer& layer = layers_[l];
    for (std::size_t j = 0; j < n; ++j) {
      g_pre[j].resize(layer.out);
      for (std::size_t i = 0; i < layer.out; ++i) {
        g_pre[j][i] = g_post[j][i] * activate_derivative(shape_.activation, caches[j]->pre[l][i]);
      }
      const double* input = l == 0 ? caches[j]->input.data() : caches[j]->post[l - 1].data();
      contribs[j] = {input, g_pre[j].data()};
    }
    kernels::dense_accumulate(grad.data() + layer.weight_offset, grad.data() + layer.bias_offset,
                              layer.in, layer.out, contribs);
    if (l == 0) break;
    for (std::size_t j = 0; j < n; ++j) {
      g_post[j].assign(layer.in, 0.0);
      kernels::dense_backward_input(params_.data() + layer.weight_offset, layer.in, g_pre[j],
                                    g_post[j]);
    }
  }
}

// ---------------------------------------------------------------------------
// CdfNetwork

namespace {

// Softmax of `logits` into `p`, running sum into `cdf`.
void softmax_cumsum(std::span<const double> logits, std::span<double> p, std::span<double> cdf) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    sum += p[k];
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] /= sum;
    acc += p[k];
    cdf[k] = std::min(acc, 1.0);
  }
}

// d(loss)/d(logits) given d(loss)/d(atom cdf).
void head_backward(std::span<const double> p, std::span<const double> g_cdf,
                   std::span<double> g_logits) {
  const std::size_t n = p.size();
  // d/dp_j = sum_{k >= j} g_cdf[k]
  double suffix = 0.0;
  double dot = 0.0;
  for (std::size_t j = n; j-- > 0;) {
    suffix += g_cdf[j];
    g_logits[j] = suffix;
    dot += p[j] * suffix;
  }
  for (std::size_t j = 0; j < n; ++j) g_logits[j] = p[j] * (g_logits[j] - dot);
}

}  // namespace

CdfNetwork::CdfNetwork(const SupportGrid& atoms, std::vector<int> hidden, Activation activation)
    : atoms_(atoms),
      mlp_(MlpShape{2, std::move(hidden), kNumActions * atoms.n_z, activation}) {
  atoms_.validate();
}

void CdfNetwork::initialize(std::uint64_t seed) {
  auto rng = make_stream(seed, StreamId::NetworkInit);
  mlp_.xavier_init(rng, kCdfOutputGain);
}

std::vector<double> CdfNetwork::atom_cdf(GridState s, MoveAction a) const {
  const auto features = state_features(s);
  Mlp::TrunkCache cache;
  mlp_.forward_trunk(features, cache);
  const auto n = static_cast<std::size_t>(atoms_.n_z);
  std::vector<double> logits(n), p(n), cdf(n);
  mlp_.forward_output_rows(cache, static_cast<std::size_t>(to_index(a)) * n, logits);
  softmax_cumsum(logits, p, cdf);
  return cdf;
}

std::array<std::vector<double>, kNumActions> CdfNetwork::atom_cdfs(GridState s) const {
  const auto features = state_features(s);
  Mlp::TrunkCache cache;
  mlp_.forward_trunk(features, cache);
  const auto n = static_cast<std::size_t>(atoms_.n_z);
  std::vector<double> logits(kNumActions * n), p(n);
  mlp_.forward_output_rows(cache, 0, logits);
  std::array<std::vector<double>, kNumActions> out;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    out[a].resize(n);
    softmax_cumsum(std::span<const double>(logits).subspan(a * n, n), p, out[a]);
  }
  return out;
}

double CdfNetwork::forward_cdf(GridState s, MoveAction a, double z) const {
  const auto cdf = atom_cdf(s, a);
  const double zs[1] = {z};
  const double v = interpolate_cdf(atoms_, cdf, zs)[0];
  if (!std::isfinite(v) || !std::isfinite(cdf.back())) {
    throw NonFiniteError("forward_cdf: non-finite output (non-finite parameters?)");
  }
  return v;
}

ReturnDistribution CdfNetwork::predict_distribution(GridState s, MoveAction a,
                                                    const SupportGrid& grid) const {
  auto cdf = atom_cdf(s, a);
  if (!std::isfinite(cdf.back())) throw NonFiniteError("predict_distribution: non-finite output");
  if (grid == atoms_) return {grid, std::move(cdf)};
  auto values = interpolate_cdf(atoms_, cdf, grid.points());
  values.back() = 1.0;
  return {grid, std::move(values)};
}

AtomInterpolation AtomInterpolation::build(const SupportGrid& atoms,
                                           std::span<const double> z_points) {
  AtomInterpolation t;
  t.entries.resize(z_points.size());
  const double dz = atoms.spacing();
  for (std::size_t i = 0; i < z_points.size(); ++i) {
    const double z = z_points[i];
    auto& e = t.entries[i];
    if (z < atoms.z_min) {
      e = {-1, 0.0, 0.0};
    } else if (z >= atoms.z_max) {
      e = {-1, 0.0, 1.0};
    } else {
      const double pos = (z - atoms.z_min) / dz;
      const int k = std::min(static_cast<int>(pos), atoms.n_z - 2);
      e = {k, pos - k, 0.0};
    }
  }
  return t;
}

double AtomInterpolation::apply(std::span<const double> atom_cdf, std::size_t i) const {
  const Entry& e = entries[i];
  if (e.k < 0) return e.constant;
  const auto k = static_cast<std::size_t>(e.k);
  return std::min(atom_cdf[k] + e.w * (atom_cdf[k + 1] - atom_cdf[k]), atom_cdf[k + 1]);
}

std::vector<double> interpolate_cdf(const SupportGrid& atoms, std::span<const double> atom_cdf,
                                    std::span<const double> z_points) {
  const auto table = AtomInterpolation::build(atoms, z_points);
  std::vector<double> out(z_points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = table.apply(atom_cdf, i);
  return out;
}

namespace {

// Loss terms and d(loss)/d(atom cdf) for all samples sharing one head output.
// Returns per-sample losses in `losses` (indexed by sample).
void cramer_head_grad(const AtomInterpolation& interp, std::span<const double> cdf,
                      const Matrix& targets, std::span<const std::size_t> samples,
                      CramerForm form, std::span<double> losses, std::span<double> g_cdf) {
  const std::size_t m = interp.size();
  std::vector<double> F(m), gF(m, 0.0), diff(m);
  for (std::size_t z = 0; z < m; ++z) F[z] = interp.apply(cdf, z);
  for (std::size_t i : samples) {
    const auto y = targets.row(i);
    double sq = 0.0;
    for (std::size_t z = 0; z < m; ++z) {
      diff[z] = F[z] - y[z];
      sq += diff[z] * diff[z];
    }
    if (form == CramerForm::Squared) {
      losses[i] = sq;
      for (std::size_t z = 0; z < m; ++z) gF[z] += 2.0 * diff[z];
      continue;
    }
    const double norm = std::sqrt(sq);
    losses[i] = norm;
    if (norm > 0.0) {
      for (std::size_t z = 0; z < m; ++z) gF[z] += diff[z] / norm;
    }
  }
  std::fill(g_cdf.begin(), g_cdf.end(), 0.0);
  for (std::size_t z = 0; z < m; ++z) {
    const auto& e = interp.entries[z];
    if (e.k < 0) continue;
    const auto k = static_cast<std::size_t>(e.k);
    g_cdf[k] += (1.0 - e.w) * gF[z];
    g_cdf[k + 1] += e.w * gF[z];
  }
}

void check_shapes(const Matrix& targets, std::size_t n_inputs, std::size_t n_points) {
  if (targets.rows != n_inputs || targets.cols != n_points) {
    throw std::invalid_argument("loss_and_gradient: targets must be n_e x n_points");
  }
}

void check_losses(std::span<const double> losses) {
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) {
      throw NonFiniteError("non-finite loss at minibatch sample " + std::to_string(i));
    }
  }
}

}  // namespace

LossGradient loss_and_gradient(const CdfNetwork& net, const Matrix& targets,
                               std::span<const SampleInput> inputs,
                               std::span<const double> z_points, CramerForm form) {
  check_shapes(targets, inputs.size(), z_points.size());
  const Mlp& mlp = net.mlp();
  const auto n = static_cast<std::size_t>(net.num_atoms());
  const auto interp = AtomInterpolation::build(net.atoms(), z_points);

  // Distinct states, then distinct (state, action) groups, in first-seen order.
  std::array<int, kNumStates> state_slot;
  state_slot.fill(-1);
  std::vector<GridState> states;
  std::array<int, kNumStates * kNumActions> group_slot;
  group_slot.fill(-1);
  struct Group {
    int state_slot;
    MoveAction action;
    std::vector<std::size_t> samples;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const int si = inputs[i].state.index();
    if (state_slot[si] < 0) {
      state_slot[si] = static_cast<int>(states.size());
      states.push_back(inputs[i].state);
    }
    const int gi = si * kNumActions + to_index(inputs[i].action);
    if (group_slot[gi] < 0) {
      group_slot[gi] = static_cast<int>(groups.size());
      groups.push_back({state_slot[si], inputs[i].action, {}});
    }
    groups[static_cast<std::size_t>(group_slot[gi])].samples.push_back(i);
  }

  std::vector<Mlp::TrunkCache> caches(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    mlp.forward_trunk(state_features(states[s]), caches[s]);
  }

  std::vector<double> losses(inputs.size(), 0.0);
  std::vector<std::vector<double>> g_logits(groups.size(), std::vector<double>(n));
  const auto n_groups = static_cast<long>(groups.size());
#pragma omp parallel for schedule(dynamic)
  for (long gi = 0; gi < n_groups; ++gi) {
    const Group& g = groups[static_cast<std::size_t>(gi)];
    std::vector<double> logits(n), p(n), cdf(n), g_cdf(n);
    mlp.forward_output_rows(caches[static_cast<std::size_t>(g.state_slot)],
                            static_cast<std::size_t>(to_index(g.action)) * n, logits);
    softmax_cumsum(logits, p, cdf);
    cramer_head_grad(interp, cdf, targets, g.samples, form, losses, g_cdf);
    head_backward(p, g_cdf, g_logits[static_cast<std::size_t>(gi)]);
  }
  check_losses(losses);

  LossGradient out;
  for (double l : losses) out.loss += l;
  out.gradient.assign(mlp.num_params(), 0.0);

  const Mlp::Layer& last = mlp.output_layer();
  std::vector<std::vector<double>> feature_grads(states.size(), std::vector<double>(last.in, 0.0));
  for (int a = 0; a < kNumActions; ++a) {
    std::vector<kernels::GradContribution> contribs;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (to_index(groups[gi].action) != a) continue;
      const auto slot = static_cast<std::size_t>(groups[gi].state_slot);
      contribs.push_back({caches[slot].features().data(), g_logits[gi].data()});
    }
    if (contribs.empty()) continue;
    const std::size_t row0 = static_cast<std::size_t>(a) * n;
    kernels::dense_accumulate(out.gradient.data() + last.weight_offset + row0 * last.in,
                              out.gradient.data() + last.bias_offset + row0, last.in, n, contribs);
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const std::size_t row0 = static_cast<std::size_t>(to_index(groups[gi].action)) * n;
    kernels::dense_backward_input(mlp.params().data() + last.weight_offset + row0 * last.in,
                                  last.in, g_logits[gi],
                                  feature_grads[static_cast<std::size_t>(groups[gi].state_slot)]);
  }

  std::vector<const Mlp::TrunkCache*> cache_ptrs;
  for (const auto& c : caches) cache_ptrs.push_back(&c);
  mlp.backward_trunk(cache_ptrs, feature_grads, out.gradient);
  return out;
}

// ---------------------------------------------------------------------------
// QNetwork

QNetwork::QNetwork(std::vector<int> hidden, Activation activation)
    : mlp_(MlpShape{2, std::move(hidden), kNumActions, activation}) {}

void QNetwork::initialize(std::uint64_t seed) {
  auto rng = make_stream(seed, StreamId::NetworkInit);
  mlp_.xavier_init(rng, kQOutputGain);
}

std::array<double, kNumActions> QNetwork::q_values(GridState s) const {
  Mlp::TrunkCache cache;
  mlp_.forward_trunk(state_features(s), cache);
  std::array<double, kNumActions> q{};
  mlp_.forward_output_rows(cache, 0, q);
  return q;
}

LossGradient td_loss_and_gradient(const QNetwork& net, std::span<const double> targets,
                                  std::span<const SampleInput> inputs) {
  if (targets.size() != inputs.size() || inputs.empty()) {
    throw std::invalid_argument("td_loss_and_gradient: one target per input required");
  }
  const Mlp& mlp = net.mlp();
  std::array<int, kNumStates> state_slot;
  state_slot.fill(-1);
  std::vector<GridState> states;
  for (const auto& in : inputs) {
    if (state_slot[in.state.index()] < 0) {
      state_slot[in.state.index()] = static_cast<int>(states.size());
      states.push_back(in.state);
    }
  }
  std::vector<Mlp::TrunkCache> caches(states.size());
  std::vector<std::array<double, kNumActions>> q(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    mlp.forward_trunk(state_features(states[s]), caches[s]);
    mlp.forward_output_rows(caches[s], 0, q[s]);
  }

  const double scale = 1.0 / static_cast<double>(inputs.size());
  std::vector<double> losses(inputs.size());
  std::vector<std::array<double, kNumActions>> g_out(states.size());
  for (auto& g : g_out) g.fill(0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto slot = static_cast<std::size_t>(state_slot[inputs[i].state.index()]);
    const auto a = static_cast<std::size_t>(to_index(inputs[i].action));
    const double err = q[slot][a] - targets[i];
    losses[i] = scale * err * err;
    g_out[slot][a] += 2.0 * scale * err;
  }
  check_losses(losses);

  LossGradient out;
  for (double l : losses) out.loss += l;
  out.gradient.assign(mlp.num_params(), 0.0);
  const Mlp::Layer& last = mlp.output_layer();
  std::vector<kernels::GradContribution> contribs;
  std::vector<std::vector<double>> feature_grads(states.size(), std::vector<double>(last.in, 0.0));
  for (std::size_t s = 0; s < states.size(); ++s) {
    contribs.push_back({caches[s].features().data(), g_out[s].data()});
    kernels::dense_backward_input(mlp.params().data() + last.weight_offset, last.in, g_out[s],
                                  feature_grads[s]);
  }
  kernels::dense_accumulate(out.gradient.data() + last.weight_offset,
                            out.gradient.data() + last.bias_offset, last.in, last.out, contribs);
  std::vector<const Mlp::TrunkCache*> cache_ptrs;
  for (const auto& c : caches) cache_ptrs.push_back(&c);
  mlp.backward_trunk(cache_ptrs, feature_grads, out.gradient);
  return out;
}

// ---------------------------------------------------------------------------
// Serial per-sample reference

namespace reference {

namespace {

struct Trunk {
  std::vector<double> input;
  std::vector<std::vector<double>> pre, post;
};

Trunk trunk_forward(const Mlp& mlp, GridState s) {
  Trunk t;
  const auto f = state_features(s);
  t.input.assign(f.begin(), f.end());
  const auto& layers = mlp.layers();
  const auto params = mlp.params();
  std::span<const double> x = t.input;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    std::vector<double> pre(layers[l].out), post(layers[l].out);
    kernels::serial::dense_forward(params.data() + layers[l].weight_offset,
                                   params.data() + layers[l].bias_offset, layers[l].in, x, pre);
    for (std::size_t i = 0; i < pre.size(); ++i) post[i] = activate(mlp.shape().activation, pre[i]);
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
    x = t.post.back();
  }
  return t;
}

void trunk_backward(const Mlp& mlp, const Trunk& t, std::vector<double> g_post,
                    std::span<double> grad) {
  const auto& layers = mlp.layers();
  const auto params = mlp.params();
  for (std::size_t l = layers.size() - 1; l-- > 0;) {
    const auto& layer = layers[l];
    std::vector<double> g_pre(layer.out);
    for (std::size_t i = 0; i < layer.out; ++i) {
      g_pre[i] = g_post[i] * activate_derivative(mlp.shape().activation, t.pre[l][i]);
    }
    const double* input = l == 0 ? t.input.data() : t.post[l - 1].data();
    const kernels::GradContribution c{input, g_pre.data()};
    kernels::serial::dense_accumulate(grad.data() + layer.weight_offset,
                                      grad.data() + layer.bias_offset, layer.in, layer.out, {&c, 1});
    if (l == 0) break;
    g_post.assign(layer.in, 0.0);
    kernels::serial::dense_backward_input(params.data() + layer.weight_offset, layer.in, g_pre,
                                          g_post);
  }
}

}  // namespace

LossGradient loss_and_gradient(const CdfNetwork& net, const Matrix& targets,
                               std::span<const SampleInput> inputs,
                               std::span<const double> z_points, CramerForm form) {
  check_shapes(targets, inputs.size(), z_points.size());
  const Mlp& mlp = net.mlp();
  const auto& last = mlp.output_layer();
  const auto params = mlp.params();
  const auto n = static_cast<std::size_t>(net.num_atoms());
  const auto interp = AtomInterpolation::build(net.atoms(), z_points);

  LossGradient out;
  out.gradient.assign(mlp.num_params(), 0.0);
  std::vector<double> losses(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Trunk t = trunk_forward(mlp, inputs[i].state);
    const std::size_t row0 = static_cast<std::size_t>(to_index(inputs[i].action)) * n;
    std::vector<double> logits(n), p(n), cdf(n), g_cdf(n), g_logits(n);
    kernels::serial::dense_forward(params.data() + last.weight_offset + row0 * last.in,
                                   params.data() + last.bias_offset + row0, last.in, t.post.back(),
                                   logits);
    softmax_cumsum(logits, p, cdf);
    const std::size_t sample[1] = {i};
    cramer_head_grad(interp, cdf, targets, sample, form, losses, g_cdf);
    head_backward(p, g_cdf, g_logits);

    const kernels::GradContribution c{t.post.back().data(), g_logits.data()};
    kernels::serial::dense_accumulate(out.gradient.data() + last.weight_offset + row0 * last.in,
                                      out.gradient.data() + last.bias_offset + row0, last.in, n,
                                      {&c, 1});
    std::vector<double> g_features(last.in, 0.0);
    kernels::serial::dense_backward_input(params.data() + last.weight_offset + row0 * last.in,
                                          last.in, g_logits, g_features);
    trunk_backward(mlp, t, std::move(g_features), out.gradient);
  }
  check_losses(losses);
  for (double l : losses) out.loss += l;
  return out;
}

LossGradient td_loss_and_gradient(const QNetwork& net, std::span<const double> targets,
                                  std::span<const SampleInput> inputs) {
  if (targets.size() != inputs.size() || inputs.empty()) {
    throw std::invalid_argument("td_loss_and_gradient: one target per input required");
  }
  const Mlp& mlp = net.mlp();
  const auto& last = mlp.output_layer();
  const auto params = mlp.params();
  const double scale = 1.0 / static_cast<double>(inputs.size());
  LossGradient out;
  out.gradient.assign(mlp.num_params(), 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Trunk t = trunk_forward(mlp, inputs[i].state);
    std::array<double, kNumActions> q{};
    kernels::serial::dense_forward(params.data() + last.weight_offset,
                                   params.data() + last.bias_offset, last.in, t.post.back(), q);
    const auto a = static_cast<std::size_t>(to_index(inputs[i].action));
    const double err = q[a] - targets[i];
    out.loss += scale * err * err;
    std::array<double, kNumActions> g{};
    g[a] = 2.0 * scale * err;
    const kernels::GradContribution c{t.post.back().data(), g.data()};
    kernels::serial::dense_accumulate(out.gradient.data() + last.weight_offset,
                                      out.gradient.data() + last.bias_offset, last.in, last.out,
                                      {&c, 1});
    std::vector<double> g_features(last.in, 0.0);
    kernels::serial::dense_backward_input(params.data() + last.weight_offset, last.in, g,
                                          g_features);
    trunk_backward(mlp, t, std::move(g_features), out.gradient);
  }
  if (!std::isfinite(out.loss)) throw NonFiniteError("non-finite TD loss");
  return out;
}

}  // namespace reference

// ---------------------------------------------------------------------------
// Optimisation

double clip_gradient(std::span<double> g, ClipMode mode, double bound) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (mode == ClipMode::Norm) {
    if (norm > bound) {
      const double scale = bound / norm;
      for (double& v : g) v *= scale;
    }
  } else {
    for (double& v : g) v = std::clamp(v, -bound, bound);
  }
  return norm;
}

OptimizerState OptimizerState::for_params(std::size_t n, double learning_rate, double epsilon) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.epsilon = epsilon;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void optimizer_step(std::span<double> params, OptimizerState& opt, std::span<const double> g) {
  if (params.size() != g.size() || opt.m.size() != params.size()) {
    throw std::invalid_argument("optimizer_step: shape mismatch");
  }
  ++opt.step;
  kernels::adam_update(params, opt.m, opt.v, g, opt.learning_rate, opt.beta1, opt.beta2,
                       opt.epsilon, opt.step);
}

}  // namespace rsdrl
