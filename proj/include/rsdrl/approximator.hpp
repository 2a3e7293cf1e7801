#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "rsdrl/grid_world.hpp"
#include "rsdrl/return_distribution.hpp"

namespace rsdrl {

enum class Activation { Softplus, Silu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct MlpShape {
  int inputs = 2;
  std::vector<int> hidden = {128, 128};
  int outputs = 1;
  Activation activation = Activation::Softplus;

  std::size_t num_params() const;
  bool operator==(const MlpShape&) const = default;
};

/// Fully connected network with a flat parameter vector. Layer l stores a
/// row-major weight block (out x in) followed by its bias.
class Mlp {
 public:
  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t weight_offset;
    std::size_t bias_offset;
  };

  /// Activations of one forward pass through the hidden layers.
  struct TrunkCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // per hidden layer
    std::vector<std::vector<double>> post;  // per hidden layer
    std::span<const double> features() const { return post.back(); }
  };

  Mlp() = default;
  explicit Mlp(MlpShape shape);

  /// Xavier (Glorot) uniform weights, zero biases. The output layer bound is
  /// multiplied by `output_gain`.
  void xavier_init(std::mt19937_64& rng, double output_gain = 1.0);

  const MlpShape& shape() const { return shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& output_layer() const { return layers_.back(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  void forward_trunk(std::span<const double> input, TrunkCache& cache) const;
  /// Output rows [row_begin, row_begin + out.size()) of the last layer.
  void forward_output_rows(const TrunkCache& cache, std::size_t row_begin,
                           std::span<double> out) const;

  /// Backpropagates d(loss)/d(last hidden features) through the hidden layers,
  /// accumulating into `grad`. One call per distinct input; contributions of
  /// all inputs are summed layer by layer in the given order.
  void backward_trunk(std::span<const TrunkCache* const> caches,
                      std::span<const std::vector<double>> feature_grads,
                      std::span<double> grad) const;

 private:
  MlpShape shape_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

/// Output layers start at a fraction of the Xavier bound: fresh CDF heads are
/// then close to uniform and fresh Q values close to zero.
inline constexpr double kCdfOutputGain = 0.5;
inline constexpr double kQOutputGain = 0.1;

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

/// State features: (x, y) scaled to [0, 1].
std::array<double, 2> state_features(GridState s);

/// One (state, action) input of a minibatch.
struct SampleInput {
  GridState state;
  MoveAction action;
};

/// Monotone CDF approximator.
///
/// The trunk maps state features to one block of n_atoms scores per action.
/// A softmax turns each block into positive increments summing to one and
/// their running sum gives the CDF at the atom locations, which coincide with
/// the support grid points. Between atoms the CDF is linear; it is 0 below
/// z_min and 1 at or above z_max.
class CdfNetwork {
 public:
  CdfNetwork() = default;
  CdfNetwork(const SupportGrid& atoms, std::vector<int> hidden = {128, 128},
             Activation activation = Activation::Softplus);

  void initialize(std::uint64_t seed);

  const SupportGrid& atoms() const { return atoms_; }
  int num_atoms() const { return atoms_.n_z; }
  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }
  std::span<double> params() { return mlp_.params(); }
  std::span<const double> params() const { return mlp_.params(); }

  /// Atom CDF values for one action (n_atoms entries, last one is 1).
  std::vector<double> atom_cdf(GridState s, MoveAction a) const;
  /// Atom CDFs of all four actions from a single trunk pass.
  std::array<std::vector<double>, kNumActions> atom_cdfs(GridState s) const;

  double forward_cdf(GridState s, MoveAction a, double z) const;
  ReturnDistribution predict_distribution(GridState s, MoveAction a, const SupportGrid& grid) const;

 private:
  SupportGrid atoms_;
  Mlp mlp_;
};

/// Where each evaluation point falls on the atom grid:
/// F(z) = constant + (1 - w) C[k] + w C[k + 1].
struct AtomInterpolation {
  struct Entry {
    int k = -1;  // -1: F(z) is the constant below
    double w = 0.0;
    double constant = 0.0;
  };
  std::vector<Entry> entries;

  static AtomInterpolation build(const SupportGrid& atoms, std::span<const double> z_points);
  std::size_t size() const { return entries.size(); }
  double apply(std::span<const double> atom_cdf, std::size_t i) const;
};

/// Evaluates an atom CDF (n_atoms values) at arbitrary points.
std::vector<double> interpolate_cdf(const SupportGrid& atoms, std::span<const double> atom_cdf,
                                    std::span<const double> z_points);

/// Per-sample Cramer term: squared L2 gap sum_z (y - F)^2, whose minimiser is
/// the mean target CDF, or its square root, whose minimiser is a geometric
/// median of the targets.
enum class CramerForm { Squared, Root };

std::string_view to_string(CramerForm f);
CramerForm parse_cramer_form(std::string_view name);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Cramer loss summed over the minibatch, each term taken over the evaluation
/// points, and its exact gradient with respect to every network parameter.
/// `targets` is n_e x z_points.size(). Samples sharing a state share one trunk
/// pass; samples sharing a (state, action) share one head pass.
LossGradient loss_and_gradient(const CdfNetwork& net, const Matrix& targets,
                               std::span<const SampleInput> inputs,
                               std::span<const double> z_points,
                               CramerForm form = CramerForm::Squared);

/// Scalar action-value network for the risk-neutral baseline.
class QNetwork {
 public:
  QNetwork() = default;
  explicit QNetwork(std::vector<int> hidden, Activation activation = Activation::Softplus);

  void initialize(std::uint64_t seed);

  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }
  std::span<double> params() { return mlp_.params(); }
  std::span<const double> params() const { return mlp_.params(); }

  std::array<double, kNumActions> q_values(GridState s) const;

 private:
  Mlp mlp_;
};

/// Mean squared TD error (1/n) sum_i (Q(s_i, a_i) - y_i)^2 and its gradient.
LossGradient td_loss_and_gradient(const QNetwork& net, std::span<const double> targets,
                                  std::span<const SampleInput> inputs);

namespace reference {
/// Per-sample implementation without grouping or threading.
LossGradient loss_and_gradient(const CdfNetwork& net, const Matrix& targets,
                               std::span<const SampleInput> inputs,
                               std::span<const double> z_points,
                               CramerForm form = CramerForm::Squared);
LossGradient td_loss_and_gradient(const QNetwork& net, std::span<const double> targets,
                                  std::span<const SampleInput> inputs);
}  // namespace reference

enum class ClipMode { Norm, Component };

std::string_view to_string(ClipMode m);
ClipMode parse_clip_mode(std::string_view name);

/// Norm mode rescales g so that ||g||_2 <= bound; component mode clamps each
/// entry to [-bound, bound]. Returns the norm before clipping.
double clip_gradient(std::span<double> g, ClipMode mode = ClipMode::Norm, double bound = 1.0);

struct OptimizerState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;

  static OptimizerState for_params(std::size_t n, double learning_rate = 1e-4,
                                   double epsilon = 1e-5);
};

void optimizer_step(std::span<double> params, OptimizerState& opt, std::span<const double> g);

/// Deep copy used for the target network.
template <typename Net>
Net copy_to_target(const Net& main) {
  return main;
}

}  // namespace rsdrl
