#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grw/linalg.hpp"

namespace grw {

enum class Activation { Erf, Tanh };

double activate(Activation act, double z);
double activate_derivative(Activation act, double z);
double activate_second_derivative(Activation act, double z);

/// Fully-connected network in NTK parameterization:
///   h^{l+1} = W^l x^l / sqrt(d_l) + beta * b^l,   x^{l+1} = sigma(h^{l+1}),
/// for l = 0..L, with scalar output f(x) = h^{L+1}.
struct Architecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;  // d_1..d_L
  double beta = 0.0;
  Activation activation = Activation::Erf;

  std::size_t depth() const noexcept { return hidden_widths.size(); }
  /// d_l for l = 0..L+1 (d_{L+1} = 1).
  std::size_t layer_dim(std::size_t l) const;
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ParamBlock {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const noexcept { return rows * cols; }
};

/// Where W^l and b^l live inside the flat parameter vector. Blocks are laid
/// out layer by layer: W^0, b^0, W^1, b^1, ..., W^L, b^L.
struct ParamLayout {
  std::vector<ParamBlock> weights;
  std::vector<ParamBlock> biases;
  std::size_t size = 0;

  static ParamLayout for_architecture(const Architecture& arch);
};

struct ModelParams {
  Vector flat;
  ParamLayout layout;
};

/// W^l, b^l ~ N(0, 1) for l < L; W^L = 0 and b^L ~ N(0, 1). Deterministic in seed.
ModelParams nn_init(const Architecture& arch, std::uint64_t seed);

struct ForwardCache {
  std::vector<Vector> preactivations;  // h^1 .. h^{L+1}
  std::vector<Vector> activations;     // x^0 .. x^L
};

struct ForwardResult {
  double value = 0.0;
  ForwardCache cache;
};

ForwardResult nn_forward(const Architecture& arch, std::span<const double> theta, std::span<const double> x);
ForwardResult nn_forward(const Architecture& arch, const ModelParams& params, std::span<const double> x);

/// Exact reverse-mode gradient of f(x; theta) with respect to the flat parameters.
Vector nn_grad(const Architecture& arch, std::span<const double> theta, std::span<const double> x);
Vector nn_grad(const Architecture& arch, const ModelParams& params, std::span<const double> x);

/// Prints a one-time warning when an input leaves the unit ball. Returns true
/// if the input was inside (within 1e-9).
bool check_unit_ball(std::span<const double> x);

/// Scalar model f(x; theta) over flat parameters. The trainer and the oracles
/// only see this interface, so linear models, networks and linearized networks
/// are interchangeable.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t num_params() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual const Vector& initial_params() const = 0;

  virtual double value(const Vector& theta, std::span<const double> x) const = 0;
  virtual Vector gradient(const Vector& theta, std::span<const double> x) const = 0;

  /// f(x_i; theta) for every column of X.
  virtual Vector predict(const Vector& theta, const Matrix& x) const;
  /// out += sum_i coeff_i * grad_theta f(x_i; theta).
  virtual void accumulate_gradient(const Vector& theta, const Matrix& x, std::span<const double> coeff,
                                   Vector& out) const;

  /// p x n matrix whose i-th column is grad_theta f(x_i; theta).
  Matrix jacobian(const Vector& theta, const Matrix& x) const;
};

/// f(x) = <theta, x>.
class LinearModel final : public Model {
 public:
  explicit LinearModel(std::size_t dim);
  explicit LinearModel(Vector theta0);

  std::size_t num_params() const override { return theta0_.size(); }
  std::size_t input_dim() const override { return theta0_.size(); }
  const Vector& initial_params() const override { return theta0_; }

  double value(const Vector& theta, std::span<const double> x) const override;
  Vector gradient(const Vector& theta, std::span<const double> x) const override;
  Vector predict(const Vector& theta, const Matrix& x) const override;
  void accumulate_gradient(const Vector& theta, const Matrix& x, std::span<const double> coeff,
                           Vector& out) const override;

 private:
  Vector theta0_;
};

class MlpModel final : public Model {
 public:
  MlpModel(Architecture arch, ModelParams init);
  MlpModel(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  const ModelParams& params0() const noexcept { return init_; }

  std::size_t num_params() const override { return init_.flat.size(); }
  std::size_t input_dim() const override { return arch_.input_dim; }
  const Vector& initial_params() const override { return init_.flat; }

  double value(const Vector& theta, std::span<const double> x) const override;
  Vector gradient(const Vector& theta, std::span<const double> x) const override;
  void accumulate_gradient(const Vector& theta, const Matrix& x, std::span<const double> coeff,
                           Vector& out) const override;

 private:
  Architecture arch_;
  ModelParams init_;
};

/// First-order Taylor model of a base model around its initial parameters:
///   f_lin(x; theta) = f(x; theta0) + <theta - theta0, grad f(x; theta0)>.
/// f(x; theta0) and the feature vector are cached for the anchor inputs at
/// construction and never touched again; other inputs are computed on demand.
class LinearizedModel final : public Model {
 public:
  LinearizedModel(std::shared_ptr<const Model> base, const Matrix& anchors);

  std::size_t num_params() const override { return base_->num_params(); }
  std::size_t input_dim() const override { return base_->input_dim(); }
  const Vector& initial_params() const override { return base_->initial_params(); }

  double value(const Vector& theta, std::span<const double> x) const override;
  Vector gradient(const Vector& theta, std::span<const double> x) const override;
  Vector predict(const Vector& theta, const Matrix& x) const override;
  void accumulate_gradient(const Vector& theta, const Matrix& x, std::span<const double> coeff,
                           Vector& out) const override;

  /// f(x; theta0).
  double initial_value(std::span<const double> x) const;
  /// grad_theta f(x; theta0).
  Vector features(std::span<const double> x) const;

  const Model& base() const noexcept { return *base_; }

 private:
  struct Entry {
    double f0;
    Vector feature;
  };
  const Entry* find(std::span<const double> x) const;

  std::shared_ptr<const Model> base_;
  std::map<Vector, Entry> cache_;
};

double linearized_forward(const LinearizedModel& lin, const Vector& theta, std::span<const double> x);

/// p x n matrix of features grad f(x_i; theta0).
Matrix feature_matrix(const LinearizedModel& lin, const Matrix& x);

struct LinearSpec {
  friend bool operator==(const LinearSpec&, const LinearSpec&) = default;
};
using ModelSpec = std::variant<LinearSpec, Architecture>;

/// "linear" or "mlp:<d0>:<width>x<depth>:<beta>:<erf|tanh>".
ModelSpec parse_model_spec(std::string_view text);
std::string to_string(const ModelSpec& spec);

}  // namespace grw
