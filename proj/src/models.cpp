#include "grw/models.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>

#include "grw/error.hpp"
#include "parse_util.hpp"

namespace grw {

namespace {

std::atomic<bool> g_ball_warning_emitted{false};

void require_input_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    fail(ErrorKind::InvalidArgument,
         "input dimension mismatch: expected " + std::to_string(expected) + ", got " + std::to_string(got));
  }
}

// h = W x / sqrt(cols) + beta * b
void affine(std::span<const double> theta, const ParamBlock& w, const ParamBlock& b, double beta,
            std::span<const double> x, Vector& h) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols));
  h.assign(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = theta.data() + w.offset + i * w.cols;
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) s += row[j] * x[j];
    h[i] = s * scale + beta * theta[b.offset + i];
  }
}

ForwardResult forward_impl(const Architecture& arch, const ParamLayout& layout, std::span<const double> theta,
                           std::span<const double> x) {
  ForwardResult out;
  const std::size_t depth = arch.depth();
  out.cache.activations.reserve(depth + 1);
  out.cache.preactivations.reserve(depth + 1);
  out.cache.activations.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l <= depth; ++l) {
    Vector h;
    affine(theta, layout.weights[l], layout.biases[l], arch.beta, out.cache.activations.back(), h);
    if (l < depth) {
      Vector a(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) a[i] = activate(arch.activation, h[i]);
      out.cache.activations.push_back(std::move(a));
    }
    out.cache.preactivations.push_back(std::move(h));
  }
  out.value = out.cache.preactivations.back()[0];
  return out;
}

// grad += seed * d f / d theta, given a forward cache.
void backward_impl(const Architecture& arch, const ParamLayout& layout, std::span<const double> theta,
                   const ForwardCache& cache, double seed, std::span<double> grad) {
  const std::size_t depth = arch.depth();
  Vector delta{seed};  // d f / d h^{l+1}
  for (std::size_t l = depth + 1; l-- > 0;) {
    const ParamBlock& w = layout.weights[l];
    const ParamBlock& b = layout.biases[l];
    const Vector& x_l = cache.activations[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols));
    for (std::size_t i = 0; i < w.rows; ++i) {
      const double di = delta[i];
      grad[b.offset + i] += arch.beta * di;
      if (di == 0.0) continue;
      double* g_row = grad.data() + w.offset + i * w.cols;
      const double s = di * scale;
      for (std::size_t j = 0; j < w.cols; ++j) g_row[j] += s * x_l[j];
    }
    if (l == 0) break;
    // delta^l = sigma'(h^l) * (W^l^T delta^{l+1}) / sqrt(d_l)
    const Vector& h_l = cache.preactivations[l - 1];
    Vector next(w.cols, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
      const double di = delta[i];
      if (di == 0.0) continue;
      const double* row = theta.data() + w.offset + i * w.cols;
      for (std::size_t j = 0; j < w.cols; ++j) next[j] += row[j] * di;
    }
    for (std::size_t j = 0; j < w.cols; ++j) next[j] *= scale * activate_derivative(arch.activation, h_l[j]);
    delta = std::move(next);
  }
}

}  // namespace

double activate(Activation act, double z) { return act == Activation::Erf ? std::erf(z) : std::tanh(z); }

double activate_derivative(Activation act, double z) {
  if (act == Activation::Erf) return 2.0 * std::numbers::inv_sqrtpi * std::exp(-z * z);
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

double activate_second_derivative(Activation act, double z) {
  if (act == Activation::Erf) return -4.0 * std::numbers::inv_sqrtpi * z * std::exp(-z * z);
  const double t = std::tanh(z);
  return -2.0 * t * (1.0 - t * t);
}

std::size_t Architecture::layer_dim(std::size_t l) const {
  if (l == 0) return input_dim;
  if (l <= depth()) return hidden_widths[l - 1];
  if (l == depth() + 1) return 1;
  fail(ErrorKind::InvalidArgument, "layer index out of range");
}

void Architecture::validate() const {
  if (input_dim == 0) fail(ErrorKind::InvalidArgument, "input_dim must be >= 1");
  if (hidden_widths.empty()) fail(ErrorKind::InvalidArgument, "network needs at least one hidden layer");
  for (std::size_t w : hidden_widths) {
    if (w == 0) fail(ErrorKind::InvalidArgument, "hidden widths must be >= 1");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) fail(ErrorKind::InvalidArgument, "beta must be finite and >= 0");
}

ParamLayout ParamLayout::for_architecture(const Architecture& arch) {
  arch.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l <= arch.depth(); ++l) {
    const std::size_t rows = arch.layer_dim(l + 1);
    const std::size_t cols = arch.layer_dim(l);
    layout.weights.push_back({offset, rows, cols});
    offset += rows * cols;
    layout.biases.push_back({offset, rows, 1});
    offset += rows;
  }
  layout.size = offset;
  return layout;
}

ModelParams nn_init(const Architecture& arch, std::uint64_t seed) {
  ModelParams params;
  params.layout = ParamLayout::for_architecture(arch);
  params.flat.assign(params.layout.size, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t last = arch.depth();
  for (std::size_t l = 0; l <= last; ++l) {
    const ParamBlock& w = params.layout.weights[l];
    if (l < last) {
      for (std::size_t k = 0; k < w.size(); ++k) params.flat[w.offset + k] = normal(rng);
    }
    const ParamBlock& b = params.layout.biases[l];
    for (std::size_t k = 0; k < b.size(); ++k) params.flat[b.offset + k] = normal(rng);
  }
  return params;
}

bool check_unit_ball(std::span<const double> x) {
  const bool inside = norm2(x) <= 1.0 + 1e-9;
  if (!inside && !g_ball_warning_emitted.exchange(true)) {
    std::cerr << "warning: input with L2 norm " << norm2(x) << " lies outside the unit ball\n";
  }
  return inside;
}

ForwardResult nn_forward(const Architecture& arch, std::span<const double> theta, std::span<const double> x) {
  const ParamLayout layout = ParamLayout::for_architecture(arch);
  require_input_dim(arch.input_dim, x.size());
  if (theta.size() != layout.size) fail(ErrorKind::InvalidArgument, "parameter vector has the wrong length");
  check_unit_ball(x);
  return forward_impl(arch, layout, theta, x);
}

ForwardResult nn_forward(const Architecture& arch, const ModelParams& params, std::span<const double> x) {
  return nn_forward(arch, std::span<const double>(params.flat), x);
}

Vector nn_grad(const Architecture& arch, std::span<const double> theta, std::span<const double> x) {
  const ParamLayout layout = ParamLayout::for_architecture(arch);
  require_input_dim(arch.input_dim, x.size());
  if (theta.size() != layout.size) fail(ErrorKind::InvalidArgument, "parameter vector has the wrong length");
  check_unit_ball(x);
  const ForwardResult fwd = forward_impl(arch, layout, theta, x);
  Vector grad(layout.size, 0.0);
  backward_impl(arch, layout, theta, fwd.cache, 1.0, grad);
  return grad;
}

Vector nn_grad(const Architecture& arch, const ModelParams& params, std::span<const double> x) {
  return nn_grad(arch, std::span<const double>(params.flat), x);
}

// --- Model -----------------------------------------------------------------

Vector Model::predict(const Vector& theta, const Matrix& x) const {
  require_input_dim(input_dim(), x.rows());
  Vector out(x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i) out[i] = value(theta, x.column(i));
  return out;
}

void Model::accumulate_gradient(const Vector& theta, const Matrix& x, std::span<const double> coeff,
                                Vector& out) const {
  require_input_dim(input_dim(), x.rows());
  if (coeff.size() != x.cols()) fail(ErrorKind::InvalidArgument, "one coefficient per column expected");
  for (std::size_t i = 0; i < x.cols(); ++i) {
    if (coeff[i] == 0.0) continue;
    axpy(coeff[i], gradient(theta, x.column(i)), out);
  }
}

Matrix Model::jacobian(const Vector& theta, const Matrix& x) const {
  require_input_dim(input_dim(), x.rows());
  Matrix j(num_params(), x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i) j.set_column(i, gradient(theta, x.column(i)));
  return j;
}

LinearModel::LinearModel(std::size_t dim) : theta0_(dim, 0.0) {
  if (dim == 0) fail(ErrorKind::InvalidArgument, "linear model needs dim >= 1");
}

LinearModel::LinearModel(Vector theta0) : theta0_(std::move(theta0)) {
  if (theta0_.empty()) fail(ErrorKind::InvalidArgument, "linear model needs dim >= 1");
}

double LinearModel::value(const Vector& theta, std::span<const double> x) const { return dot(theta, x); }

Vector LinearModel::gradient(const Vector& theta, std::span<const double> x) const {
  require_input_dim(theta.size(), x.size());
  return Vector(x.begin(), x.end());
}

Vector LinearModel::predict(const Vector& theta, const Matrix& x) const {
  require_input_dim(theta0_.size(), x.rows());
  return transpose_times(x, theta);
}

void LinearModel::accumulate_gradient(const Vector& /*theta*/, const Matrix& x, std::span<const double> coeff,
                                      Vector& out) const {
  require_input_dim(theta0_.size(), x.rows());
  if (coeff.size() != x.cols()) fail(ErrorKind::InvalidArgument, "one coefficient per column expected");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * coeff[i];
    out[r] += s;
  }
}

MlpModel::MlpModel(Architecture arch, ModelParams init) : arch_(std::move(arch)), init_(std::move(init)) {
  const ParamLayout layout = ParamLayout::for_architecture(arch_);
  if (init_.flat.size() != layout.size) fail(ErrorKind::InvalidArgument, "parameters do not match architecture");
  init_.layout = layout;
}

MlpModel::MlpModel(const Architecture& arch, std::uint64_t seed) : MlpModel(arch, nn_init(arch, seed)) {}

double MlpModel::value(const Vector& theta, std::span<const double> x) const {
  require_input_dim(arch_.input_dim, x.size());
  return forward_impl(arch_, init_.layout, theta, x).value;
}

Vector MlpModel::gradient(const Vector& theta, std::span<const double> x) const {
  require_input_dim(arch_.input_dim, x.size());
  const ForwardResult fwd = forward_impl(arch_, init_.layout, theta, x);
  Vector grad(init_.layout.size, 0.0);
  backward_impl(arch_, init_.layout, theta, fwd.cache, 1.0, grad);
  return grad;
}

void MlpModel::accumulate_gradient(const Vector& theta, const Matrix& x, std::span<const double> coeff,
                                   Vector& out) const {
  require_input_dim(arch_.input_dim, x.rows());
  if (coeff.size() != x.cols()) fail(ErrorKind::InvalidArgument, "one coefficient per column expected");
  for (std::size_t i = 0; i < x.cols(); ++i) {
    if (coeff[i] == 0.0) continue;
    const Vector xi = x.column(i);
    const ForwardResult fwd = forward_impl(arch_, init_.layout, theta, xi);
    backward_impl(arch_, init_.layout, theta, fwd.cache, coeff[i], out);
  }
}

LinearizedModel::LinearizedModel(std::shared_ptr<const Model> base, const Matrix& anchors)
    : base_(std::move(base)) {
  if (!base_) fail(ErrorKind::InvalidArgument, "linearized model needs a base model");
  if (anchors.empty()) return;
  require_input_dim(base_->input_dim(), anchors.rows());
  const Vector& theta0 = base_->initial_params();
  for (std::size_t i = 0; i < anchors.cols(); ++i) {
    Vector x = anchors.column(i);
    if (cache_.contains(x)) continue;
    Entry entry{base_->value(theta0, x), base_->gradient(theta0, x)};
    cache_.emplace(std::move(x), std::move(entry));
  }
}

const LinearizedModel::Entry* LinearizedModel::find(std::span<const double> x) const {
  const auto it = cache_.find(Vector(x.begin(), x.end()));
  return it == cache_.end() ? nullptr : &it->second;
}

double LinearizedModel::initial_value(std::span<const double> x) const {
  if (const Entry* e = find(x)) return e->f0;
  return base_->value(base_->initial_params(), x);
}

Vector LinearizedModel::features(std::span<const double> x) const {
  if (const Entry* e = find(x)) return e->feature;
  return base_->gradient(base_->initial_params(), x);
}

double LinearizedModel::value(const Vector& theta, std::span<const double> x) const {
  require_input_dim(input_dim(), x.size());
  const Vector displacement = subtract(theta, initial_params());
  if (const Entry* e = find(x)) return e->f0 + dot(displacement, e->feature);
  return initial_value(x) + dot(displacement, features(x));
}

Vector LinearizedModel::gradient(const Vector& /*theta*/, std::span<const double> x) const {
  require_input_dim(input_dim(), x.size());
  return features(x);
}

Vector LinearizedModel::predict(const Vector& theta, const Matrix& x) const {
  require_input_dim(input_dim(), x.rows());
  const Vector displacement = subtract(theta, initial_params());
  Vector out(x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i) {
    const Vector xi = x.column(i);
    if (const Entry* e = find(xi)) {
      out[i] = e->f0 + dot(displacement, e->feature);
    } else {
      out[i] = initial_value(xi) + dot(displacement, features(xi));
    }
  }
  return out;
}

void LinearizedModel::accumulate_gradient(const Vector& /*theta*/, const Matrix& x, std::span<const double> coeff,
                                          Vector& out) const {
  require_input_dim(input_dim(), x.rows());
  if (coeff.size() != x.cols()) fail(ErrorKind::InvalidArgument, "one coefficient per column expected");
  for (std::size_t i = 0; i < x.cols(); ++i) {
    if (coeff[i] == 0.0) continue;
    const Vector xi = x.column(i);
    if (const Entry* e = find(xi)) {
      axpy(coeff[i], e->feature, out);
    } else {
      axpy(coeff[i], features(xi), out);
    }
  }
}

double linearized_forward(const LinearizedModel& lin, const Vector& theta, std::span<const double> x) {
  return lin.value(theta, x);
}

Matrix feature_matrix(const LinearizedModel& lin, const Matrix& x) {
  if (x.rows() != lin.input_dim()) fail(ErrorKind::InvalidArgument, "feature_matrix input dimension mismatch");
  Matrix j(lin.num_params(), x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i) j.set_column(i, lin.features(x.column(i)));
  return j;
}

ModelSpec parse_model_spec(std::string_view text) {
  const auto parts = detail::split(text, ':');
  if (parts.size() == 1 && parts[0] == "linear") return LinearSpec{};
  if (parts.size() == 5 && parts[0] == "mlp") {
    Architecture arch;
    arch.input_dim = detail::parse_uint(parts[1]);
    const auto shape = detail::split(parts[2], 'x');
    if (shape.size() != 2) fail(ErrorKind::InvalidArgument, "mlp shape must be <width>x<depth>");
    const std::size_t width = detail::parse_uint(shape[0]);
    const std::size_t depth = detail::parse_uint(shape[1]);
    arch.hidden_widths.assign(depth, width);
    arch.beta = detail::parse_double(parts[3]);
    if (parts[4] == "erf") {
      arch.activation = Activation::Erf;
    } else if (parts[4] == "tanh") {
      arch.activation = Activation::Tanh;
    } else {
      fail(ErrorKind::InvalidArgument, "activation must be erf or tanh");
    }
    arch.validate();
    return arch;
  }
  fail(ErrorKind::InvalidArgument, "unknown model spec '" + std::string(text) + "'");
}

std::string to_string(const ModelSpec& spec) {
  if (std::holds_alternative<LinearSpec>(spec)) return "linear";
  const auto& arch = std::get<Architecture>(spec);
  return "mlp:" + std::to_string(arch.input_dim) + ":" + std::to_string(arch.hidden_widths.front()) + "x" +
         std::to_string(arch.depth()) + ":" + detail::format_short(arch.beta) + ":" +
         (arch.activation == Activation::Erf ? "erf" : "tanh");
}

}  // namespace grw
