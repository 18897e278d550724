#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "grw/error.hpp"
#include "grw/models.hpp"

using namespace grw;

namespace {

Vector random_point(std::size_t d, std::mt19937_64& rng, double radius = 0.9) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector x(d);
  for (double& v : x) v = n(rng);
  const double s = radius / norm2(x);
  for (double& v : x) v *= s;
  return x;
}

Vector perturbed(const Vector& theta, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vector t = theta;
  for (double& v : t) v += n(rng);
  return t;
}

Architecture arch_of(std::size_t d0, std::vector<std::size_t> widths, double beta, Activation act) {
  Architecture a;
  a.input_dim = d0;
  a.hidden_widths = std::move(widths);
  a.beta = beta;
  a.activation = act;
  return a;
}

}  // namespace

TEST(NnInit, LastLayerZeroAndConstantOutput) {
  const Architecture arch = arch_of(3, {16, 8}, 0.5, Activation::Erf);
  const ModelParams p = nn_init(arch, 4);
  const ParamBlock& last = p.layout.weights.back();
  for (std::size_t i = 0; i < last.size(); ++i) EXPECT_EQ(p.flat[last.offset + i], 0.0);
  const double bL = p.flat[p.layout.biases.back().offset];
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(nn_forward(arch, p, random_point(3, rng)).value, arch.beta * bL);
}

TEST(NnInit, ZeroOutputInitProperty) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Architecture arch = arch_of(4, {10}, 0.3, seed % 2 ? Activation::Tanh : Activation::Erf);
    const ModelParams p = nn_init(arch, seed);
    const double bL = p.flat[p.layout.biases.back().offset];
    EXPECT_LE(std::abs(nn_forward(arch, p, random_point(4, rng)).value - arch.beta * bL), 1e-12);
  }
}

TEST(NnInit, Deterministic) {
  const Architecture arch = arch_of(5, {7, 7}, 0.1, Activation::Erf);
  EXPECT_EQ(nn_init(arch, 9).flat, nn_init(arch, 9).flat);
  EXPECT_NE(nn_init(arch, 9).flat, nn_init(arch, 10).flat);
}

TEST(NnInit, GaussianFirstLayerMean) {
  const Architecture arch = arch_of(2, {1000}, 0.1, Activation::Erf);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ModelParams p = nn_init(arch, seed);
    const ParamBlock& w0 = p.layout.weights.front();
    for (std::size_t i = 0; i < w0.size(); ++i) sum += p.flat[w0.offset + i];
    count += w0.size();
  }
  EXPECT_EQ(count, 40000u);
  // three standard errors of the mean of `count` N(0, 1) draws
  EXPECT_LT(std::abs(sum / static_cast<double>(count)), 3.0 / std::sqrt(static_cast<double>(count)));
}

TEST(NnForward, ZeroParamsGiveZero) {
  for (Activation act : {Activation::Erf, Activation::Tanh}) {
    const Architecture arch = arch_of(3, {5, 4}, 0.0, act);
    const Vector theta(ParamLayout::for_architecture(arch).size, 0.0);
    EXPECT_EQ(nn_forward(arch, theta, Vector{0.1, 0.2, 0.3}).value, 0.0);
  }
}

TEST(NnForward, HandSetNetwork) {
  const Architecture arch = arch_of(2, {1}, 1.0, Activation::Erf);
  const ParamLayout layout = ParamLayout::for_architecture(arch);
  ASSERT_EQ(layout.size, 2u + 1u + 1u + 1u);
  Vector theta(layout.size, 0.0);
  theta[layout.weights[0].offset] = 1.0;
  theta[layout.weights[0].offset + 1] = 0.0;
  theta[layout.biases[0].offset] = 0.0;
  theta[layout.weights[1].offset] = 2.0;
  theta[layout.biases[1].offset] = 0.5;
  const ForwardResult r = nn_forward(arch, theta, Vector{1.0, 0.0});
  const double h1 = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(r.cache.preactivations[0][0], h1, 1e-15);
  EXPECT_NEAR(r.value, 2.0 * std::erf(h1) + 0.5, 1e-15);
  ASSERT_EQ(r.cache.activations.size(), 2u);
  ASSERT_EQ(r.cache.preactivations.size(), 2u);
}

TEST(NnForward, DimensionMismatchThrows) {
  const Architecture arch = arch_of(2, {3}, 0.1, Activation::Erf);
  const ModelParams p = nn_init(arch, 0);
  EXPECT_THROW(nn_forward(arch, p, Vector{1.0, 0.0, 0.0}), Error);
  EXPECT_THROW(nn_forward(arch, Vector(3, 0.0), Vector{1.0, 0.0}), Error);
}

TEST(NnForward, OutsideUnitBallWarnsOnly) {
  const Architecture arch = arch_of(2, {3}, 0.1, Activation::Erf);
  EXPECT_FALSE(check_unit_ball(Vector{2.0, 0.0}));
  EXPECT_TRUE(check_unit_ball(Vector{0.6, 0.8}));
  EXPECT_NO_THROW(nn_forward(arch, nn_init(arch, 0), Vector{2.0, 0.0}));
}

TEST(NnGrad, LastLayerClosedForms) {
  const Architecture arch = arch_of(3, {6}, 0.7, Activation::Tanh);
  const ModelParams p0 = nn_init(arch, 5);
  std::mt19937_64 rng(3);
  const Vector theta = perturbed(p0.flat, rng, 0.3);
  const Vector x = random_point(3, rng);
  const Vector g = nn_grad(arch, theta, x);
  const ForwardResult fr = nn_forward(arch, theta, x);
  EXPECT_EQ(g[p0.layout.biases.back().offset], arch.beta);
  const ParamBlock& wl = p0.layout.weights.back();
  for (std::size_t j = 0; j < wl.cols; ++j) {
    EXPECT_NEAR(g[wl.offset + j], fr.cache.activations.back()[j] / std::sqrt(6.0), 1e-15);
  }
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<Activation, std::size_t>> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto [act, depth] = GetParam();
  const Architecture arch = arch_of(3, std::vector<std::size_t>(depth, 5), 0.4, act);
  const ModelParams p0 = nn_init(arch, 17 + depth);
  std::mt19937_64 rng(depth * 31 + static_cast<int>(act));
  const Vector theta = perturbed(p0.flat, rng, 0.5);
  const Vector x = random_point(3, rng);
  const Vector g = nn_grad(arch, theta, x);
  std::uniform_int_distribution<std::size_t> pick(0, theta.size() - 1);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = pick(rng);
    Vector tp = theta;
    Vector tm = theta;
    tp[k] += h;
    tm[k] -= h;
    const double fd = (nn_forward(arch, tp, x).value - nn_forward(arch, tm, x).value) / (2 * h);
    EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "coordinate " << k;
  }
}

INSTANTIATE_TEST_SUITE_P(Networks, GradientCheck,
                         ::testing::Combine(::testing::Values(Activation::Erf, Activation::Tanh),
                                            ::testing::Values(1u, 2u, 3u)));

TEST(Activations, LipschitzBounds) {
  for (double z = -10.0; z <= 10.0; z += 1e-3) {
    EXPECT_LE(std::abs(activate_derivative(Activation::Erf, z)), 2.0 / std::sqrt(M_PI) + 1e-15);
    EXPECT_LE(std::abs(activate_derivative(Activation::Tanh, z)), 1.0 + 1e-15);
    EXPECT_LE(std::abs(activate_second_derivative(Activation::Erf, z)), 1.0);
    EXPECT_LE(std::abs(activate_second_derivative(Activation::Tanh, z)), 0.8);
  }
}

TEST(Activations, DerivativesMatchDifferences) {
  const double h = 1e-6;
  for (Activation act : {Activation::Erf, Activation::Tanh}) {
    for (double z = -3.0; z <= 3.0; z += 0.25) {
      EXPECT_NEAR(activate_derivative(act, z), (activate(act, z + h) - activate(act, z - h)) / (2 * h), 1e-8);
      EXPECT_NEAR(activate_second_derivative(act, z),
                  (activate_derivative(act, z + h) - activate_derivative(act, z - h)) / (2 * h), 1e-7);
    }
  }
}

TEST(LinearModel, PredictAndGradient) {
  const LinearModel m(Vector{1.0, -1.0});
  const Matrix x{{1.0, 0.0}, {0.0, 2.0}};
  const Vector f = m.predict(Vector{3.0, 4.0}, x);
  EXPECT_EQ(f, (Vector{3.0, 8.0}));
  EXPECT_EQ(m.gradient(Vector{3.0, 4.0}, Vector{0.5, 0.25}), (Vector{0.5, 0.25}));
  Vector out(2, 1.0);
  m.accumulate_gradient(Vector{3.0, 4.0}, x, Vector{2.0, -1.0}, out);
  EXPECT_EQ(out, (Vector{3.0, -1.0}));
}

TEST(Linearized, AtInitialParamsEqualsBase) {
  const Architecture arch = arch_of(3, {32}, 0.5, Activation::Erf);
  auto base = std::make_shared<MlpModel>(arch, 3);
  std::mt19937_64 rng(4);
  const Matrix anchors = Matrix::from_columns({random_point(3, rng), random_point(3, rng)});
  const LinearizedModel lin(base, anchors);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(linearized_forward(lin, base->initial_params(), anchors.column(i)),
              base->value(base->initial_params(), anchors.column(i)));
  }
  const Vector off_anchor = random_point(3, rng);
  EXPECT_EQ(lin.value(base->initial_params(), off_anchor), base->value(base->initial_params(), off_anchor));
}

TEST(Linearized, OrthogonalDisplacementKeepsValue) {
  const Architecture arch = arch_of(2, {8}, 0.5, Activation::Erf);
  auto base = std::make_shared<MlpModel>(arch, 1);
  const Vector x{0.3, -0.4};
  const LinearizedModel lin(base, Matrix::from_columns({x}));
  const Vector feat = lin.features(x);
  std::mt19937_64 rng(5);
  Vector v = perturbed(Vector(feat.size(), 0.0), rng, 1.0);
  axpy(-dot(v, feat) / dot(feat, feat), feat, v);
  Vector theta = base->initial_params();
  axpy(1.0, v, theta);
  EXPECT_NEAR(linearized_forward(lin, theta, x), lin.initial_value(x), 1e-12);
}

TEST(Linearized, MatchesFeatureDotProduct) {
  const Architecture arch = arch_of(3, {16, 16}, 0.2, Activation::Tanh);
  auto base = std::make_shared<MlpModel>(arch, 8);
  std::mt19937_64 rng(6);
  const Vector x = random_point(3, rng);
  const LinearizedModel lin(base, Matrix::from_columns({x}));
  const Vector theta = perturbed(base->initial_params(), rng, 0.1);
  const double expected =
      base->value(base->initial_params(), x) + dot(subtract(theta, base->initial_params()), base->gradient(base->initial_params(), x));
  EXPECT_NEAR(linearized_forward(lin, theta, x), expected, 1e-12);
}

TEST(FeatureMatrix, LinearModelIsX) {
  auto base = std::make_shared<LinearModel>(3);
  const Matrix x{{1.0, 0.0}, {0.5, 0.2}, {0.0, -0.3}};
  const LinearizedModel lin(base, x);
  EXPECT_EQ(feature_matrix(lin, x), x);
}

TEST(FeatureMatrix, SingleColumnIsGradient) {
  const Architecture arch = arch_of(2, {5}, 0.5, Activation::Erf);
  auto base = std::make_shared<MlpModel>(arch, 2);
  const Vector x{0.1, 0.7};
  const LinearizedModel lin(base, Matrix::from_columns({x}));
  const Matrix f = feature_matrix(lin, Matrix::from_columns({x}));
  ASSERT_EQ(f.cols(), 1u);
  EXPECT_EQ(f.column(0), nn_grad(arch, base->initial_params(), x));
}

TEST(Model, JacobianColumnsAreGradients) {
  const Architecture arch = arch_of(2, {4}, 0.5, Activation::Erf);
  const MlpModel m(arch, 3);
  const Matrix x{{0.1, 0.5}, {0.2, -0.3}};
  const Matrix j = m.jacobian(m.initial_params(), x);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(j.column(i), m.gradient(m.initial_params(), x.column(i)));
}

TEST(Model, AccumulateMatchesSumOfGradients) {
  const Architecture arch = arch_of(3, {6, 6}, 0.5, Activation::Tanh);
  const MlpModel m(arch, 4);
  std::mt19937_64 rng(7);
  const Vector theta = perturbed(m.initial_params(), rng, 0.2);
  const Matrix x = Matrix::from_columns({random_point(3, rng), random_point(3, rng), random_point(3, rng)});
  const Vector coeff{0.5, -1.0, 2.0};
  Vector acc(theta.size(), 0.0);
  m.accumulate_gradient(theta, x, coeff, acc);
  Vector expected(theta.size(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) axpy(coeff[i], m.gradient(theta, x.column(i)), expected);
  for (std::size_t k = 0; k < theta.size(); ++k) EXPECT_NEAR(acc[k], expected[k], 1e-13);
}

TEST(ModelSpec, ParseAndPrint) {
  EXPECT_TRUE(std::holds_alternative<LinearSpec>(parse_model_spec("linear")));
  const ModelSpec s = parse_model_spec("mlp:4:64x2:0.5:erf");
  ASSERT_TRUE(std::holds_alternative<Architecture>(s));
  const auto& a = std::get<Architecture>(s);
  EXPECT_EQ(a.input_dim, 4u);
  EXPECT_EQ(a.hidden_widths, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(a.beta, 0.5);
  EXPECT_EQ(a.activation, Activation::Erf);
  EXPECT_EQ(parse_model_spec(to_string(s)), s);
  EXPECT_THROW(parse_model_spec("mlp:4:64x2:0.5:relu"), Error);
  EXPECT_THROW(parse_model_spec("mlp:0:64x2:0.5:erf"), Error);
  EXPECT_THROW(parse_model_spec("cnn"), Error);
}
