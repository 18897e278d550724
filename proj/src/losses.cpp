#include "grw/losses.hpp"

#include <cmath>
#include <string>

#include "grw/error.hpp"
#include "parse_util.hpp"

namespace grw {

namespace {

// log(1 + e^{-m}) without overflow for either sign of m.
double softplus_neg(double m) { return std::log1p(std::exp(-std::abs(m))) + std::max(0.0, -m); }

// d/dm log(1 + e^{-m}) = -1 / (1 + e^{m})
double softplus_neg_grad(double m) {
  if (m >= 0.0) {
    const double e = std::exp(-m);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(m));
}

void require_label(double y) {
  if (y != 1.0 && y != -1.0) fail(ErrorKind::InvalidArgument, "classification label must be -1 or +1, got " + std::to_string(y));
}

double poly_value(const PolyTailedLoss& p, double m) {
  if (m < p.beta) return softplus_neg(m) + (1.0 - softplus_neg(p.beta));
  return std::pow(m - (p.beta - 1.0), -p.alpha);
}

double poly_margin_grad(const PolyTailedLoss& p, double m) {
  if (m < p.beta) return softplus_neg_grad(m);
  return -p.alpha * std::pow(m - (p.beta - 1.0), -p.alpha - 1.0);
}

}  // namespace

LossKind make_poly_tailed(double alpha, double beta) {
  if (!(alpha > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    fail(ErrorKind::InvalidArgument, "poly-tailed loss needs alpha > 0 and finite beta");
  }
  return PolyTailedLoss{alpha, beta};
}

bool is_classification_loss(const LossKind& kind) { return !std::holds_alternative<SquaredLoss>(kind); }

double loss_value(const LossKind& kind, double yhat, double y) {
  if (std::holds_alternative<SquaredLoss>(kind)) {
    const double r = yhat - y;
    return 0.5 * r * r;
  }
  require_label(y);
  const double m = yhat * y;
  if (std::holds_alternative<LogisticLoss>(kind)) return softplus_neg(m);
  return poly_value(std::get<PolyTailedLoss>(kind), m);
}

double loss_grad(const LossKind& kind, double yhat, double y) {
  if (std::holds_alternative<SquaredLoss>(kind)) return yhat - y;
  require_label(y);
  const double m = yhat * y;
  if (std::holds_alternative<LogisticLoss>(kind)) return y * softplus_neg_grad(m);
  return y * poly_margin_grad(std::get<PolyTailedLoss>(kind), m);
}

LossKind parse_loss(std::string_view text) {
  const auto parts = detail::split(text, ':');
  if (parts.size() == 1 && parts[0] == "squared") return SquaredLoss{};
  if (parts.size() == 1 && parts[0] == "logistic") return LogisticLoss{};
  if (parts.size() == 3 && parts[0] == "polytailed") {
    return make_poly_tailed(detail::parse_double(parts[1]), detail::parse_double(parts[2]));
  }
  fail(ErrorKind::InvalidArgument, "unknown loss '" + std::string(text) + "'");
}

std::string to_string(const LossKind& kind) {
  if (std::holds_alternative<SquaredLoss>(kind)) return "squared";
  if (std::holds_alternative<LogisticLoss>(kind)) return "logistic";
  const auto& p = std::get<PolyTailedLoss>(kind);
  return "polytailed:" + detail::format_short(p.alpha) + ":" + detail::format_short(p.beta);
}

}  // namespace grw
