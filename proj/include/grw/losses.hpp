#pragma once

#include <string>
#include <string_view>
#include <variant>

namespace grw {

/// ell(yhat, y) = (yhat - y)^2 / 2
struct SquaredLoss {
  friend bool operator==(const SquaredLoss&, const SquaredLoss&) = default;
};

/// ell(yhat, y) = log(1 + exp(-yhat * y)), labels in {-1, +1}.
struct LogisticLoss {
  friend bool operator==(const LogisticLoss&, const LogisticLoss&) = default;
};

/// Power-law tail 1 / [m - (beta - 1)]^alpha for margins m >= beta, and the
/// logistic loss shifted up by 1 - log(1 + e^{-beta}) below beta so the two
/// branches meet. The join is continuous but the derivative jumps at beta.
struct PolyTailedLoss {
  double alpha = 1.0;
  double beta = 0.0;
  friend bool operator==(const PolyTailedLoss&, const PolyTailedLoss&) = default;
};

using LossKind = std::variant<SquaredLoss, LogisticLoss, PolyTailedLoss>;

/// Validates alpha > 0.
LossKind make_poly_tailed(double alpha, double beta);

bool is_classification_loss(const LossKind& kind);

double loss_value(const LossKind& kind, double yhat, double y);

/// d ell / d yhat.
double loss_grad(const LossKind& kind, double yhat, double y);

/// "squared", "logistic" or "polytailed:<alpha>:<beta>".
LossKind parse_loss(std::string_view text);
std::string to_string(const LossKind& kind);

}  // namespace grw
