#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grw/error.hpp"
#include "grw/losses.hpp"

using namespace grw;

TEST(LossValue, Squared) { EXPECT_DOUBLE_EQ(loss_value(SquaredLoss{}, 3.0, 1.0), 2.0); }

TEST(LossValue, LogisticAtZero) { EXPECT_NEAR(loss_value(LogisticLoss{}, 0.0, 1.0), std::log(2.0), 1e-15); }

TEST(LossValue, PolyTailedUnitMargin) {
  EXPECT_NEAR(loss_value(PolyTailedLoss{1.0, 0.0}, 1.0, 1.0), 0.5, 1e-15);
}

TEST(LossValue, PolyTailedContinuousAtBeta) {
  const PolyTailedLoss p{1.0, 0.0};
  EXPECT_NEAR(loss_value(p, 0.0, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(loss_value(p, -1e-12, 1.0), 1.0, 1e-11);
  EXPECT_NEAR(loss_value(p, 1e-12, 1.0), 1.0, 1e-11);
}

TEST(LossValue, PolyTailedContinuityGrid) {
  for (double alpha : {0.5, 1.0, 2.0, 3.5}) {
    for (double beta : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
      const PolyTailedLoss p{alpha, beta};
      const double right = loss_value(p, beta, 1.0);
      const double left = loss_value(p, std::nextafter(beta, -INFINITY), 1.0);
      EXPECT_NEAR(right, 1.0, 1e-12);
      EXPECT_NEAR(left, right, 1e-12) << alpha << " " << beta;
    }
  }
}

TEST(LossGrad, Squared) { EXPECT_DOUBLE_EQ(loss_grad(SquaredLoss{}, 3.0, 1.0), 2.0); }

TEST(LossGrad, LogisticAtZero) { EXPECT_DOUBLE_EQ(loss_grad(LogisticLoss{}, 0.0, 1.0), -0.5); }

TEST(LossGrad, MatchesCentralDifferences) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> yhat_dist(-6.0, 6.0);
  std::bernoulli_distribution coin(0.5);
  const LossKind kinds[] = {SquaredLoss{}, LogisticLoss{}, PolyTailedLoss{1.0, 0.0}, PolyTailedLoss{2.0, 0.5}};
  const double h = 1e-6;
  for (const LossKind& kind : kinds) {
    for (int i = 0; i < 1000; ++i) {
      const double yhat = yhat_dist(rng);
      const double y = is_classification_loss(kind) ? (coin(rng) ? 1.0 : -1.0) : yhat_dist(rng);
      if (const auto* p = std::get_if<PolyTailedLoss>(&kind)) {
        // The derivative jumps at the join; skip points whose stencil straddles it.
        if (std::abs(y * yhat - p->beta) < 2 * h) continue;
      }
      const double fd = (loss_value(kind, yhat + h, y) - loss_value(kind, yhat - h, y)) / (2 * h);
      const double g = loss_grad(kind, yhat, y);
      EXPECT_NEAR(g, fd, 1e-6 * std::max(1.0, std::abs(g))) << to_string(kind) << " at " << yhat << ", " << y;
    }
  }
}

TEST(LossShape, StrictlyDecreasingInMargin) {
  const LossKind kinds[] = {LogisticLoss{}, PolyTailedLoss{1.0, 0.0}, PolyTailedLoss{2.0, 1.0}};
  for (const LossKind& kind : kinds) {
    double prev = INFINITY;
    for (double m = -20.0; m <= 40.0; m += 0.01) {
      const double v = loss_value(kind, m, 1.0);
      EXPECT_LT(v, prev) << to_string(kind) << " m=" << m;
      EXPECT_GT(v, 0.0);
      prev = v;
    }
    EXPECT_LT(loss_value(kind, 1e6, 1.0), 1e-5);
  }
}

TEST(LossShape, LogisticSmoothness) {
  const double h = 1e-3;
  for (double m = -20.0; m <= 20.0; m += 0.05) {
    const double second =
        (loss_value(LogisticLoss{}, m + h, 1.0) - 2 * loss_value(LogisticLoss{}, m, 1.0) +
         loss_value(LogisticLoss{}, m - h, 1.0)) /
        (h * h);
    EXPECT_LE(second, 0.25 + 1e-6);
  }
}

TEST(LossShape, NoOverflowForLargeOutputs) {
  const LossKind kinds[] = {SquaredLoss{}, LogisticLoss{}, PolyTailedLoss{1.0, 0.0}};
  for (const LossKind& kind : kinds) {
    for (double yhat : {-1e6, -1e3, 1e3, 1e6}) {
      for (double y : {-1.0, 1.0}) {
        EXPECT_TRUE(std::isfinite(loss_value(kind, yhat, y)));
        EXPECT_TRUE(std::isfinite(loss_grad(kind, yhat, y)));
      }
    }
  }
}

TEST(LossParse, RoundTrip) {
  for (const char* text : {"squared", "logistic", "polytailed:1:0", "polytailed:2.5:-1"}) {
    const LossKind k = parse_loss(text);
    EXPECT_EQ(parse_loss(to_string(k)), k);
  }
  EXPECT_EQ(parse_loss("polytailed:1:0"), LossKind(PolyTailedLoss{1.0, 0.0}));
}

TEST(LossParse, Rejects) {
  EXPECT_THROW(parse_loss("hinge"), Error);
  EXPECT_THROW(parse_loss("polytailed:0:0"), Error);
  EXPECT_THROW(parse_loss("polytailed:1"), Error);
  EXPECT_THROW(make_poly_tailed(-1.0, 0.0), Error);
}

TEST(LossKindTraits, Classification) {
  EXPECT_FALSE(is_classification_loss(SquaredLoss{}));
  EXPECT_TRUE(is_classification_loss(LogisticLoss{}));
  EXPECT_TRUE(is_classification_loss(PolyTailedLoss{}));
}
