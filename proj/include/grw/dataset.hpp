#pragma once

#include <string>

#include "grw/linalg.hpp"
#include "grw/reweighting.hpp"

namespace grw {

/// Training set: samples are the columns of X.
struct Dataset {
  Matrix X;
  Vector Y;
  GroupInfo groups;
  bool classification = false;
  std::string provenance;

  std::size_t dim() const noexcept { return X.rows(); }
  std::size_t size() const noexcept { return X.cols(); }

  /// Shapes agree, entries finite, labels +-1 in classification mode, columns
  /// inside the unit ball (within 1e-9).
  void validate() const;
  /// Largest column L2 norm.
  double max_column_norm() const;
};

}  // namespace grw
