#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "step/geometry.hpp"

namespace step {

/// Huber-style smooth L1: quadratic inside |d| < 1, linear outside.
inline double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

/// Derivative of smooth_l1; the boundary |d| = 1 takes the one-sided value d/|d|.
inline double smooth_l1_grad(double d) {
  return std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0);
}

/// Smooth L1 summed over the four offset components.
inline double smooth_l1_offset(const OffsetVector& pred, const OffsetVector& target) {
  return smooth_l1(pred.tx - target.tx) + smooth_l1(pred.ty - target.ty) +
         smooth_l1(pred.tw - target.tw) + smooth_l1(pred.th - target.th);
}

/**
 * @brief Localization loss: smooth L1 between predicted and target offsets,
 * summed over the four coordinates and averaged over frames.
 *
 * Callers pass only the frames that participate (padding excluded).
 */
inline double loc_loss(const OffsetSequence& predicted, const OffsetSequence& target) {
  if (predicted.size() != target.size())
    throw std::invalid_argument("loc_loss: sequence lengths differ");
  if (predicted.empty()) return 0.0;
  double sum = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k)
    sum += smooth_l1_offset(predicted[k], target[k]);
  return sum / static_cast<double>(predicted.size());
}

constexpr double kLogProbFloor = 1e-12;

/// Cross-entropy -log p(label); probabilities are clamped at 1e-12 before the
/// log. `clamped` counts floored entries when non-null.
inline double cross_entropy(const std::vector<double>& probs, int label, int* clamped = nullptr) {
  double p = probs.at(static_cast<std::size_t>(label));
  if (p < kLogProbFloor) {
    p = kLogProbFloor;
    if (clamped) ++*clamped;
  }
  return -std::log(p);
}

}  // namespace step
