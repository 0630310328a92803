#pragma once

#include <span>
#include <vector>

#include "xstack/matrix.hpp"

namespace xstack {

struct HuberResult {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(residual)
};

// Mean Huber loss over the residual elements:
//   0.5 r^2                     for |r| <= delta
//   delta (|r| - 0.5 delta)     otherwise
HuberResult huber(std::span<const double> residual, double delta);

struct LossValue {
  double loss = 0.0;
  Matrix grad;  // same shape as the evaluated activation
};

// Mean over samples of 0.5 ||output - target||^2.
LossValue supervised_loss(const Matrix& output, const Matrix& targets);

// Representation-misalignment forget objective. Each sample's target is the
// corresponding row of `directions` scaled by the Euclidean norm of that
// sample's teacher feature; a zero teacher feature yields a zero target.
// The loss is the mean Huber over all batch elements; grad is w.r.t. student.
LossValue forget_loss(const Matrix& student, const Matrix& teacher, const Matrix& directions,
                      double huber_delta);

// Per-sample forget targets (gamma_i * v_i) used by forget_loss.
Matrix forget_targets(const Matrix& teacher, const Matrix& directions);

// Distillation objective: mean Huber(student - teacher).
LossValue retain_loss(const Matrix& student, const Matrix& teacher, double huber_delta);

}  // namespace xstack
