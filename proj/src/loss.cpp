#include "xstack/loss.hpp"

#include <cmath>

#include "xstack/error.hpp"

namespace xstack {

HuberResult huber(std::span<const double> residual, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("huber delta must be positive");
  if (residual.empty()) throw InvalidArgument("huber loss of an empty residual");
  const double n = static_cast<double>(residual.size());
  HuberResult out;
  out.grad.resize(residual.size());
  for (std::size_t i = 0; i < residual.size(); ++i) {
    const double r = residual[i];
    const double a = std::abs(r);
    if (a <= delta) {
      out.loss += 0.5 * r * r;
      out.grad[i] = r / n;
    } else {
      out.loss += delta * (a - 0.5 * delta);
      out.grad[i] = (r > 0.0 ? delta : -delta) / n;
    }
  }
  out.loss /= n;
  return out;
}

LossValue supervised_loss(const Matrix& output, const Matrix& targets) {
  if (!output.same_shape(targets)) throw InvalidArgument("supervised loss: target shape mismatch");
  if (output.rows == 0) throw InvalidArgument("supervised loss: empty batch");
  const double n = static_cast<double>(output.rows);
  LossValue v{0.0, Matrix(output.rows, output.cols)};
  for (std::size_t i = 0; i < output.data.size(); ++i) {
    const double r = output.data[i] - targets.data[i];
    v.loss += 0.5 * r * r;
    v.grad.data[i] = r / n;
  }
  v.loss /= n;
  return v;
}

Matrix forget_targets(const Matrix& teacher, const Matrix& directions) {
  if (!teacher.same_shape(directions)) throw InvalidArgument("forget loss: direction shape mismatch");
  if (!teacher.all_finite()) throw NumericError("forget loss: non-finite teacher features");
  Matrix targets(teacher.rows, teacher.cols);
  for (std::size_t r = 0; r < teacher.rows; ++r) {
    const double gamma = l2_norm(teacher.row(r));
    for (std::size_t c = 0; c < teacher.cols; ++c) targets(r, c) = gamma * directions(r, c);
  }
  return targets;
}

namespace {

LossValue huber_between(const Matrix& student, const Matrix& target, double huber_delta) {
  if (!student.same_shape(target)) throw InvalidArgument("feature loss: shape mismatch");
  std::vector<double> residual(student.data.size());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = student.data[i] - target.data[i];
  auto h = huber(residual, huber_delta);
  LossValue v{h.loss, Matrix(student.rows, student.cols)};
  v.grad.data = std::move(h.grad);
  return v;
}

}  // namespace

LossValue forget_loss(const Matrix& student, const Matrix& teacher, const Matrix& directions,
                      double huber_delta) {
  return huber_between(student, forget_targets(teacher, directions), huber_delta);
}

LossValue retain_loss(const Matrix& student, const Matrix& teacher, double huber_delta) {
  return huber_between(student, teacher, huber_delta);
}

}  // namespace xstack
