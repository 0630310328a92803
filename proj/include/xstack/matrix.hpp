#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace xstack {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_row(std::span<const double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
// Cosine similarity; returns 0 when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
// Returns v / ||v||. Throws InvalidArgument on a zero vector.
std::vector<double> normalized(std::span<const double> v);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Stacks equal-width rows into a matrix.
Matrix stack_rows(const std::vector<std::vector<double>>& rows);

}  // namespace xstack
