#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace genadapt {

// Dense row-major tensor of doubles. Rank 0 is a scalar, rank 1 a vector,
// rank 2 a matrix; nothing in the project needs more. Construction rejects
// NaN/Inf entries so every value flowing through the graph is finite.
class Tensor {
 public:
  Tensor() : shape_{}, data_{0.0} {}  // rank-0 zero

  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  // Matrix accessors; rows()/cols() require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double item() const;  // rank-0 (or single-element) value

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  // Re-runs the finiteness check after in-place mutation.
  void check_finite(const std::string& context) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Small numeric helpers shared by the straight-line (non-graph) code paths.
double dot_flat(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
// Cosine with both denominators clamped to kNormGuard. Warns through the
// warning sink when either side is degenerate (norm <= kNormGuard).
double guarded_cosine(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor take_row(const Tensor& m, std::size_t r);  // {1, cols} copy

}  // namespace genadapt
