#include "genadapt/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "genadapt/common.hpp"

namespace genadapt {

namespace {
std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    std::ostringstream os;
    os << "tensor data length " << data_.size() << " does not match shape " << shape_str();
    throw UsageError(os.str());
  }
  check_finite("tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw UsageError("rows() on tensor of shape " + shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw UsageError("cols() on tensor of shape " + shape_str());
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str());
  }
  return data_[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void Tensor::check_finite(const std::string& context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      std::ostringstream os;
      os << "non-finite value at flat index " << i << " in " << context;
      throw NumericError(os.str());
    }
  }
}

double dot_flat(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw UsageError("dot between " + a.shape_str() + " and " + b.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i) * b.at(i);
  return s;
}

double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i) * a.at(i);
  return std::sqrt(s);
}

double guarded_cosine(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw UsageError("cosine between " + a.shape_str() + " and " + b.shape_str());
  }
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na <= kNormGuard || nb <= kNormGuard) {
    warn("cosine over near-zero vector, denominator clamped");
  }
  double denom = std::max(na, kNormGuard) * std::max(nb, kNormGuard);
  return dot_flat(a, b) / denom;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw UsageError("matmul between " + a.shape_str() + " and " + b.shape_str());
  }
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double av = a.at(i, k);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out.at(i, j) += av * b.at(k, j);
      }
    }
  }
  out.check_finite("matmul result");
  return out;
}

Tensor take_row(const Tensor& m, std::size_t r) {
  if (m.rank() != 2 || r >= m.rows()) {
    throw UsageError("take_row " + std::to_string(r) + " from " + m.shape_str());
  }
  std::vector<double> row(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) row[c] = m.at(r, c);
  return Tensor({1, m.cols()}, std::move(row));
}

}  // namespace genadapt
