#include "genadapt/rng.hpp"

#include <cmath>

namespace genadapt {

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Tensor Rng::normal_tensor(std::vector<std::size_t> shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = stddev * normal();
  return t;
}

}  // namespace genadapt
