#pragma once

#include <cstdint>
#include <vector>

#include "genadapt/tensor.hpp"

namespace genadapt {

// Adam with bias correction. State holds first/second moment estimates per
// parameter block plus the shared step counter; make_adam_state zeroes both
// moments so the first step is a pure sign(gradient) * lr move (up to eps).
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

AdamState make_adam_state(const std::vector<Tensor>& params);

// In-place update of every block. lr is per call, so callers may anneal it.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps = 1e-8);

}  // namespace genadapt
