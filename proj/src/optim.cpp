#include "genadapt/optim.hpp"

#include <cmath>
#include <string>

#include "genadapt/common.hpp"

namespace genadapt {

AdamState make_adam_state(const std::vector<Tensor>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor& p : params) {
    st.m.push_back(Tensor::zeros(p.shape()));
    st.v.push_back(Tensor::zeros(p.shape()));
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0) || !std::isfinite(lr)) {
    throw UsageError("adam needs eps > 0 and finite lr");
  }
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw UsageError("adam block count mismatch: " + std::to_string(params.size()) +
                     " params, " + std::to_string(grads.size()) + " grads, " +
                     std::to_string(state.m.size()) + " state");
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    Tensor& p = params[b];
    const Tensor& g = grads[b];
    if (!p.same_shape(g)) {
      throw UsageError("adam block " + std::to_string(b) + " shape mismatch: param " +
                       p.shape_str() + " vs grad " + g.shape_str());
    }
    Tensor& m = state.m[b];
    Tensor& v = state.v[b];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g.at(i);
      if (!std::isfinite(gi)) {
        throw NumericError("non-finite gradient in block " + std::to_string(b));
      }
      m.at(i) = beta1 * m.at(i) + (1.0 - beta1) * gi;
      v.at(i) = beta2 * v.at(i) + (1.0 - beta2) * gi * gi;
      double mhat = m.at(i) / bc1;
      double vhat = v.at(i) / bc2;
      p.at(i) -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p.check_finite("adam block " + std::to_string(b));
  }
}

}  // namespace genadapt
