#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genadapt/autodiff.hpp"
#include "genadapt/rng.hpp"
#include "genadapt/tensor.hpp"
#include "genadapt/world.hpp"

namespace genadapt {

// Fully-connected generator: tanh after every layer except the last. The
// layer list is fixed at construction; weights are {out, in}, biases {1, out}
// so rows of a latent batch map straight through matmuls.
struct DenseLayer {
  std::string name;
  Tensor weight;
  Tensor bias;
};

class GeneratorParams {
 public:
  GeneratorParams() = default;
  explicit GeneratorParams(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t latent_dim() const { return layers_.front().weight.cols(); }
  std::size_t out_dim() const { return layers_.back().weight.rows(); }

  // Flat block views in layer order: w1, b1, w2, b2, ...
  std::vector<Tensor> blocks() const;
  std::vector<std::string> block_names() const;
  void set_blocks(const std::vector<Tensor>& blocks);

 private:
  std::vector<DenseLayer> layers_;
};

// dims = {latent, hidden..., out}; needs at least {latent, hidden, out}.
// Weights and biases are Normal(0, 1/sqrt(fan_in)); drawn biases keep the
// map from being odd in the latent, which a zero-bias tanh stack would be.
GeneratorParams init_generator_arch(std::uint64_t seed, const std::vector<std::size_t>& dims);

// The benchmark architecture: latent 8 -> 64 -> 64 -> out.
GeneratorParams init_generator(std::uint64_t seed, std::size_t out_dim,
                               std::size_t latent_dim = 8, std::size_t hidden_dim = 64);

Tensor generate(const GeneratorParams& params, const Tensor& latents);  // n x latent -> n x out

// Graph version. `blocks` supplies the parameter nodes (leaves for the
// trainable generator, constants for a frozen one) in blocks() order.
NodeId generate_node(Graph& g, const GeneratorParams& arch, const std::vector<NodeId>& blocks,
                     NodeId latents);

// Biased squared maximum mean discrepancy under a Gaussian kernel
// exp(-d^2 / (2 sigma^2)), self-terms included, clamped at zero.
double mmd2(const Tensor& x, const Tensor& y, double sigma);
NodeId mmd2_node(Graph& g, NodeId x, const Tensor& y, double sigma);

// Median of all pairwise distances over the pooled rows of x and y,
// clamped below at 1e-6.
double median_heuristic_bandwidth(const Tensor& x, const Tensor& y);

struct PretrainConfig {
  std::int64_t iters = 3000;
  std::size_t batch = 64;
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  std::int64_t log_every = 100;
  std::uint64_t seed = 11;
};

struct PretrainLogRow {
  std::int64_t iter;
  double mmd;
  double sigma;
};

struct PretrainResult {
  GeneratorParams params;
  std::vector<PretrainLogRow> log;
  double final_mmd = 0.0;  // fresh 256 generated vs 256 real, fresh bandwidth
};

// Fits the generator to one domain's cloud by MMD descent. The bandwidth is
// re-estimated from the current batches every 100 iterations.
PretrainResult pretrain_source(const World& world, const std::string& domain,
                               const PretrainConfig& cfg);

}  // namespace genadapt
