#include "genadapt/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "genadapt/common.hpp"
#include "genadapt/optim.hpp"

namespace genadapt {

GeneratorParams::GeneratorParams(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.size() < 2) {
    throw UsageError("generator needs at least 2 layers, got " + std::to_string(layers_.size()));
  }
  std::set<std::string> names;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.name.empty() || !names.insert(layer.name).second) {
      throw UsageError("generator layer " + std::to_string(l) + " has empty or duplicate name");
    }
    if (layer.weight.rank() != 2 || layer.bias.rank() != 2 || layer.bias.rows() != 1 ||
        layer.bias.cols() != layer.weight.rows()) {
      throw UsageError("layer '" + layer.name + "' has weight " + layer.weight.shape_str() +
                       ", bias " + layer.bias.shape_str());
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw UsageError("layer '" + layer.name + "' input width " +
                       std::to_string(layer.weight.cols()) + " does not match previous output " +
                       std::to_string(layers_[l - 1].weight.rows()));
    }
  }
}

std::vector<Tensor> GeneratorParams::blocks() const {
  std::vector<Tensor> out;
  out.reserve(layers_.size() * 2);
  for (const DenseLayer& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<std::string> GeneratorParams::block_names() const {
  std::vector<std::string> out;
  out.reserve(layers_.size() * 2);
  for (const DenseLayer& l : layers_) {
    out.push_back(l.name + ".weight");
    out.push_back(l.name + ".bias");
  }
  return out;
}

void GeneratorParams::set_blocks(const std::vector<Tensor>& blocks) {
  if (blocks.size() != layers_.size() * 2) {
    throw UsageError("set_blocks got " + std::to_string(blocks.size()) + " blocks, expected " +
                     std::to_string(layers_.size() * 2));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (!blocks[2 * l].same_shape(layers_[l].weight) ||
        !blocks[2 * l + 1].same_shape(layers_[l].bias)) {
      throw UsageError("set_blocks shape mismatch at layer '" + layers_[l].name + "'");
    }
    layers_[l].weight = blocks[2 * l];
    layers_[l].bias = blocks[2 * l + 1];
  }
}

GeneratorParams init_generator_arch(std::uint64_t seed, const std::vector<std::size_t>& dims) {
  if (dims.size() < 3) {
    throw UsageError("generator architecture needs {latent, hidden..., out}");
  }
  Rng rng = Rng(seed).derive("generator-init");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::size_t fan_in = dims[l];
    std::size_t fan_out = dims[l + 1];
    if (fan_in < 1 || fan_out < 1) throw UsageError("generator layer width must be >= 1");
    DenseLayer layer;
    layer.name = "fc" + std::to_string(l + 1);
    double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    layer.weight = rng.normal_tensor({fan_out, fan_in}, s);
    layer.bias = rng.normal_tensor({1, fan_out}, s);
    layers.push_back(std::move(layer));
  }
  return GeneratorParams(std::move(layers));
}

GeneratorParams init_generator(std::uint64_t seed, std::size_t out_dim, std::size_t latent_dim,
                               std::size_t hidden_dim) {
  return init_generator_arch(seed, {latent_dim, hidden_dim, hidden_dim, out_dim});
}

Tensor generate(const GeneratorParams& params, const Tensor& latents) {
  if (latents.rank() != 2 || latents.cols() != params.latent_dim()) {
    throw UsageError("generate input of shape " + latents.shape_str() + ", expected cols " +
                     std::to_string(params.latent_dim()));
  }
  Tensor x = latents;
  const auto& layers = params.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& w = layers[l].weight;
    const Tensor& b = layers[l].bias;
    Tensor y = Tensor::zeros({x.rows(), w.rows()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t k = 0; k < w.rows(); ++k) {
        double s = b.at(0, k);
        for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j) * w.at(k, j);
        y.at(i, k) = l + 1 < layers.size() ? std::tanh(s) : s;
      }
    }
    x = std::move(y);
  }
  x.check_finite("generate");
  return x;
}

NodeId generate_node(Graph& g, const GeneratorParams& arch, const std::vector<NodeId>& blocks,
                     NodeId latents) {
  if (blocks.size() != arch.layers().size() * 2) {
    throw UsageError("generate_node got " + std::to_string(blocks.size()) + " blocks, expected " +
                     std::to_string(arch.layers().size() * 2));
  }
  std::size_t n = g.value(latents).rows();
  NodeId ones = g.constant(Tensor::full({n, 1}, 1.0));
  NodeId x = latents;
  for (std::size_t l = 0; l < arch.layers().size(); ++l) {
    NodeId wt = g.transpose(blocks[2 * l]);
    NodeId y = g.add(g.matmul(x, wt), g.matmul(ones, blocks[2 * l + 1]));
    x = l + 1 < arch.layers().size() ? g.tanh(y) : y;
  }
  return x;
}

namespace {

double gauss_kernel(double d2, double inv_two_sigma2) { return std::exp(-d2 * inv_two_sigma2); }

double row_dist2(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double d = a.at(i, c) - b.at(j, c);
    s += d * d;
  }
  return s;
}

}  // namespace

double mmd2(const Tensor& x, const Tensor& y, double sigma) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
    throw UsageError("mmd2 between " + x.shape_str() + " and " + y.shape_str());
  }
  if (!(sigma > 0.0)) throw UsageError("mmd2 bandwidth must be > 0");
  double inv = 1.0 / (2.0 * sigma * sigma);
  double n = static_cast<double>(x.rows());
  double m = static_cast<double>(y.rows());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j) sxx += gauss_kernel(row_dist2(x, i, x, j), inv);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) syy += gauss_kernel(row_dist2(y, i, y, j), inv);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) sxy += gauss_kernel(row_dist2(x, i, y, j), inv);
  double v = sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m);
  return std::max(v, 0.0);
}

NodeId mmd2_node(Graph& g, NodeId x, const Tensor& y, double sigma) {
  // Shape info is copied out: builder calls below may reallocate the tape.
  std::size_t n = 0, d = 0;
  {
    const Tensor& xv = g.value(x);
    if (xv.rank() != 2 || y.rank() != 2 || xv.cols() != y.cols()) {
      throw UsageError("mmd2_node between " + xv.shape_str() + " and " + y.shape_str());
    }
    n = xv.rows();
    d = xv.cols();
  }
  if (!(sigma > 0.0)) throw UsageError("mmd2_node bandwidth must be > 0");
  std::size_t m = y.rows();
  double inv = 1.0 / (2.0 * sigma * sigma);

  // Row squared norms of x as an n x 1 node: (x*x) @ ones_{d,1}.
  NodeId ones_d = g.constant(Tensor::full({d, 1}, 1.0));
  NodeId rx = g.matmul(g.mul(x, x), ones_d);  // n x 1

  // Pairwise squared distances via the Gram expansion.
  NodeId sxx = g.matmul(x, g.transpose(x));  // n x n
  NodeId rx_rows = g.matmul(rx, g.constant(Tensor::full({1, n}, 1.0)));
  NodeId rx_cols = g.transpose(rx_rows);
  NodeId d2xx = g.sub(g.add(rx_rows, rx_cols), g.scale(2.0, sxx));
  NodeId kxx = g.exp(g.scale(-inv, d2xx));
  NodeId term_xx = g.scale(1.0 / (static_cast<double>(n) * n), g.sum(kxx));

  // The y-vs-y term has no x dependence; fold it in as a constant scalar so
  // the node value still equals the full statistic.
  double syy = 0.0;
  double invv = inv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) syy += gauss_kernel(row_dist2(y, i, y, j), invv);
  NodeId term_yy = g.constant(syy / (static_cast<double>(m) * m));

  Tensor ry = Tensor::zeros({1, m});
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) s += y.at(j, c) * y.at(j, c);
    ry.at(0, j) = s;
  }
  Tensor yt = Tensor::zeros({y.cols(), m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < y.cols(); ++c) yt.at(c, i) = y.at(i, c);
  NodeId sxy = g.matmul(x, g.constant(yt));  // n x m
  NodeId rx_b = g.matmul(rx, g.constant(Tensor::full({1, m}, 1.0)));
  NodeId ry_b = g.matmul(g.constant(Tensor::full({n, 1}, 1.0)), g.constant(ry));
  NodeId d2xy = g.sub(g.add(rx_b, ry_b), g.scale(2.0, sxy));
  NodeId kxy = g.exp(g.scale(-inv, d2xy));
  NodeId term_xy = g.scale(-2.0 / (static_cast<double>(n) * m), g.sum(kxy));

  return g.add(g.add(term_xx, term_yy), term_xy);
}

double median_heuristic_bandwidth(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
    throw UsageError("bandwidth between " + x.shape_str() + " and " + y.shape_str());
  }
  std::size_t n = x.rows() + y.rows();
  auto row = [&](std::size_t i, std::size_t c) {
    return i < x.rows() ? x.at(i, c) : y.at(i - x.rows(), c);
  };
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double d = row(i, c) - row(j, c);
        s += d * d;
      }
      dists.push_back(std::sqrt(s));
    }
  }
  if (dists.empty()) return 1e-6;
  std::size_t mid = (dists.size() - 1) / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  return std::max(dists[mid], 1e-6);
}

PretrainResult pretrain_source(const World& world, const std::string& domain,
                               const PretrainConfig& cfg) {
  if (cfg.batch < 2) throw UsageError("pretrain batch must be >= 2");
  if (cfg.iters < 0) throw UsageError("pretrain iters must be >= 0");
  find_domain(world, domain);

  PretrainResult res;
  res.params = init_generator(cfg.seed, world.data_dim);
  Rng latent_rng = Rng(cfg.seed).derive("pretrain-latents");
  Rng data_rng = Rng(cfg.seed).derive("pretrain-data");

  std::vector<Tensor> theta = res.params.blocks();
  AdamState state = make_adam_state(theta);
  double sigma = 1.0;

  for (std::int64_t iter = 0; iter < cfg.iters; ++iter) {
    Tensor w = latent_rng.normal_tensor({cfg.batch, res.params.latent_dim()});
    Tensor y = sample_domain(world, domain, cfg.batch, data_rng);
    if (iter % 100 == 0) {
      res.params.set_blocks(theta);
      sigma = median_heuristic_bandwidth(generate(res.params, w), y);
    }

    Graph g;
    std::vector<NodeId> blocks;
    auto names = res.params.block_names();
    for (std::size_t b = 0; b < theta.size(); ++b) blocks.push_back(g.leaf(names[b], theta[b]));
    NodeId x = generate_node(g, res.params, blocks, g.constant(w));
    NodeId loss;
    try {
      loss = mmd2_node(g, x, y, sigma);
    } catch (NumericError& e) {
      throw NumericError("pretrain iteration " + std::to_string(iter) + ": " + e.what());
    }
    auto grads = g.backward(loss);
    std::vector<Tensor> grad_list;
    for (NodeId id : blocks) grad_list.push_back(grads.at(id));
    adam_step(theta, grad_list, state, cfg.lr, cfg.beta1, cfg.beta2);

    if (cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter + 1 == cfg.iters)) {
      res.log.push_back(PretrainLogRow{iter, g.value(loss).item(), sigma});
    }
  }
  res.params.set_blocks(theta);

  // Headline number: a fresh evaluation draw, not the last minibatch.
  Rng eval_rng = Rng(cfg.seed).derive("pretrain-eval");
  Tensor w_eval = eval_rng.normal_tensor({256, res.params.latent_dim()});
  Tensor x_eval = generate(res.params, w_eval);
  Tensor y_eval = sample_domain(world, domain, 256, eval_rng);
  res.final_mmd = mmd2(x_eval, y_eval, median_heuristic_bandwidth(x_eval, y_eval));
  return res;
}

}  // namespace genadapt
