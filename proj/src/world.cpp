#include "genadapt/world.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "genadapt/common.hpp"

namespace genadapt {

World build_world(std::uint64_t seed, std::size_t data_dim, std::size_t embed_dim,
                  std::size_t hidden_dim, std::vector<Domain> domains) {
  if (data_dim < 1 || embed_dim < 1 || hidden_dim < 1) {
    throw UsageError("world dimensions must be >= 1");
  }
  if (domains.size() < 2) {
    throw UsageError("world needs at least two domains");
  }
  std::set<std::string> names;
  for (const Domain& d : domains) {
    if (d.name.empty()) throw UsageError("domain with empty name");
    if (!names.insert(d.name).second) throw UsageError("duplicate domain name '" + d.name + "'");
    if (d.mean.rank() != 1 || d.mean.numel() != data_dim) {
      throw UsageError("domain '" + d.name + "' mean has shape " + d.mean.shape_str());
    }
    if (d.scale.rank() != 1 || d.scale.numel() != data_dim) {
      throw UsageError("domain '" + d.name + "' scale has shape " + d.scale.shape_str());
    }
    for (std::size_t i = 0; i < d.scale.numel(); ++i) {
      if (!(d.scale.at(i) > 0.0)) {
        throw UsageError("domain '" + d.name + "' scale must be positive everywhere");
      }
    }
  }

  World w;
  w.data_dim = data_dim;
  w.embed_dim = embed_dim;
  w.hidden_dim = hidden_dim;
  w.seed = seed;
  // Biases are drawn too: a zero-bias tanh encoder is an odd function, which
  // would pin E(-x) = -E(x) and make symmetric domain means anti-collinear in
  // embedding space for every seed.
  Rng rng = Rng(seed).derive("encoder");
  double s1 = 1.0 / std::sqrt(static_cast<double>(data_dim));
  double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  w.w1 = rng.normal_tensor({hidden_dim, data_dim}, s1);
  w.b1 = rng.normal_tensor({1, hidden_dim}, s1);
  w.w2 = rng.normal_tensor({embed_dim, hidden_dim}, s2);
  w.b2 = rng.normal_tensor({1, embed_dim}, s2);
  w.domains = std::move(domains);

  // Smoke check: the adaptation losses need domains that the encoder can
  // actually tell apart. Near-collinear text embeddings usually mean an
  // unlucky encoder seed.
  for (std::size_t i = 0; i < w.domains.size(); ++i) {
    for (std::size_t j = i + 1; j < w.domains.size(); ++j) {
      double c = guarded_cosine(encode_text(w, w.domains[i].name), encode_text(w, w.domains[j].name));
      if (c >= 0.99) {
        std::ostringstream os;
        os << "text embeddings of '" << w.domains[i].name << "' and '" << w.domains[j].name
           << "' are nearly collinear (cos = " << c << "); consider a different world seed";
        warn(os.str());
      }
    }
  }
  return w;
}

World make_two_domain_world(std::uint64_t seed, std::size_t data_dim, std::size_t embed_dim,
                            std::size_t hidden_dim, const std::string& src_name,
                            const std::string& trg_name, double mean_distance, double scale,
                            double mean_offset) {
  if (!(mean_distance > 0.0) || !(scale > 0.0)) {
    throw UsageError("two-domain world needs mean_distance > 0 and scale > 0");
  }
  if (mean_offset < 0.0) throw UsageError("two-domain world needs mean_offset >= 0");
  Rng axis_rng = Rng(seed).derive("domain-axis");
  Tensor u = axis_rng.normal_tensor({data_dim});
  double n = l2_norm(u);
  if (n <= kNormGuard) throw NumericError("degenerate domain axis draw");
  for (std::size_t i = 0; i < u.numel(); ++i) u.at(i) /= n;

  Tensor base = Tensor::zeros({data_dim});
  if (mean_offset > 0.0) {
    Rng offset_rng = Rng(seed).derive("domain-offset");
    base = offset_rng.normal_tensor({data_dim});
    double bn = l2_norm(base);
    if (bn <= kNormGuard) throw NumericError("degenerate domain offset draw");
    for (std::size_t i = 0; i < base.numel(); ++i) base.at(i) *= mean_offset / bn;
  }

  double half = mean_distance / 2.0;
  Tensor mean_src = Tensor::zeros({data_dim});
  Tensor mean_trg = Tensor::zeros({data_dim});
  for (std::size_t i = 0; i < data_dim; ++i) {
    mean_src.at(i) = base.at(i) - half * u.at(i);
    mean_trg.at(i) = base.at(i) + half * u.at(i);
  }
  std::vector<Domain> domains;
  domains.push_back(Domain{src_name, mean_src, Tensor::full({data_dim}, scale)});
  domains.push_back(Domain{trg_name, mean_trg, Tensor::full({data_dim}, scale)});
  return build_world(seed, data_dim, embed_dim, hidden_dim, std::move(domains));
}

World default_benchmark_world(std::uint64_t seed) {
  return make_two_domain_world(seed, 8, 16, 32, "src", "trg", 4.0, 0.7, kDefaultMeanOffset);
}

const Domain& find_domain(const World& world, const std::string& name) {
  for (const Domain& d : world.domains) {
    if (d.name == name) return d;
  }
  std::ostringstream os;
  os << "unknown domain '" << name << "'; known domains:";
  for (const Domain& d : world.domains) os << " '" << d.name << "'";
  throw UsageError(os.str());
}

Tensor sample_domain(const World& world, const std::string& name, std::size_t n, Rng& rng) {
  if (n < 1) throw UsageError("sample_domain needs n >= 1");
  const Domain& d = find_domain(world, name);
  Tensor out = Tensor::zeros({n, world.data_dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < world.data_dim; ++j) {
      out.at(i, j) = d.mean.at(j) + d.scale.at(j) * rng.normal();
    }
  }
  return out;
}

Tensor encode_image(const World& world, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != world.data_dim) {
    throw UsageError("encode_image input of shape " + x.shape_str() + ", expected cols " +
                     std::to_string(world.data_dim));
  }
  std::size_t n = x.rows();
  Tensor h = Tensor::zeros({n, world.hidden_dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < world.hidden_dim; ++k) {
      double s = world.b1.at(0, k);
      for (std::size_t j = 0; j < world.data_dim; ++j) s += x.at(i, j) * world.w1.at(k, j);
      h.at(i, k) = std::tanh(s);
    }
  }
  Tensor e = Tensor::zeros({n, world.embed_dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < world.embed_dim; ++k) {
      double s = world.b2.at(0, k);
      for (std::size_t j = 0; j < world.hidden_dim; ++j) s += h.at(i, j) * world.w2.at(k, j);
      e.at(i, k) = s;
    }
  }
  e.check_finite("encode_image");
  return e;
}

Tensor encode_text(const World& world, const std::string& name) {
  const Domain& d = find_domain(world, name);
  Tensor m = Tensor({1, world.data_dim}, d.mean.data());
  Tensor e = encode_image(world, m);
  return Tensor({world.embed_dim}, e.data());
}

NodeId encode_image_node(Graph& g, const World& world, NodeId x) {
  std::size_t n = g.value(x).rows();
  NodeId ones = g.constant(Tensor::full({n, 1}, 1.0));
  // Weights are stored {out, in}; pre-transpose outside the graph since they
  // are constants anyway.
  Tensor w1t = Tensor::zeros({world.data_dim, world.hidden_dim});
  for (std::size_t i = 0; i < world.hidden_dim; ++i)
    for (std::size_t j = 0; j < world.data_dim; ++j) w1t.at(j, i) = world.w1.at(i, j);
  Tensor w2t = Tensor::zeros({world.hidden_dim, world.embed_dim});
  for (std::size_t i = 0; i < world.embed_dim; ++i)
    for (std::size_t j = 0; j < world.hidden_dim; ++j) w2t.at(j, i) = world.w2.at(i, j);

  NodeId h = g.tanh(g.add(g.matmul(x, g.constant(w1t)), g.matmul(ones, g.constant(world.b1))));
  return g.add(g.matmul(h, g.constant(w2t)), g.matmul(ones, g.constant(world.b2)));
}

}  // namespace genadapt
