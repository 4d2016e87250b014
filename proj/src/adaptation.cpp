#include "genadapt/adaptation.hpp"

#include <cmath>
#include <sstream>

#include "genadapt/common.hpp"
#include "genadapt/metrics.hpp"
#include "genadapt/optim.hpp"

namespace genadapt {

LossMode parse_loss_mode(const std::string& s) {
  if (s == "dir") return LossMode::kDir;
  if (s == "dm") return LossMode::kDm;
  if (s == "dm-ewc") return LossMode::kDmEwc;
  if (s == "full") return LossMode::kFull;
  throw UsageError("unknown loss mode '" + s + "' (expected dir | dm | dm-ewc | full)");
}

const char* loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::kDir: return "dir";
    case LossMode::kDm: return "dm";
    case LossMode::kDmEwc: return "dm-ewc";
    case LossMode::kFull: return "full";
  }
  return "?";
}

namespace {
bool mode_uses_moments(LossMode m) { return m != LossMode::kDir; }
bool mode_uses_ewc(LossMode m) { return m == LossMode::kDmEwc || m == LossMode::kFull; }
bool mode_uses_rel(LossMode m) { return m == LossMode::kFull; }

double row_norm(const Tensor& m, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) s += m.at(r, c) * m.at(r, c);
  return std::sqrt(s);
}
}  // namespace

Tensor DirectionSet::mean() const {
  Tensor mu = Tensor::zeros({rows.cols()});
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t c = 0; c < rows.cols(); ++c) mu.at(c) += rows.at(i, c);
  for (std::size_t c = 0; c < mu.numel(); ++c) mu.at(c) /= static_cast<double>(rows.rows());
  return mu;
}

Tensor DirectionSet::gram(bool normalize) const {
  Tensor t = Tensor::zeros({rows.cols(), rows.rows()});
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t c = 0; c < rows.cols(); ++c) t.at(c, i) = rows.at(i, c);
  Tensor s = matmul(t, rows);
  if (normalize) {
    double inv = 1.0 / static_cast<double>(rows.rows());
    for (std::size_t i = 0; i < s.numel(); ++i) s.at(i) *= inv;
  }
  return s;
}

DirectionSet make_direction_set(Tensor rows, DirectionKind kind) {
  if (rows.rank() != 2 || rows.rows() < 1) {
    throw UsageError("direction set of shape " + rows.shape_str());
  }
  DirectionSet set;
  set.kind = kind;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double n = row_norm(rows, i);
    if (n <= kNormGuard) {
      if (kind == DirectionKind::kText) {
        throw NumericError("degenerate text direction row " + std::to_string(i));
      }
      set.degenerate = true;
    }
  }
  set.rows = std::move(rows);
  return set;
}

DirectionSet build_text_directions(const Tensor& t_src, const Tensor& t_trg) {
  if (t_src.rank() != 1 || !t_src.same_shape(t_trg)) {
    throw UsageError("text directions between " + t_src.shape_str() + " and " + t_trg.shape_str());
  }
  Tensor rows = Tensor::zeros({1, t_src.numel()});
  for (std::size_t c = 0; c < t_src.numel(); ++c) rows.at(0, c) = t_trg.at(c) - t_src.at(c);
  return make_direction_set(std::move(rows), DirectionKind::kText);
}

DirectionSet build_text_directions(const Tensor& t_src, const Tensor& t_trg,
                                   const VariationSet& variations) {
  if (t_src.rank() != 1 || !t_src.same_shape(t_trg)) {
    throw UsageError("text directions between " + t_src.shape_str() + " and " + t_trg.shape_str());
  }
  if (!variations.target.same_shape(t_trg) ||
      variations.target.data() != t_trg.data()) {
    throw UsageError("variation set was trained for a different target embedding");
  }
  std::size_t k = variations.count();
  Tensor rows = Tensor::zeros({k + 1, t_src.numel()});
  for (std::size_t c = 0; c < t_src.numel(); ++c) rows.at(0, c) = t_trg.at(c) - t_src.at(c);
  Tensor v = variations.variations();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < t_src.numel(); ++c) rows.at(i + 1, c) = v.at(i, c) - t_src.at(c);
  return make_direction_set(std::move(rows), DirectionKind::kText);
}

DirectionSet build_image_directions(const World& world, const GeneratorParams& g_src,
                                    const GeneratorParams& g_trg, const Tensor& latents) {
  Tensor e_src = encode_image(world, generate(g_src, latents));
  Tensor e_trg = encode_image(world, generate(g_trg, latents));
  Tensor rows = Tensor::zeros({latents.rows(), world.embed_dim});
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t c = 0; c < rows.cols(); ++c) rows.at(i, c) = e_trg.at(i, c) - e_src.at(i, c);
  return make_direction_set(std::move(rows), DirectionKind::kImage);
}

double directional_loss(const Tensor& d_img, const Tensor& d_text) {
  if (d_img.rank() != 2 || d_text.rank() != 1 || d_img.cols() != d_text.numel()) {
    throw UsageError("directional_loss between " + d_img.shape_str() + " and " +
                     d_text.shape_str());
  }
  if (l2_norm(d_text) <= kNormGuard) {
    throw NumericError("degenerate text direction: source and target embeddings coincide");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < d_img.rows(); ++i) {
    s += 1.0 - guarded_cosine(take_row(d_img, i), d_text);
  }
  return s / static_cast<double>(d_img.rows());
}

double loss_dm(const DirectionSet& d_img, const DirectionSet& d_text, double lambda_cov,
               bool gram_normalize) {
  if (d_img.rows.cols() != d_text.rows.cols()) {
    throw UsageError("loss_dm sets of widths " + std::to_string(d_img.rows.cols()) + " and " +
                     std::to_string(d_text.rows.cols()));
  }
  if (lambda_cov < 0.0) throw UsageError("loss_dm lambda_cov must be >= 0");
  double d1 = 1.0 - guarded_cosine(d_img.mean(), d_text.mean());
  Tensor gi = d_img.gram(gram_normalize);
  Tensor gt = d_text.gram(gram_normalize);
  double d2 = 0.0;
  for (std::size_t i = 0; i < gi.numel(); ++i) {
    double d = gi.at(i) - gt.at(i);
    d2 += d * d;
  }
  return d1 + lambda_cov * std::sqrt(d2);
}

NodeId loss_dm_node(Graph& g, const std::vector<NodeId>& d_img_rows, const DirectionSet& d_text,
                    double lambda_cov, bool gram_normalize) {
  if (d_img_rows.empty()) throw UsageError("loss_dm_node needs at least one direction row");
  if (lambda_cov < 0.0) throw UsageError("loss_dm lambda_cov must be >= 0");
  std::size_t n = d_img_rows.size();
  NodeId img = g.concat_rows(d_img_rows);  // N x D
  NodeId mu_i = g.scale(1.0 / static_cast<double>(n),
                        g.matmul(g.constant(Tensor::full({1, n}, 1.0)), img));
  NodeId d1 = g.sub(g.constant(1.0), g.cosine(mu_i, g.constant(d_text.mean())));
  NodeId gram_i = g.matmul(g.transpose(img), img);
  if (gram_normalize) gram_i = g.scale(1.0 / static_cast<double>(n), gram_i);
  NodeId d2 = g.frobenius(g.sub(gram_i, g.constant(d_text.gram(gram_normalize))));
  return g.add(d1, g.scale(lambda_cov, d2));
}

FisherDiag estimate_fisher(const World& world, const GeneratorParams& g_src, const Tensor& t_src,
                           std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw UsageError("estimate_fisher needs samples >= 1");
  if (t_src.rank() != 1 || t_src.numel() != world.embed_dim) {
    throw UsageError("estimate_fisher target of shape " + t_src.shape_str());
  }
  Rng rng = Rng(seed).derive("fisher-latents");
  std::vector<Tensor> src_blocks = g_src.blocks();
  auto names = g_src.block_names();
  FisherDiag f;
  f.samples = samples;
  for (const Tensor& b : src_blocks) f.blocks.push_back(Tensor::zeros(b.shape()));

  for (std::size_t m = 0; m < samples; ++m) {
    Tensor w = rng.normal_tensor({1, g_src.latent_dim()});
    try {
      Graph g;
      std::vector<NodeId> blocks;
      for (std::size_t b = 0; b < src_blocks.size(); ++b) {
        blocks.push_back(g.leaf(names[b], src_blocks[b]));
      }
      NodeId x = generate_node(g, g_src, blocks, g.constant(w));
      NodeId e = encode_image_node(g, world, x);
      NodeId sim = g.cosine(e, g.constant(t_src));
      auto grads = g.backward(sim);
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const Tensor& gb = grads.at(blocks[b]);
        for (std::size_t i = 0; i < gb.numel(); ++i) {
          f.blocks[b].at(i) += gb.at(i) * gb.at(i);
        }
      }
    } catch (NumericError& e) {
      throw NumericError("fisher sample " + std::to_string(m) + ": " + e.what());
    }
  }
  double inv = 1.0 / static_cast<double>(samples);
  for (Tensor& b : f.blocks)
    for (std::size_t i = 0; i < b.numel(); ++i) b.at(i) *= inv;
  return f;
}

namespace {
void check_fisher_alignment(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                            const char* what) {
  if (a.size() != b.size()) {
    throw UsageError(std::string(what) + ": block count mismatch");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_shape(b[i])) {
      throw UsageError(std::string(what) + ": shape mismatch at block " + std::to_string(i));
    }
  }
}
}  // namespace

double loss_ewc(const GeneratorParams& g_trg, const GeneratorParams& g_src, const FisherDiag& f) {
  auto tb = g_trg.blocks();
  auto sb = g_src.blocks();
  check_fisher_alignment(tb, sb, "loss_ewc params");
  check_fisher_alignment(tb, f.blocks, "loss_ewc fisher");
  double s = 0.0;
  for (std::size_t b = 0; b < tb.size(); ++b) {
    for (std::size_t i = 0; i < tb[b].numel(); ++i) {
      double d = tb[b].at(i) - sb[b].at(i);
      s += f.blocks[b].at(i) * d * d;
    }
  }
  return s;
}

NodeId loss_ewc_node(Graph& g, const std::vector<NodeId>& trg_blocks, const GeneratorParams& g_src,
                     const FisherDiag& f) {
  auto sb = g_src.blocks();
  if (trg_blocks.size() != sb.size() || sb.size() != f.blocks.size()) {
    throw UsageError("loss_ewc_node block count mismatch");
  }
  NodeId acc = 0;
  bool have = false;
  for (std::size_t b = 0; b < trg_blocks.size(); ++b) {
    NodeId d = g.sub(trg_blocks[b], g.constant(sb[b]));
    NodeId term = g.sum(g.mul(g.constant(f.blocks[b]), g.mul(d, d)));
    acc = have ? g.add(acc, term) : term;
    have = true;
  }
  return acc;
}

double loss_rel(const Tensor& x_src, const Tensor& x_trg) {
  if (x_src.rank() != 2 || !x_src.same_shape(x_trg)) {
    throw UsageError("loss_rel between " + x_src.shape_str() + " and " + x_trg.shape_str());
  }
  std::size_t n = x_src.rows();
  if (n < 2) throw UsageError("loss_rel needs at least 2 rows");
  auto relation = [](const Tensor& x) {
    Tensor m = matmul(x, [&] {
      Tensor t = Tensor::zeros({x.cols(), x.rows()});
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < x.cols(); ++c) t.at(c, i) = x.at(i, c);
      return t;
    }());
    Tensor p = Tensor::zeros(m.shape());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double mx = m.at(i, 0);
      for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, m.at(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        p.at(i, j) = std::exp(m.at(i, j) - mx);
        z += p.at(i, j);
      }
      for (std::size_t j = 0; j < m.cols(); ++j) p.at(i, j) /= z;
    }
    return p;
  };
  Tensor p = relation(x_src);
  Tensor q = relation(x_trg);
  double s = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    s += p.at(i) * (std::log(std::max(p.at(i), kLogGuard)) - std::log(std::max(q.at(i), kLogGuard)));
  }
  return s / static_cast<double>(n);
}

NodeId loss_rel_node(Graph& g, NodeId x_src, NodeId x_trg) {
  // Values are copied out: builder calls below may reallocate the tape.
  std::size_t n = 0;
  {
    const Tensor& xs = g.value(x_src);
    if (xs.rank() != 2 || !xs.same_shape(g.value(x_trg))) {
      throw UsageError("loss_rel_node between " + xs.shape_str() + " and " +
                       g.value(x_trg).shape_str());
    }
    if (xs.rows() < 2) throw UsageError("loss_rel needs at least 2 rows");
    n = xs.rows();
  }
  NodeId p = g.row_softmax(g.matmul(x_src, g.transpose(x_src)));
  NodeId q = g.row_softmax(g.matmul(x_trg, g.transpose(x_trg)));
  NodeId kl = g.sum(g.mul(p, g.sub(g.log(p), g.log(q))));
  return g.scale(1.0 / static_cast<double>(n), kl);
}

void validate(const AdaptConfig& cfg) {
  if (cfg.lambda_cov < 0.0 || cfg.lambda_ewc < 0.0 || cfg.lambda_rel < 0.0) {
    throw UsageError("adapt lambdas must be >= 0");
  }
  if (cfg.iters < 0) throw UsageError("adapt iters must be >= 0");
  if (cfg.batch < 1) throw UsageError("adapt batch must be >= 1");
  if (mode_uses_rel(cfg.mode) && cfg.batch < 2) {
    throw UsageError("loss mode 'full' needs batch >= 2 for the relation matrix");
  }
  if (mode_uses_ewc(cfg.mode) && cfg.fisher_samples < 1) {
    throw UsageError("loss mode '" + std::string(loss_mode_name(cfg.mode)) +
                     "' needs fisher_samples >= 1");
  }
  if (cfg.eval_every < 1) throw UsageError("adapt eval_every must be >= 1");
}

Stage2Graph build_stage2_graph(const World& world, const GeneratorParams& g_src,
                               const std::vector<Tensor>& theta_blocks, const Tensor& latents,
                               const Tensor& delta_text, const DirectionSet* text_set,
                               const FisherDiag* fisher, const AdaptConfig& cfg) {
  if (latents.rank() != 2 || latents.cols() != g_src.latent_dim()) {
    throw UsageError("stage 2 latents of shape " + latents.shape_str());
  }
  std::size_t n = latents.rows();
  if (mode_uses_moments(cfg.mode) && text_set == nullptr) {
    throw UsageError("loss mode '" + std::string(loss_mode_name(cfg.mode)) +
                     "' needs a text direction set");
  }
  if (mode_uses_ewc(cfg.mode) && fisher == nullptr) {
    throw UsageError("loss mode '" + std::string(loss_mode_name(cfg.mode)) +
                     "' needs a fisher estimate");
  }
  if (mode_uses_rel(cfg.mode) && n < 2) {
    throw UsageError("relation loss needs at least 2 latents");
  }

  Stage2Graph s2;
  Graph& g = s2.graph;
  auto names = g_src.block_names();
  auto src_blocks = g_src.blocks();
  check_fisher_alignment(theta_blocks, src_blocks, "stage 2 theta");
  for (std::size_t b = 0; b < theta_blocks.size(); ++b) {
    s2.theta.push_back(g.leaf(names[b], theta_blocks[b]));
  }

  // Frozen source pass, computed outside the graph.
  Tensor e_src = encode_image(world, generate(g_src, latents));

  std::vector<NodeId> d_rows;
  std::vector<NodeId> e_rows;
  for (std::size_t i = 0; i < n; ++i) {
    NodeId w = g.constant(take_row(latents, i));
    NodeId x = generate_node(g, g_src, s2.theta, w);
    NodeId e = encode_image_node(g, world, x);
    e_rows.push_back(e);
    d_rows.push_back(g.sub(e, g.constant(take_row(e_src, i))));
  }

  NodeId loss = 0;
  if (cfg.mode == LossMode::kDir) {
    if (l2_norm(delta_text) <= kNormGuard) {
      throw NumericError("degenerate text direction: source and target embeddings coincide");
    }
    NodeId dt = g.constant(delta_text);
    NodeId one = g.constant(1.0);
    NodeId acc = 0;
    bool have = false;
    for (NodeId d : d_rows) {
      NodeId term = g.sub(one, g.cosine(d, dt));
      acc = have ? g.add(acc, term) : term;
      have = true;
    }
    s2.comp_dir = g.scale(1.0 / static_cast<double>(n), acc);
    loss = *s2.comp_dir;
  } else {
    s2.comp_dm = loss_dm_node(g, d_rows, *text_set, cfg.lambda_cov, cfg.gram_normalize);
    loss = *s2.comp_dm;
    if (mode_uses_ewc(cfg.mode)) {
      s2.comp_ewc = loss_ewc_node(g, s2.theta, g_src, *fisher);
      loss = g.add(loss, g.scale(cfg.lambda_ewc, *s2.comp_ewc));
    }
    if (mode_uses_rel(cfg.mode)) {
      s2.comp_rel = loss_rel_node(g, g.constant(e_src), g.concat_rows(e_rows));
      loss = g.add(loss, g.scale(cfg.lambda_rel, *s2.comp_rel));
    }
  }
  s2.loss = loss;
  return s2;
}

AdaptResult adapt(const World& world, const GeneratorParams& g_src, const VariationSet* variations,
                  const std::string& src_name, const std::string& trg_name,
                  const AdaptConfig& cfg) {
  validate(cfg);
  if (g_src.out_dim() != world.data_dim) {
    throw UsageError("generator output width " + std::to_string(g_src.out_dim()) +
                     " does not match world data dimension " + std::to_string(world.data_dim));
  }
  Tensor t_src = encode_text(world, src_name);
  Tensor t_trg = encode_text(world, trg_name);
  Tensor delta_text = Tensor::zeros({world.embed_dim});
  for (std::size_t c = 0; c < world.embed_dim; ++c) delta_text.at(c) = t_trg.at(c) - t_src.at(c);
  if (l2_norm(delta_text) <= kNormGuard) {
    throw NumericError("degenerate text direction between '" + src_name + "' and '" + trg_name +
                       "'");
  }

  std::optional<DirectionSet> text_set;
  if (mode_uses_moments(cfg.mode)) {
    if (variations == nullptr) {
      throw UsageError("loss mode '" + std::string(loss_mode_name(cfg.mode)) +
                       "' needs a trained variation set");
    }
    text_set = build_text_directions(t_src, t_trg, *variations);
  }

  AdaptResult res;
  if (mode_uses_ewc(cfg.mode)) {
    res.fisher = estimate_fisher(world, g_src, t_src, cfg.fisher_samples, cfg.seed);
  }

  res.eval_latents = Rng(cfg.seed).derive("eval-latents").normal_tensor({256, g_src.latent_dim()});
  Rng batch_rng = Rng(cfg.seed).derive("stage2-batch");

  std::vector<Tensor> theta = g_src.blocks();
  AdamState state = make_adam_state(theta);
  res.g_trg = g_src;

  auto held_out_sse = [&]() {
    res.g_trg.set_blocks(theta);
    FeatureSet f{encode_image(world, generate(res.g_trg, res.eval_latents)), "held-out"};
    return sse_compactness(f);
  };
  res.metric_log.push_back(AdaptMetricRow{0, held_out_sse()});

  for (std::int64_t iter = 0; iter < cfg.iters; ++iter) {
    Tensor w = batch_rng.normal_tensor({cfg.batch, g_src.latent_dim()});
    AdaptLossRow row{iter, {}, {}, {}, {}, 0.0};
    try {
      Stage2Graph s2 = build_stage2_graph(world, g_src, theta, w, delta_text,
                                          text_set ? &*text_set : nullptr,
                                          res.fisher.blocks.empty() ? nullptr : &res.fisher, cfg);
      row.total = s2.graph.value(s2.loss).item();
      if (s2.comp_dir) row.dir = s2.graph.value(*s2.comp_dir).item();
      if (s2.comp_dm) row.dm = s2.graph.value(*s2.comp_dm).item();
      if (s2.comp_ewc) row.ewc = s2.graph.value(*s2.comp_ewc).item();
      if (s2.comp_rel) row.rel = s2.graph.value(*s2.comp_rel).item();

      auto grads = s2.graph.backward(s2.loss);
      std::vector<Tensor> grad_list;
      for (NodeId id : s2.theta) grad_list.push_back(grads.at(id));
      adam_step(theta, grad_list, state, cfg.lr, cfg.beta1, cfg.beta2);
      if (iter == 0) {
        // The run starts at the exactly degenerate point (every image
        // direction is the zero vector), where the clamped cosine
        // denominators make the gradient magnitude meaningless. Adam's
        // first step is lr * sign(g) regardless of that magnitude, which
        // breaks the symmetry; the moments it accumulated are poisoned by
        // the clamp scale, so they are discarded.
        state = make_adam_state(theta);
      }
    } catch (NumericError& e) {
      std::ostringstream os;
      os << "stage 2 aborted at iteration " << iter << " (mode " << loss_mode_name(cfg.mode)
         << "): " << e.what();
      if (!res.loss_log.empty()) {
        os << "; last logged total loss " << res.loss_log.back().total;
      }
      throw NumericError(os.str());
    }
    res.loss_log.push_back(row);
    if ((iter + 1) % cfg.eval_every == 0) {
      res.metric_log.push_back(AdaptMetricRow{iter + 1, held_out_sse()});
    }
  }
  res.g_trg.set_blocks(theta);
  return res;
}

}  // namespace genadapt
