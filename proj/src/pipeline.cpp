#include "genadapt/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "genadapt/checkpoint.hpp"
#include "genadapt/common.hpp"
#include "genadapt/report.hpp"
#include "genadapt/rng.hpp"

namespace genadapt {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw UsageError("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::string mode_tag(LossMode mode) {
  std::string t = loss_mode_name(mode);
  for (char& c : t) {
    if (c == '-') c = '_';
  }
  return t;
}

void stamp(Checkpoint* c, const RunConfig& cfg) {
  c->set_meta("config_hash", std::to_string(config_hash(cfg)));
}

}  // namespace

RunPaths::RunPaths(std::string d)
    : dir(std::move(d)),
      config_copy(join(dir, "config.txt")),
      world(join(dir, "world.ckpt")),
      g_src(join(dir, "g_src.ckpt")),
      pretrain_log(join(dir, "pretrain_log.csv")),
      variations(join(dir, "variations.ckpt")),
      stage1_log(join(dir, "stage1_log.csv")),
      ablation_summary(join(dir, "ablation_summary.csv")),
      report_svg(join(dir, "report.svg")) {}

std::string RunPaths::g_trg(LossMode mode) const {
  return join(dir, "g_trg_" + mode_tag(mode) + ".ckpt");
}
std::string RunPaths::fisher(LossMode mode) const {
  return join(dir, "fisher_" + mode_tag(mode) + ".ckpt");
}
std::string RunPaths::losses_csv(LossMode mode) const {
  return join(dir, "adapt_" + mode_tag(mode) + "_losses.csv");
}
std::string RunPaths::metrics_csv(LossMode mode) const {
  return join(dir, "adapt_" + mode_tag(mode) + "_metrics.csv");
}
std::string RunPaths::eval_csv(LossMode mode) const {
  return join(dir, "eval_" + mode_tag(mode) + ".csv");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create directory '" + dir + "': " + ec.message());
}

void stamp_config(const RunConfig& cfg, const RunPaths& paths) {
  ensure_dir(paths.dir);
  std::string text = emit_config(cfg);
  if (file_exists(paths.config_copy)) {
    if (read_text_file(paths.config_copy) != text) {
      warn("config in '" + paths.dir + "' differs from the one on this invocation");
    }
    return;
  }
  write_text_file(paths.config_copy, text);
}

World ensure_world(const RunConfig& cfg, const RunPaths& paths) {
  if (file_exists(paths.world)) {
    Checkpoint c = load_checkpoint(paths.world, "world");
    check_config_hash(c, config_hash(cfg), paths.world);
    return world_from_checkpoint(c);
  }
  World w = make_two_domain_world(cfg.world.seed, cfg.world.data_dim, cfg.world.embed_dim,
                                  cfg.world.hidden_dim, cfg.world.source, cfg.world.target,
                                  cfg.world.mean_distance, cfg.world.scale,
                                  cfg.world.mean_offset);
  ensure_dir(paths.dir);
  Checkpoint c = to_checkpoint(w);
  stamp(&c, cfg);
  save_checkpoint(c, paths.world);
  return w;
}

GeneratorParams ensure_g_src(const RunConfig& cfg, const World& world, const RunPaths& paths) {
  if (file_exists(paths.g_src)) {
    Checkpoint c = load_checkpoint(paths.g_src, "generator");
    check_config_hash(c, config_hash(cfg), paths.g_src);
    return generator_from_checkpoint(c);
  }
  PretrainResult pr = pretrain_source(world, cfg.world.source, cfg.pretrain);
  Checkpoint c = to_checkpoint(pr.params);
  stamp(&c, cfg);
  c.set_meta("final_mmd", fmt_real(pr.final_mmd));
  save_checkpoint(c, paths.g_src);

  std::ostringstream log;
  log << "iter,mmd,sigma\n";
  for (const PretrainLogRow& r : pr.log) {
    log << r.iter << "," << fmt_real(r.mmd) << "," << fmt_real(r.sigma) << "\n";
  }
  write_text_file(paths.pretrain_log, log.str());
  return pr.params;
}

VariationSet ensure_variations(const RunConfig& cfg, const World& world, const RunPaths& paths) {
  if (file_exists(paths.variations)) {
    Checkpoint c = load_checkpoint(paths.variations, "variations");
    check_config_hash(c, config_hash(cfg), paths.variations);
    return variations_from_checkpoint(c);
  }
  Tensor target = encode_text(world, cfg.world.target);
  Stage1Result sr = learn_variations(target, cfg.stage1.k, cfg.stage1.epsilon, cfg.stage1.opt);
  Checkpoint c = to_checkpoint(sr.set);
  stamp(&c, cfg);
  save_checkpoint(c, paths.variations);

  std::ostringstream log;
  log << "iter,cons,div\n";
  for (const Stage1LogRow& r : sr.log) {
    log << r.iter << "," << fmt_real(r.cons) << "," << fmt_real(r.div) << "\n";
  }
  write_text_file(paths.stage1_log, log.str());
  return sr.set;
}

World run_world(const RunConfig& cfg, const RunPaths& paths) {
  stamp_config(cfg, paths);
  return ensure_world(cfg, paths);
}

GeneratorParams run_pretrain(const RunConfig& cfg, const RunPaths& paths) {
  stamp_config(cfg, paths);
  World w = ensure_world(cfg, paths);
  return ensure_g_src(cfg, w, paths);
}

VariationSet run_variations(const RunConfig& cfg, const RunPaths& paths) {
  stamp_config(cfg, paths);
  World w = ensure_world(cfg, paths);
  return ensure_variations(cfg, w, paths);
}

namespace {

void write_adapt_outputs(const RunConfig& cfg, const RunPaths& paths, LossMode mode,
                         const AdaptResult& res) {
  std::vector<MetricsRow> losses;
  losses.reserve(res.loss_log.size());
  for (const AdaptLossRow& r : res.loss_log) {
    MetricsRow row;
    row.iter = r.iter;
    row.loss_dir = r.dir;
    row.loss_dm = r.dm;
    row.loss_ewc = r.ewc;
    row.loss_rel = r.rel;
    row.loss_total = r.total;
    losses.push_back(row);
  }
  write_metrics_csv(losses, paths.losses_csv(mode));

  std::vector<MetricsRow> metrics;
  metrics.reserve(res.metric_log.size());
  for (const AdaptMetricRow& r : res.metric_log) {
    MetricsRow row;
    row.iter = r.iter;
    row.sse = r.sse;
    metrics.push_back(row);
  }
  write_metrics_csv(metrics, paths.metrics_csv(mode));

  Checkpoint c = to_checkpoint(res.g_trg);
  stamp(&c, cfg);
  c.set_meta("loss_mode", loss_mode_name(mode));
  c.set_meta("iters", std::to_string(cfg.stage2.iters));
  save_checkpoint(c, paths.g_trg(mode));

  if (!res.fisher.blocks.empty()) {
    Checkpoint f = to_checkpoint(res.fisher);
    stamp(&f, cfg);
    save_checkpoint(f, paths.fisher(mode));
  }
}

}  // namespace

AdaptResult run_adapt(const RunConfig& cfg, const RunPaths& paths, LossMode mode) {
  stamp_config(cfg, paths);
  World world = ensure_world(cfg, paths);
  GeneratorParams g_src = ensure_g_src(cfg, world, paths);

  AdaptConfig acfg = cfg.stage2;
  acfg.mode = mode;

  AdaptResult res;
  if (mode == LossMode::kDir) {
    res = adapt(world, g_src, nullptr, cfg.world.source, cfg.world.target, acfg);
  } else {
    VariationSet vs = ensure_variations(cfg, world, paths);
    res = adapt(world, g_src, &vs, cfg.world.source, cfg.world.target, acfg);
  }
  write_adapt_outputs(cfg, paths, mode, res);
  return res;
}

std::vector<EvalRow> evaluate_generator(const World& world, const GeneratorParams& g,
                                        const std::string& domain, const EvalConfig& cfg) {
  if (cfg.samples <= cfg.k) throw UsageError("eval needs more samples than neighbors");
  Rng lat_rng = Rng(cfg.seed).derive("eval-latents");
  Tensor latents = lat_rng.normal_tensor({cfg.samples, g.latent_dim()});
  Rng real_rng = Rng(cfg.seed).derive("eval-real");
  Tensor real_x = sample_domain(world, domain, cfg.samples, real_rng);
  FeatureSet real = make_feature_set(encode_image(world, real_x), "real");

  std::vector<EvalRow> rows;
  for (double trunc : cfg.truncations) {
    Tensor z = latents;
    for (double& v : z.data()) v *= trunc;
    FeatureSet fake = make_feature_set(encode_image(world, generate(g, z)), "fake");
    DiversityResult div = intra_cluster_diversity(fake, cfg.k, cfg.seed);
    PrecisionRecall pr = precision_recall(real, fake, cfg.k);
    rows.push_back({"sse", trunc, sse_compactness(fake)});
    rows.push_back({"diversity_avg", trunc, div.avg});
    rows.push_back({"diversity_all", trunc, div.all});
    rows.push_back({"frechet", trunc, frechet_distance(real, fake)});
    rows.push_back({"precision", trunc, pr.precision});
    rows.push_back({"recall", trunc, pr.recall});
  }
  return rows;
}

namespace {

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path) {
  std::ostringstream o;
  o << "metric,truncation,value\n";
  for (const EvalRow& r : rows) {
    o << r.metric << "," << fmt_real(r.truncation) << "," << fmt_real(r.value) << "\n";
  }
  write_text_file(path, o.str());
}

}  // namespace

std::vector<EvalRow> run_eval(const RunConfig& cfg, const RunPaths& paths, LossMode mode) {
  World world = ensure_world(cfg, paths);
  std::string ckpt = paths.g_trg(mode);
  if (!file_exists(ckpt)) {
    throw UsageError("missing checkpoint '" + ckpt + "'; run adapt first");
  }
  Checkpoint c = load_checkpoint(ckpt, "generator");
  check_config_hash(c, config_hash(cfg), ckpt);
  GeneratorParams g = generator_from_checkpoint(c);
  std::vector<EvalRow> rows = evaluate_generator(world, g, cfg.world.target, cfg.eval);
  write_eval_csv(rows, paths.eval_csv(mode));
  return rows;
}

std::vector<AblationArm> run_ablation(const RunConfig& cfg, const RunPaths& paths) {
  stamp_config(cfg, paths);
  World world = ensure_world(cfg, paths);
  GeneratorParams g_src = ensure_g_src(cfg, world, paths);
  VariationSet vs = ensure_variations(cfg, world, paths);

  const LossMode modes[] = {LossMode::kDir, LossMode::kDm, LossMode::kDmEwc, LossMode::kFull};
  std::vector<AblationArm> arms(4);
  std::vector<std::exception_ptr> errors(4);
  std::vector<std::thread> threads;
  threads.reserve(4);
  for (std::size_t i = 0; i < 4; ++i) {
    arms[i].mode = modes[i];
    threads.emplace_back([&, i] {
      try {
        AdaptConfig acfg = cfg.stage2;
        acfg.mode = modes[i];
        const VariationSet* v = modes[i] == LossMode::kDir ? nullptr : &vs;
        arms[i].result = adapt(world, g_src, v, cfg.world.source, cfg.world.target, acfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ostringstream summary;
  summary << "mode,final_sse,diversity_avg,diversity_all,frechet,precision,recall\n";
  for (AblationArm& arm : arms) {
    write_adapt_outputs(cfg, paths, arm.mode, arm.result);
    std::vector<EvalRow> rows =
        evaluate_generator(world, arm.result.g_trg, cfg.world.target, cfg.eval);
    write_eval_csv(rows, paths.eval_csv(arm.mode));
    // The summary quotes the last truncation in the sweep (1.0 by default).
    double last = cfg.eval.truncations.back();
    for (const EvalRow& r : rows) {
      if (r.truncation != last) continue;
      if (r.metric == "diversity_avg") arm.diversity.avg = r.value;
      if (r.metric == "diversity_all") arm.diversity.all = r.value;
      if (r.metric == "frechet") arm.frechet = r.value;
      if (r.metric == "precision") arm.pr.precision = r.value;
      if (r.metric == "recall") arm.pr.recall = r.value;
    }
    summary << loss_mode_name(arm.mode) << "," << fmt_real(arm.result.metric_log.back().sse)
            << "," << fmt_real(arm.diversity.avg) << "," << fmt_real(arm.diversity.all) << ","
            << fmt_real(arm.frechet) << "," << fmt_real(arm.pr.precision) << ","
            << fmt_real(arm.pr.recall) << "\n";
  }
  write_text_file(paths.ablation_summary, summary.str());
  return arms;
}

void run_report(const RunPaths& paths) {
  const LossMode modes[] = {LossMode::kDir, LossMode::kDm, LossMode::kDmEwc, LossMode::kFull};
  std::vector<Series> series;
  for (LossMode mode : modes) {
    std::string path = paths.metrics_csv(mode);
    if (!file_exists(path)) continue;
    std::vector<MetricsRow> rows = parse_metrics_csv(read_text_file(path));
    Series s;
    s.name = loss_mode_name(mode);
    for (const MetricsRow& r : rows) {
      if (r.sse) s.points.emplace_back(static_cast<double>(r.iter), *r.sse);
    }
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  if (series.empty()) {
    throw UsageError("no adaptation metrics found in '" + paths.dir + "'; run adapt first");
  }
  write_svg_chart(series, paths.report_svg);
}

void run_fullrun(const RunConfig& cfg, const RunPaths& paths) {
  run_ablation(cfg, paths);
  run_report(paths);
}

namespace {

// One gradient-suite case: a scalar graph plus the leaf set to perturb.
struct SuiteCase {
  Graph g;
  NodeId loss = 0;
};

NodeId abs_node(Graph& g, NodeId x) {  // |x| as exp(log(x^2) / 2)
  return g.exp(g.scale(0.5, g.log(g.mul(x, x))));
}

SuiteCase make_dir_case(Rng& rng) {
  SuiteCase c;
  std::size_t n = 2 + rng.next_u64() % 3, d = 3 + rng.next_u64() % 4;
  NodeId dt = c.g.constant(rng.normal_tensor({1, d}));
  NodeId one = c.g.constant(1.0);
  NodeId acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    NodeId row = c.g.leaf("dI" + std::to_string(i), rng.normal_tensor({1, d}));
    NodeId term = c.g.sub(one, c.g.cosine(row, dt));
    acc = i ? c.g.add(acc, term) : term;
  }
  c.loss = c.g.scale(1.0 / static_cast<double>(n), acc);
  return c;
}

SuiteCase make_cons_case(Rng& rng) {
  SuiteCase c;
  std::size_t k = 2 + rng.next_u64() % 3, d = 3 + rng.next_u64() % 4;
  Tensor target = rng.normal_tensor({1, d});
  double eps = 0.5 + rng.uniform();
  NodeId t = c.g.constant(target);
  NodeId one = c.g.constant(1.0);
  NodeId acc = 0;
  for (std::size_t i = 0; i < k; ++i) {
    NodeId z = c.g.leaf("z" + std::to_string(i), rng.normal_tensor({1, d}));
    NodeId v = perturb_node(c.g, t, z, eps);
    NodeId term = c.g.sub(one, c.g.cosine(t, v));
    acc = i ? c.g.add(acc, term) : term;
  }
  c.loss = c.g.scale(1.0 / static_cast<double>(k), acc);
  return c;
}

std::vector<NodeId> leaf_rows(Graph& g, Rng& rng, std::size_t k, std::size_t d,
                              const std::string& prefix) {
  std::vector<NodeId> rows;
  for (std::size_t i = 0; i < k; ++i) {
    rows.push_back(g.leaf(prefix + std::to_string(i), rng.normal_tensor({1, d})));
  }
  return rows;
}

NodeId div_node(Graph& g, const std::vector<NodeId>& z) {
  NodeId acc = 0;
  bool have = false;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      NodeId a = abs_node(g, g.cosine(z[i], z[j]));
      acc = have ? g.add(acc, a) : a;
      have = true;
    }
  }
  double pairs = static_cast<double>(z.size() * (z.size() - 1)) / 2.0;
  return g.scale(1.0 / pairs, acc);
}

SuiteCase make_div_case(Rng& rng) {
  SuiteCase c;
  std::size_t k = 2 + rng.next_u64() % 3, d = 3 + rng.next_u64() % 4;
  c.loss = div_node(c.g, leaf_rows(c.g, rng, k, d, "z"));
  return c;
}

SuiteCase make_dm_case(Rng& rng) {
  SuiteCase c;
  std::size_t n = 3 + rng.next_u64() % 3, d = 3 + rng.next_u64() % 4;
  std::size_t rows = 2 + rng.next_u64() % 3;
  DirectionSet text = make_direction_set(rng.normal_tensor({rows, d}), DirectionKind::kText);
  double lambda_cov = 0.5 + rng.uniform();
  bool normalize = (rng.next_u64() & 1) != 0;
  c.loss = loss_dm_node(c.g, leaf_rows(c.g, rng, n, d, "dI"), text, lambda_cov, normalize);
  return c;
}

SuiteCase make_ewc_case(Rng& rng) {
  SuiteCase c;
  GeneratorParams src = init_generator_arch(rng.next_u64(), {2, 4, 3});
  FisherDiag f;
  f.samples = 1;
  std::vector<NodeId> theta;
  std::size_t b = 0;
  for (const Tensor& block : src.blocks()) {
    Tensor fb = Tensor::zeros(block.shape());
    for (double& v : fb.data()) v = rng.uniform();
    f.blocks.push_back(fb);
    Tensor pert = block;
    for (double& v : pert.data()) v += 0.1 * rng.normal();
    theta.push_back(c.g.leaf("theta" + std::to_string(b++), pert));
  }
  c.loss = loss_ewc_node(c.g, theta, src, f);
  return c;
}

SuiteCase make_rel_case(Rng& rng) {
  SuiteCase c;
  std::size_t n = 2 + rng.next_u64() % 3, d = 3 + rng.next_u64() % 3;
  NodeId a = c.g.leaf("x_src", rng.normal_tensor({n, d}));
  NodeId b = c.g.leaf("x_trg", rng.normal_tensor({n, d}));
  c.loss = loss_rel_node(c.g, a, b);
  return c;
}

SuiteCase make_s1_case(Rng& rng) {
  SuiteCase c;
  std::size_t k = 2 + rng.next_u64() % 3, d = 3 + rng.next_u64() % 4;
  Tensor target = rng.normal_tensor({1, d});
  double eps = 0.5 + rng.uniform();
  double lambda_div = 0.5 + rng.uniform();
  NodeId t = c.g.constant(target);
  NodeId one = c.g.constant(1.0);
  std::vector<NodeId> z = leaf_rows(c.g, rng, k, d, "z");
  NodeId acc = 0;
  for (std::size_t i = 0; i < k; ++i) {
    NodeId term = c.g.sub(one, c.g.cosine(t, perturb_node(c.g, t, z[i], eps)));
    acc = i ? c.g.add(acc, term) : term;
  }
  NodeId cons = c.g.scale(1.0 / static_cast<double>(k), acc);
  c.loss = c.g.add(cons, c.g.scale(lambda_div, div_node(c.g, z)));
  return c;
}

SuiteCase make_s2_case(Rng& rng) {
  World world = make_two_domain_world(rng.next_u64(), 3, 4, 5, "a", "b", 2.0, 0.5, 1.0);
  GeneratorParams g_src = init_generator_arch(rng.next_u64(), {2, 4, 3});
  Tensor t_src = encode_text(world, "a");
  Tensor t_trg = encode_text(world, "b");

  Tensor z = rng.normal_tensor({2, 4});
  VariationSet vs = make_variation_set(t_trg, z, l2_norm(t_trg));
  DirectionSet text = build_text_directions(t_src, t_trg, vs);
  FisherDiag fisher = estimate_fisher(world, g_src, t_src, 4, rng.next_u64());

  Tensor delta_text = Tensor::zeros({4});
  for (std::size_t i = 0; i < 4; ++i) delta_text.at(i) = t_trg.at(i) - t_src.at(i);

  std::vector<Tensor> theta = g_src.blocks();
  for (Tensor& block : theta) {
    for (double& v : block.data()) v += 0.05 * rng.normal();
  }
  Tensor latents = rng.normal_tensor({3, 2});

  AdaptConfig cfg;
  cfg.mode = LossMode::kFull;
  cfg.batch = 3;
  cfg.lambda_cov = 1.3;
  cfg.lambda_ewc = 0.9;
  cfg.lambda_rel = 0.7;

  Stage2Graph s2 =
      build_stage2_graph(world, g_src, theta, latents, delta_text, &text, &fisher, cfg);
  SuiteCase c;
  c.g = std::move(s2.graph);
  c.loss = s2.loss;
  return c;
}

}  // namespace

GradSuiteResult run_gradient_suite(std::uint64_t seed, std::size_t configs_per_loss, double h,
                                   double tol) {
  struct Family {
    const char* name;
    SuiteCase (*make)(Rng&);
  };
  const Family families[] = {
      {"dir", make_dir_case}, {"cons", make_cons_case}, {"div", make_div_case},
      {"dm", make_dm_case},   {"ewc", make_ewc_case},   {"rel", make_rel_case},
      {"s1", make_s1_case},   {"s2", make_s2_case},
  };

  GradSuiteResult out;
  Rng master(seed);
  for (const Family& fam : families) {
    Rng rng = master.derive(fam.name);
    GradCase gc;
    gc.loss = fam.name;
    for (std::size_t i = 0; i < configs_per_loss; ++i) {
      SuiteCase sc = fam.make(rng);
      GradCheckResult r = grad_check(sc.g, sc.loss, h, tol);
      if (r.max_rel_error > gc.max_rel_error) {
        gc.max_rel_error = r.max_rel_error;
        gc.worst = r.worst;
      }
    }
    out.max_rel_error = std::max(out.max_rel_error, gc.max_rel_error);
    out.cases.push_back(std::move(gc));
  }
  out.pass = out.max_rel_error < tol;
  return out;
}

}  // namespace genadapt
