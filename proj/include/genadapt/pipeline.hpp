#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genadapt/adaptation.hpp"
#include "genadapt/config.hpp"
#include "genadapt/generator.hpp"
#include "genadapt/metrics.hpp"
#include "genadapt/variations.hpp"
#include "genadapt/world.hpp"

namespace genadapt {

// File layout of one run directory. Every artifact has a fixed name so a
// rerun from the same config reproduces the directory byte for byte.
struct RunPaths {
  explicit RunPaths(std::string dir);

  std::string dir;
  std::string config_copy;       // config.txt
  std::string world;             // world.ckpt
  std::string g_src;             // g_src.ckpt
  std::string pretrain_log;      // pretrain_log.csv
  std::string variations;        // variations.ckpt
  std::string stage1_log;        // stage1_log.csv
  std::string ablation_summary;  // ablation_summary.csv
  std::string report_svg;        // report.svg

  std::string g_trg(LossMode mode) const;
  std::string fisher(LossMode mode) const;
  std::string losses_csv(LossMode mode) const;
  std::string metrics_csv(LossMode mode) const;
  std::string eval_csv(LossMode mode) const;
};

void ensure_dir(const std::string& dir);

// Writes the canonical config rendering to config.txt once; warns when the
// directory already holds a different config.
void stamp_config(const RunConfig& cfg, const RunPaths& paths);

// Load-or-build: an existing checkpoint wins (loaded with a config-hash
// warning when it disagrees); otherwise the object is built from the config
// and saved. Reruns in the same directory therefore never recompute.
World ensure_world(const RunConfig& cfg, const RunPaths& paths);
GeneratorParams ensure_g_src(const RunConfig& cfg, const World& world, const RunPaths& paths);
VariationSet ensure_variations(const RunConfig& cfg, const World& world, const RunPaths& paths);

World run_world(const RunConfig& cfg, const RunPaths& paths);
GeneratorParams run_pretrain(const RunConfig& cfg, const RunPaths& paths);
VariationSet run_variations(const RunConfig& cfg, const RunPaths& paths);
AdaptResult run_adapt(const RunConfig& cfg, const RunPaths& paths, LossMode mode);

struct EvalRow {
  std::string metric;
  double truncation;
  double value;
};

// Held-out comparison of a generator against one domain: samples latents at
// each truncation scale, encodes both sides and computes the metric battery.
std::vector<EvalRow> evaluate_generator(const World& world, const GeneratorParams& g,
                                        const std::string& domain, const EvalConfig& cfg);

// Loads g_trg_<mode>.ckpt and writes eval_<mode>.csv.
std::vector<EvalRow> run_eval(const RunConfig& cfg, const RunPaths& paths, LossMode mode);

struct AblationArm {
  LossMode mode;
  AdaptResult result;
  DiversityResult diversity;  // on eval-config samples at truncation 1
  double frechet = 0.0;
  PrecisionRecall pr;
};

// Runs the four loss modes off one shared world, source generator and
// variation set (one thread per arm) and writes ablation_summary.csv.
std::vector<AblationArm> run_ablation(const RunConfig& cfg, const RunPaths& paths);

// Collects the per-mode SSE curves from adapt_<mode>_metrics.csv into one
// chart at report.svg.
void run_report(const RunPaths& paths);

void run_fullrun(const RunConfig& cfg, const RunPaths& paths);

struct GradCase {
  std::string loss;
  double max_rel_error = 0.0;
  std::string worst;  // leaf coordinate of the worst error
};

struct GradSuiteResult {
  std::vector<GradCase> cases;  // one per loss family, worst over its configs
  double max_rel_error = 0.0;
  bool pass = true;
};

// Checks backward() against central differences for every loss family, each
// at `configs_per_loss` random small configurations.
GradSuiteResult run_gradient_suite(std::uint64_t seed, std::size_t configs_per_loss, double h,
                                   double tol);

}  // namespace genadapt
