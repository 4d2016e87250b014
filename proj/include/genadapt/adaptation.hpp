#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "genadapt/autodiff.hpp"
#include "genadapt/generator.hpp"
#include "genadapt/rng.hpp"
#include "genadapt/tensor.hpp"
#include "genadapt/variations.hpp"
#include "genadapt/world.hpp"

namespace genadapt {

enum class LossMode { kDir, kDm, kDmEwc, kFull };

LossMode parse_loss_mode(const std::string& s);  // dir | dm | dm-ewc | full
const char* loss_mode_name(LossMode mode);

enum class DirectionKind { kText, kImage };

// Rows of embedding-space displacement vectors. Text sets must have no
// near-zero row; image sets may (the two generators start identical), so
// they only carry a degenerate flag and the cosine guards downstream cope.
struct DirectionSet {
  Tensor rows;  // R x D
  DirectionKind kind = DirectionKind::kText;
  bool degenerate = false;

  Tensor mean() const;  // rank 1, D
  // Gram matrix rows^T rows, divided by R when normalize is set.
  Tensor gram(bool normalize) const;
};

DirectionSet make_direction_set(Tensor rows, DirectionKind kind);

DirectionSet build_text_directions(const Tensor& t_src, const Tensor& t_trg);
DirectionSet build_text_directions(const Tensor& t_src, const Tensor& t_trg,
                                   const VariationSet& variations);
DirectionSet build_image_directions(const World& world, const GeneratorParams& g_src,
                                    const GeneratorParams& g_trg, const Tensor& latents);

// (1/N) sum_n (1 - cos(dI_n, dT)).
double directional_loss(const Tensor& d_img, const Tensor& d_text);

// d1 + lambda_cov * d2 with d1 = 1 - cos(mean, mean) and d2 the Frobenius
// norm of the Gram difference.
double loss_dm(const DirectionSet& d_img, const DirectionSet& d_text, double lambda_cov,
               bool gram_normalize);
// Graph version over per-sample direction rows (each node 1 x D).
NodeId loss_dm_node(Graph& g, const std::vector<NodeId>& d_img_rows, const DirectionSet& d_text,
                    double lambda_cov, bool gram_normalize);

struct FisherDiag {
  std::vector<Tensor> blocks;  // matches GeneratorParams::blocks() shapes
  std::size_t samples = 0;
};

FisherDiag estimate_fisher(const World& world, const GeneratorParams& g_src, const Tensor& t_src,
                           std::size_t samples, std::uint64_t seed);

double loss_ewc(const GeneratorParams& g_trg, const GeneratorParams& g_src, const FisherDiag& f);
NodeId loss_ewc_node(Graph& g, const std::vector<NodeId>& trg_blocks, const GeneratorParams& g_src,
                     const FisherDiag& f);

// KL(row-softmax(x_src x_src^T) || row-softmax(x_trg x_trg^T)) / N,
// diagonal kept, source side as the reference distribution.
double loss_rel(const Tensor& x_src, const Tensor& x_trg);
NodeId loss_rel_node(Graph& g, NodeId x_src, NodeId x_trg);

struct AdaptConfig {
  LossMode mode = LossMode::kFull;
  std::int64_t iters = 2000;
  std::size_t batch = 4;  // N
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double lambda_cov = 1e3;
  double lambda_ewc = 1e7;
  double lambda_rel = 1e2;
  bool gram_normalize = true;
  std::size_t fisher_samples = 256;
  std::int64_t eval_every = 100;
  std::uint64_t seed = 17;
};

void validate(const AdaptConfig& cfg);

// One training step's loss graph. theta are the only leaves; the frozen
// source generator, the world encoder, text directions and Fisher all enter
// as constants, so backward() can only move the target generator.
struct Stage2Graph {
  Graph graph;
  std::vector<NodeId> theta;
  NodeId loss = 0;
  std::optional<NodeId> comp_dir;  // raw component values for logging
  std::optional<NodeId> comp_dm;
  std::optional<NodeId> comp_ewc;
  std::optional<NodeId> comp_rel;
};

Stage2Graph build_stage2_graph(const World& world, const GeneratorParams& g_src,
                               const std::vector<Tensor>& theta_blocks, const Tensor& latents,
                               const Tensor& delta_text, const DirectionSet* text_set,
                               const FisherDiag* fisher, const AdaptConfig& cfg);

struct AdaptLossRow {
  std::int64_t iter;
  std::optional<double> dir, dm, ewc, rel;
  double total;
};

struct AdaptMetricRow {
  std::int64_t iter;
  double sse;
};

struct AdaptResult {
  GeneratorParams g_trg;
  FisherDiag fisher;  // empty blocks when the mode has no EWC term
  std::vector<AdaptLossRow> loss_log;
  std::vector<AdaptMetricRow> metric_log;  // held-out SSE every eval_every iters
  Tensor eval_latents;                     // the fixed held-out set, 256 x Dw
};

// Stage 2. variations may be null only for the dir baseline.
AdaptResult adapt(const World& world, const GeneratorParams& g_src, const VariationSet* variations,
                  const std::string& src_name, const std::string& trg_name,
                  const AdaptConfig& cfg);

}  // namespace genadapt
