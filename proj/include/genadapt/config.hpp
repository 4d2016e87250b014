#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genadapt/adaptation.hpp"
#include "genadapt/generator.hpp"
#include "genadapt/variations.hpp"

namespace genadapt {

struct WorldConfig {
  std::uint64_t seed = 569;
  std::size_t data_dim = 8;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::string source = "src";
  std::string target = "trg";
  double mean_distance = 4.0;
  double scale = 0.7;
  double mean_offset = 3.0;
};

struct Stage1Section {
  Stage1Config opt;        // iters, lr, betas, lambda_div, log_every, seed
  std::size_t k = 6;
  double epsilon = 0.0;    // 0 selects ||target embedding||
};

struct EvalConfig {
  std::uint64_t seed = 19;
  std::size_t k = 10;
  std::size_t samples = 1000;
  std::vector<double> truncations{0.5, 0.7, 1.0};
};

struct RunConfig {
  WorldConfig world;
  PretrainConfig pretrain;
  Stage1Section stage1;
  AdaptConfig stage2;
  EvalConfig eval;
  std::string out_dir = "out";
};

// Sectioned key-value text ([world], [pretrain], [stage1], [stage2], [eval],
// [output]); '#' starts a comment; unknown sections or keys are rejected.
// An empty document yields the defaults above.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical emission: fixed section and key order, reals at 17 significant
// digits. parse(emit(c)) == c for any valid c.
std::string emit_config(const RunConfig& cfg);

// FNV-1a over the canonical emission; stamped into checkpoints.
std::uint64_t config_hash(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace genadapt
