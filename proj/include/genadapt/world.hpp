#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genadapt/autodiff.hpp"
#include "genadapt/rng.hpp"
#include "genadapt/tensor.hpp"

namespace genadapt {

// Synthetic stand-in for a vision-language embedding space. Each domain is
// a Gaussian cloud in data space; a fixed random two-layer encoder maps data
// to the shared embedding space, and a domain's text embedding is defined as
// the encoding of its mean. That definition makes text and image embeddings
// exactly aligned by construction, which is the property the adaptation
// losses rely on.
struct Domain {
  std::string name;
  Tensor mean;   // rank 1, data_dim
  Tensor scale;  // rank 1, data_dim, all entries > 0
};

struct World {
  std::size_t data_dim = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;
  std::uint64_t seed = 0;
  Tensor w1;  // hidden x data
  Tensor b1;  // 1 x hidden
  Tensor w2;  // embed x hidden
  Tensor b2;  // 1 x embed
  std::vector<Domain> domains;
};

World build_world(std::uint64_t seed, std::size_t data_dim, std::size_t embed_dim,
                  std::size_t hidden_dim, std::vector<Domain> domains);

// Two Gaussian domains centered at base +- (distance/2) along a random unit
// axis, isotropic scale. The base point sits mean_offset away from the data
// origin along a second random axis: real joint embedding spaces put related
// domains inside a narrow cone (embedding norms large compared with the
// inter-domain direction), and a shared off-origin base reproduces that cone
// once the encoder partially saturates. mean_offset = 0 recovers domains
// mirrored about the origin. This is the benchmark configuration used by the
// CLI.
World make_two_domain_world(std::uint64_t seed, std::size_t data_dim, std::size_t embed_dim,
                            std::size_t hidden_dim, const std::string& src_name,
                            const std::string& trg_name, double mean_distance, double scale,
                            double mean_offset);

inline constexpr std::uint64_t kDefaultWorldSeed = 569;
inline constexpr double kDefaultMeanOffset = 3.0;

World default_benchmark_world(std::uint64_t seed = kDefaultWorldSeed);

const Domain& find_domain(const World& world, const std::string& name);

// n draws of mean + scale * N(0, I). The caller owns the rng stream.
Tensor sample_domain(const World& world, const std::string& name, std::size_t n, Rng& rng);

Tensor encode_image(const World& world, const Tensor& x);      // n x data -> n x embed
Tensor encode_text(const World& world, const std::string& name);  // rank-1 embed

// Graph version of encode_image; encoder weights enter as constants so no
// gradient ever reaches them.
NodeId encode_image_node(Graph& g, const World& world, NodeId x);

}  // namespace genadapt
