#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "genadapt/adaptation.hpp"
#include "genadapt/generator.hpp"
#include "genadapt/tensor.hpp"
#include "genadapt/variations.hpp"
#include "genadapt/world.hpp"

namespace genadapt {

// Plain-text container: a magic line, a kind tag, ordered metadata lines,
// named shaped arrays with 17-significant-digit values, and an end marker.
// Save followed by load reproduces every double bit-exactly.
struct Checkpoint {
  std::string kind;  // world | generator | variations | fisher
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> arrays;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> get_meta(const std::string& key) const;
  const Tensor& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

std::string render_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint_text(const std::string& text);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const std::string& expect_kind);

Checkpoint to_checkpoint(const World& w);
World world_from_checkpoint(const Checkpoint& c);

Checkpoint to_checkpoint(const GeneratorParams& g);
GeneratorParams generator_from_checkpoint(const Checkpoint& c);

Checkpoint to_checkpoint(const VariationSet& v);
VariationSet variations_from_checkpoint(const Checkpoint& c);

Checkpoint to_checkpoint(const FisherDiag& f);
FisherDiag fisher_from_checkpoint(const Checkpoint& c);

// Warns (never errors) when the stored config_hash disagrees with the
// current one; absent metadata is accepted silently.
void check_config_hash(const Checkpoint& c, std::uint64_t expected, const std::string& path);

}  // namespace genadapt
