#include "genadapt/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "genadapt/common.hpp"

namespace genadapt {

namespace {

constexpr const char* kMagic = "genadapt-checkpoint v1";

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool known_kind(const std::string& k) {
  return k == "world" || k == "generator" || k == "variations" || k == "fisher";
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::get_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const Tensor& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return t;
  }
  throw UsageError("checkpoint has no array '" + name + "'");
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return true;
  }
  return false;
}

std::string render_checkpoint(const Checkpoint& c) {
  if (!known_kind(c.kind)) throw UsageError("checkpoint kind '" + c.kind + "' is not valid");
  std::ostringstream o;
  o << kMagic << "\n";
  o << "kind " << c.kind << "\n";
  for (const auto& [k, v] : c.meta) o << "meta " << k << " " << v << "\n";
  for (const auto& [name, t] : c.arrays) {
    o << "array " << name << " " << t.rank();
    for (std::size_t d : t.shape()) o << " " << d;
    o << "\n";
    for (std::size_t i = 0; i < t.numel(); ++i) {
      o << fmt_real(t.at(i));
      o << ((i % 8 == 7 || i + 1 == t.numel()) ? "\n" : " ");
    }
  }
  o << "end\n";
  return o.str();
}

Checkpoint parse_checkpoint_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw UsageError("not a checkpoint: bad magic line");
  }
  Checkpoint c;
  bool have_kind = false;
  bool have_end = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "kind") {
      if (!(ls >> c.kind) || !known_kind(c.kind)) {
        throw UsageError("checkpoint kind line is malformed: '" + line + "'");
      }
      have_kind = true;
    } else if (tag == "meta") {
      std::string key;
      if (!(ls >> key)) throw UsageError("checkpoint meta line without key");
      std::string rest;
      std::getline(ls, rest);
      std::size_t a = rest.find_first_not_of(' ');
      c.meta.emplace_back(key, a == std::string::npos ? "" : rest.substr(a));
    } else if (tag == "array") {
      std::string name;
      std::size_t rank = 0;
      if (!(ls >> name >> rank) || rank > 2) {
        throw UsageError("checkpoint array header malformed: '" + line + "'");
      }
      std::vector<std::size_t> shape(rank);
      std::size_t numel = 1;
      for (std::size_t d = 0; d < rank; ++d) {
        if (!(ls >> shape[d])) throw UsageError("checkpoint array '" + name + "' missing dims");
        numel *= shape[d];
      }
      std::vector<double> data(numel);
      for (std::size_t i = 0; i < numel; ++i) {
        if (!(in >> data[i])) {
          throw UsageError("checkpoint truncated inside array '" + name + "' at value " +
                           std::to_string(i) + " of " + std::to_string(numel));
        }
      }
      in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
      c.arrays.emplace_back(name, Tensor(std::move(shape), std::move(data)));
    } else if (tag == "end") {
      have_end = true;
      break;
    } else {
      throw UsageError("checkpoint line not understood: '" + line + "'");
    }
  }
  if (!have_kind) throw UsageError("checkpoint has no kind line");
  if (!have_end) throw UsageError("checkpoint truncated: missing end marker");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << render_checkpoint(c);
  out.flush();
  if (!out) throw UsageError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_checkpoint_text(ss.str());
  } catch (UsageError& e) {
    throw UsageError(std::string(e.what()) + " (file '" + path + "')");
  }
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expect_kind) {
  Checkpoint c = load_checkpoint(path);
  if (c.kind != expect_kind) {
    throw UsageError("checkpoint '" + path + "' has kind '" + c.kind + "', expected '" +
                     expect_kind + "'");
  }
  return c;
}

Checkpoint to_checkpoint(const World& w) {
  Checkpoint c;
  c.kind = "world";
  c.set_meta("seed", std::to_string(w.seed));
  c.set_meta("data_dim", std::to_string(w.data_dim));
  c.set_meta("embed_dim", std::to_string(w.embed_dim));
  c.set_meta("hidden_dim", std::to_string(w.hidden_dim));
  c.set_meta("domain_count", std::to_string(w.domains.size()));
  c.arrays.emplace_back("encoder.w1", w.w1);
  c.arrays.emplace_back("encoder.b1", w.b1);
  c.arrays.emplace_back("encoder.w2", w.w2);
  c.arrays.emplace_back("encoder.b2", w.b2);
  for (std::size_t i = 0; i < w.domains.size(); ++i) {
    std::string p = "domain" + std::to_string(i);
    c.set_meta(p + ".name", w.domains[i].name);
    c.arrays.emplace_back(p + ".mean", w.domains[i].mean);
    c.arrays.emplace_back(p + ".scale", w.domains[i].scale);
  }
  return c;
}

namespace {

std::uint64_t meta_u64(const Checkpoint& c, const std::string& key) {
  auto v = c.get_meta(key);
  if (!v) throw UsageError("checkpoint missing meta '" + key + "'");
  const char* s = v->c_str();
  char* end = nullptr;
  unsigned long long out = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0') {
    throw UsageError("checkpoint meta '" + key + "' is not an unsigned integer: '" + *v + "'");
  }
  return out;
}

}  // namespace

World world_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "world") throw UsageError("expected world checkpoint, got '" + c.kind + "'");
  World w;
  w.seed = meta_u64(c, "seed");
  w.data_dim = meta_u64(c, "data_dim");
  w.embed_dim = meta_u64(c, "embed_dim");
  w.hidden_dim = meta_u64(c, "hidden_dim");
  w.w1 = c.array("encoder.w1");
  w.b1 = c.array("encoder.b1");
  w.w2 = c.array("encoder.w2");
  w.b2 = c.array("encoder.b2");
  if (w.w1.rank() != 2 || w.w1.rows() != w.hidden_dim || w.w1.cols() != w.data_dim ||
      w.w2.rank() != 2 || w.w2.rows() != w.embed_dim || w.w2.cols() != w.hidden_dim ||
      w.b1.rank() != 2 || w.b1.rows() != 1 || w.b1.cols() != w.hidden_dim ||
      w.b2.rank() != 2 || w.b2.rows() != 1 || w.b2.cols() != w.embed_dim) {
    throw UsageError("world checkpoint arrays do not match its declared dimensions");
  }
  std::size_t n = meta_u64(c, "domain_count");
  for (std::size_t i = 0; i < n; ++i) {
    std::string p = "domain" + std::to_string(i);
    auto name = c.get_meta(p + ".name");
    if (!name) throw UsageError("world checkpoint missing meta '" + p + ".name'");
    Domain d{*name, c.array(p + ".mean"), c.array(p + ".scale")};
    if (d.mean.rank() != 1 || d.mean.numel() != w.data_dim || d.scale.rank() != 1 ||
        d.scale.numel() != w.data_dim) {
      throw UsageError("world checkpoint domain '" + d.name + "' arrays are misshapen");
    }
    w.domains.push_back(std::move(d));
  }
  if (w.domains.empty()) throw UsageError("world checkpoint has no domains");
  return w;
}

Checkpoint to_checkpoint(const GeneratorParams& g) {
  Checkpoint c;
  c.kind = "generator";
  c.set_meta("layer_count", std::to_string(g.layers().size()));
  for (std::size_t l = 0; l < g.layers().size(); ++l) {
    c.set_meta("layer" + std::to_string(l) + ".name", g.layers()[l].name);
    c.arrays.emplace_back(g.layers()[l].name + ".weight", g.layers()[l].weight);
    c.arrays.emplace_back(g.layers()[l].name + ".bias", g.layers()[l].bias);
  }
  return c;
}

GeneratorParams generator_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "generator") {
    throw UsageError("expected generator checkpoint, got '" + c.kind + "'");
  }
  std::size_t n = meta_u64(c, "layer_count");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < n; ++l) {
    auto name = c.get_meta("layer" + std::to_string(l) + ".name");
    if (!name) throw UsageError("generator checkpoint missing layer " + std::to_string(l));
    layers.push_back(DenseLayer{*name, c.array(*name + ".weight"), c.array(*name + ".bias")});
  }
  return GeneratorParams(std::move(layers));
}

Checkpoint to_checkpoint(const VariationSet& v) {
  Checkpoint c;
  c.kind = "variations";
  c.set_meta("epsilon", fmt_real(v.epsilon));
  c.set_meta("k", std::to_string(v.count()));
  c.arrays.emplace_back("target", v.target);
  c.arrays.emplace_back("z", v.z);
  return c;
}

VariationSet variations_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "variations") {
    throw UsageError("expected variations checkpoint, got '" + c.kind + "'");
  }
  auto eps_str = c.get_meta("epsilon");
  if (!eps_str) throw UsageError("variations checkpoint missing meta 'epsilon'");
  const char* s = eps_str->c_str();
  char* end = nullptr;
  double eps = std::strtod(s, &end);
  if (end == s || *end != '\0') {
    throw UsageError("variations checkpoint meta 'epsilon' is not a real: '" + *eps_str + "'");
  }
  return make_variation_set(c.array("target"), c.array("z"), eps);
}

Checkpoint to_checkpoint(const FisherDiag& f) {
  Checkpoint c;
  c.kind = "fisher";
  c.set_meta("samples", std::to_string(f.samples));
  c.set_meta("block_count", std::to_string(f.blocks.size()));
  for (std::size_t b = 0; b < f.blocks.size(); ++b) {
    c.arrays.emplace_back("block" + std::to_string(b), f.blocks[b]);
  }
  return c;
}

FisherDiag fisher_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "fisher") throw UsageError("expected fisher checkpoint, got '" + c.kind + "'");
  FisherDiag f;
  f.samples = meta_u64(c, "samples");
  std::size_t n = meta_u64(c, "block_count");
  for (std::size_t b = 0; b < n; ++b) {
    f.blocks.push_back(c.array("block" + std::to_string(b)));
    for (std::size_t i = 0; i < f.blocks.back().numel(); ++i) {
      if (f.blocks.back().at(i) < 0.0) {
        throw UsageError("fisher checkpoint block " + std::to_string(b) + " has negative entries");
      }
    }
  }
  return f;
}

void check_config_hash(const Checkpoint& c, std::uint64_t expected, const std::string& path) {
  auto v = c.get_meta("config_hash");
  if (!v) return;
  if (*v != std::to_string(expected)) {
    warn("checkpoint '" + path + "' was produced under a different config (hash " + *v +
         ", current " + std::to_string(expected) + ")");
  }
}

}  // namespace genadapt
