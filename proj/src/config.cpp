#include "genadapt/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "genadapt/common.hpp"

namespace genadapt {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void typed_error(const std::string& key, const char* type, const std::string& value,
                              int line) {
  throw UsageError(key + ": expected " + type + ", got '" + value + "' (line " +
                   std::to_string(line) + ")");
}

double parse_real(const std::string& key, const std::string& value, int line) {
  const char* c = value.c_str();
  char* end = nullptr;
  double v = std::strtod(c, &end);
  if (end == c || *end != '\0' || !std::isfinite(v)) typed_error(key, "a real number", value, line);
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value, int line) {
  if (value.empty() || value[0] == '-') typed_error(key, "an unsigned integer", value, line);
  const char* c = value.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(c, &end, 10);
  if (end == c || *end != '\0') typed_error(key, "an unsigned integer", value, line);
  return static_cast<std::uint64_t>(v);
}

std::int64_t parse_i64(const std::string& key, const std::string& value, int line) {
  const char* c = value.c_str();
  char* end = nullptr;
  long long v = std::strtoll(c, &end, 10);
  if (end == c || *end != '\0') typed_error(key, "an integer", value, line);
  return static_cast<std::int64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  typed_error(key, "a boolean (on/off)", value, line);
}

std::vector<double> parse_real_list(const std::string& key, const std::string& value, int line) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) typed_error(key, "a comma-separated list of reals", value, line);
    out.push_back(parse_real(key, item, line));
  }
  if (out.empty()) typed_error(key, "a comma-separated list of reals", value, line);
  return out;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void validate_config(const RunConfig& c) {
  if (c.world.data_dim < 1 || c.world.embed_dim < 1 || c.world.hidden_dim < 1) {
    throw UsageError("world dimensions must be >= 1");
  }
  if (c.world.source.empty() || c.world.target.empty() || c.world.source == c.world.target) {
    throw UsageError("world.source and world.target must be distinct non-empty names");
  }
  if (!(c.world.mean_distance > 0.0)) throw UsageError("world.mean_distance must be > 0");
  if (!(c.world.scale > 0.0)) throw UsageError("world.scale must be > 0");
  if (c.world.mean_offset < 0.0) throw UsageError("world.mean_offset must be >= 0");

  auto check_betas = [](const char* what, double b1, double b2) {
    if (!(b1 >= 0.0 && b1 < 1.0 && b2 >= 0.0 && b2 < 1.0)) {
      throw UsageError(std::string(what) + " betas must lie in [0, 1)");
    }
  };
  if (c.pretrain.iters < 0) throw UsageError("pretrain.iters must be >= 0");
  if (c.pretrain.batch < 2) throw UsageError("pretrain.batch must be >= 2");
  if (!(c.pretrain.lr > 0.0)) throw UsageError("pretrain.lr must be > 0");
  if (c.pretrain.log_every < 1) throw UsageError("pretrain.log_every must be >= 1");
  check_betas("pretrain", c.pretrain.beta1, c.pretrain.beta2);

  if (c.stage1.k < 1) throw UsageError("stage1.k must be >= 1");
  if (c.stage1.k > c.world.embed_dim) {
    throw UsageError("stage1.k exceeds world.embed_dim; orthogonal variations are infeasible");
  }
  if (c.stage1.epsilon < 0.0) throw UsageError("stage1.epsilon must be >= 0 (0 = target norm)");
  if (c.stage1.opt.iters < 0) throw UsageError("stage1.iters must be >= 0");
  if (!(c.stage1.opt.lr > 0.0)) throw UsageError("stage1.lr must be > 0");
  if (c.stage1.opt.lambda_div < 0.0) throw UsageError("stage1.lambda_div must be >= 0");
  if (c.stage1.opt.log_every < 1) throw UsageError("stage1.log_every must be >= 1");
  check_betas("stage1", c.stage1.opt.beta1, c.stage1.opt.beta2);

  validate(c.stage2);
  if (!(c.stage2.lr > 0.0)) throw UsageError("stage2.lr must be > 0");
  check_betas("stage2", c.stage2.beta1, c.stage2.beta2);

  if (c.eval.k < 1) throw UsageError("eval.k must be >= 1");
  if (c.eval.samples <= c.eval.k) throw UsageError("eval.samples must exceed eval.k");
  if (c.eval.samples < 2) throw UsageError("eval.samples must be >= 2");
  if (c.eval.truncations.empty()) throw UsageError("eval.truncations must be nonempty");
  for (double t : c.eval.truncations) {
    if (!(t > 0.0)) throw UsageError("eval.truncations entries must be > 0");
  }
  if (c.out_dir.empty()) throw UsageError("output.dir must be nonempty");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw UsageError("malformed section header '" + line + "' (line " +
                         std::to_string(lineno) + ")");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "world" && section != "pretrain" && section != "stage1" &&
          section != "stage2" && section != "eval" && section != "output") {
        throw UsageError("unknown section [" + section + "] (line " + std::to_string(lineno) +
                         ")");
      }
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("expected 'key = value', got '" + line + "' (line " +
                       std::to_string(lineno) + ")");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw UsageError("key '" + key + "' appears before any section (line " +
                       std::to_string(lineno) + ")");
    }
    std::string path = section + "." + key;
    bool known = true;

    if (section == "world") {
      if (key == "seed") cfg.world.seed = parse_u64(path, value, lineno);
      else if (key == "data_dim") cfg.world.data_dim = parse_u64(path, value, lineno);
      else if (key == "embed_dim") cfg.world.embed_dim = parse_u64(path, value, lineno);
      else if (key == "hidden_dim") cfg.world.hidden_dim = parse_u64(path, value, lineno);
      else if (key == "source") cfg.world.source = value;
      else if (key == "target") cfg.world.target = value;
      else if (key == "mean_distance") cfg.world.mean_distance = parse_real(path, value, lineno);
      else if (key == "scale") cfg.world.scale = parse_real(path, value, lineno);
      else if (key == "mean_offset") cfg.world.mean_offset = parse_real(path, value, lineno);
      else known = false;
    } else if (section == "pretrain") {
      if (key == "seed") cfg.pretrain.seed = parse_u64(path, value, lineno);
      else if (key == "iters") cfg.pretrain.iters = parse_i64(path, value, lineno);
      else if (key == "batch") cfg.pretrain.batch = parse_u64(path, value, lineno);
      else if (key == "lr") cfg.pretrain.lr = parse_real(path, value, lineno);
      else if (key == "beta1") cfg.pretrain.beta1 = parse_real(path, value, lineno);
      else if (key == "beta2") cfg.pretrain.beta2 = parse_real(path, value, lineno);
      else if (key == "log_every") cfg.pretrain.log_every = parse_i64(path, value, lineno);
      else known = false;
    } else if (section == "stage1") {
      if (key == "seed") cfg.stage1.opt.seed = parse_u64(path, value, lineno);
      else if (key == "k") cfg.stage1.k = parse_u64(path, value, lineno);
      else if (key == "iters") cfg.stage1.opt.iters = parse_i64(path, value, lineno);
      else if (key == "lr") cfg.stage1.opt.lr = parse_real(path, value, lineno);
      else if (key == "beta1") cfg.stage1.opt.beta1 = parse_real(path, value, lineno);
      else if (key == "beta2") cfg.stage1.opt.beta2 = parse_real(path, value, lineno);
      else if (key == "lambda_div") cfg.stage1.opt.lambda_div = parse_real(path, value, lineno);
      else if (key == "epsilon") cfg.stage1.epsilon = parse_real(path, value, lineno);
      else if (key == "log_every") cfg.stage1.opt.log_every = parse_i64(path, value, lineno);
      else known = false;
    } else if (section == "stage2") {
      if (key == "seed") cfg.stage2.seed = parse_u64(path, value, lineno);
      else if (key == "loss_mode") {
        try {
          cfg.stage2.mode = parse_loss_mode(value);
        } catch (UsageError&) {
          typed_error(path, "one of dir | dm | dm-ewc | full", value, lineno);
        }
      } else if (key == "iters") cfg.stage2.iters = parse_i64(path, value, lineno);
      else if (key == "batch") cfg.stage2.batch = parse_u64(path, value, lineno);
      else if (key == "lr") cfg.stage2.lr = parse_real(path, value, lineno);
      else if (key == "beta1") cfg.stage2.beta1 = parse_real(path, value, lineno);
      else if (key == "beta2") cfg.stage2.beta2 = parse_real(path, value, lineno);
      else if (key == "lambda_cov") cfg.stage2.lambda_cov = parse_real(path, value, lineno);
      else if (key == "lambda_ewc") cfg.stage2.lambda_ewc = parse_real(path, value, lineno);
      else if (key == "lambda_rel") cfg.stage2.lambda_rel = parse_real(path, value, lineno);
      else if (key == "gram_normalize") cfg.stage2.gram_normalize = parse_bool(path, value, lineno);
      else if (key == "fisher_samples") cfg.stage2.fisher_samples = parse_u64(path, value, lineno);
      else if (key == "eval_every") cfg.stage2.eval_every = parse_i64(path, value, lineno);
      else known = false;
    } else if (section == "eval") {
      if (key == "seed") cfg.eval.seed = parse_u64(path, value, lineno);
      else if (key == "k") cfg.eval.k = parse_u64(path, value, lineno);
      else if (key == "samples") cfg.eval.samples = parse_u64(path, value, lineno);
      else if (key == "truncations") cfg.eval.truncations = parse_real_list(path, value, lineno);
      else known = false;
    } else if (section == "output") {
      if (key == "dir") cfg.out_dir = value;
      else known = false;
    }
    if (!known) {
      throw UsageError("unknown key " + path + " (line " + std::to_string(lineno) + ")");
    }
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[world]\n";
  o << "seed = " << c.world.seed << "\n";
  o << "data_dim = " << c.world.data_dim << "\n";
  o << "embed_dim = " << c.world.embed_dim << "\n";
  o << "hidden_dim = " << c.world.hidden_dim << "\n";
  o << "source = " << c.world.source << "\n";
  o << "target = " << c.world.target << "\n";
  o << "mean_distance = " << fmt_real(c.world.mean_distance) << "\n";
  o << "scale = " << fmt_real(c.world.scale) << "\n";
  o << "mean_offset = " << fmt_real(c.world.mean_offset) << "\n";
  o << "\n[pretrain]\n";
  o << "seed = " << c.pretrain.seed << "\n";
  o << "iters = " << c.pretrain.iters << "\n";
  o << "batch = " << c.pretrain.batch << "\n";
  o << "lr = " << fmt_real(c.pretrain.lr) << "\n";
  o << "beta1 = " << fmt_real(c.pretrain.beta1) << "\n";
  o << "beta2 = " << fmt_real(c.pretrain.beta2) << "\n";
  o << "log_every = " << c.pretrain.log_every << "\n";
  o << "\n[stage1]\n";
  o << "seed = " << c.stage1.opt.seed << "\n";
  o << "k = " << c.stage1.k << "\n";
  o << "iters = " << c.stage1.opt.iters << "\n";
  o << "lr = " << fmt_real(c.stage1.opt.lr) << "\n";
  o << "beta1 = " << fmt_real(c.stage1.opt.beta1) << "\n";
  o << "beta2 = " << fmt_real(c.stage1.opt.beta2) << "\n";
  o << "lambda_div = " << fmt_real(c.stage1.opt.lambda_div) << "\n";
  o << "epsilon = " << fmt_real(c.stage1.epsilon) << "\n";
  o << "log_every = " << c.stage1.opt.log_every << "\n";
  o << "\n[stage2]\n";
  o << "seed = " << c.stage2.seed << "\n";
  o << "loss_mode = " << loss_mode_name(c.stage2.mode) << "\n";
  o << "iters = " << c.stage2.iters << "\n";
  o << "batch = " << c.stage2.batch << "\n";
  o << "lr = " << fmt_real(c.stage2.lr) << "\n";
  o << "beta1 = " << fmt_real(c.stage2.beta1) << "\n";
  o << "beta2 = " << fmt_real(c.stage2.beta2) << "\n";
  o << "lambda_cov = " << fmt_real(c.stage2.lambda_cov) << "\n";
  o << "lambda_ewc = " << fmt_real(c.stage2.lambda_ewc) << "\n";
  o << "lambda_rel = " << fmt_real(c.stage2.lambda_rel) << "\n";
  o << "gram_normalize = " << (c.stage2.gram_normalize ? "on" : "off") << "\n";
  o << "fisher_samples = " << c.stage2.fisher_samples << "\n";
  o << "eval_every = " << c.stage2.eval_every << "\n";
  o << "\n[eval]\n";
  o << "seed = " << c.eval.seed << "\n";
  o << "k = " << c.eval.k << "\n";
  o << "samples = " << c.eval.samples << "\n";
  o << "truncations = ";
  for (std::size_t i = 0; i < c.eval.truncations.size(); ++i) {
    if (i) o << ",";
    o << fmt_real(c.eval.truncations[i]);
  }
  o << "\n";
  o << "\n[output]\n";
  o << "dir = " << c.out_dir << "\n";
  return o.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::string s = emit_config(cfg);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return emit_config(a) == emit_config(b);
}

}  // namespace genadapt
