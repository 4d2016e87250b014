#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "genadapt/adaptation.hpp"
#include "genadapt/checkpoint.hpp"
#include "genadapt/common.hpp"
#include "genadapt/config.hpp"
#include "genadapt/generator.hpp"
#include "genadapt/report.hpp"
#include "genadapt/tensor.hpp"
#include "genadapt/variations.hpp"
#include "genadapt/world.hpp"

using namespace genadapt;

namespace {

struct WarnCapture {
  std::vector<std::string> messages;
  WarnCapture() {
    set_warn_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarnCapture() { set_warn_handler(nullptr); }
};

// Scratch directory under the build tree, wiped on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::path("io_test_tmp") / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bits(double a, double b) {
  std::uint64_t ua = 0, ub = 0;
  std::memcpy(&ua, &a, sizeof ua);
  std::memcpy(&ub, &b, sizeof ub);
  return ua == ub;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (!same_bits(a.at(i), b.at(i))) return false;
  }
  return true;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

// Touches every field with a non-default value so a dropped or misparsed key
// breaks the round trip.
RunConfig full_config() {
  RunConfig c;
  c.world.seed = 7;
  c.world.data_dim = 5;
  c.world.embed_dim = 9;
  c.world.hidden_dim = 11;
  c.world.source = "painting";
  c.world.target = "sketch";
  c.world.mean_distance = 2.5;
  c.world.scale = 1.0 / 3.0;
  c.world.mean_offset = 0.125;
  c.pretrain.seed = 3;
  c.pretrain.iters = 17;
  c.pretrain.batch = 9;
  c.pretrain.lr = 0.0012345678901234567;
  c.pretrain.beta1 = 0.5;
  c.pretrain.beta2 = 0.75;
  c.pretrain.log_every = 25;
  c.stage1.opt.seed = 5;
  c.stage1.k = 3;
  c.stage1.opt.iters = 123;
  c.stage1.opt.lr = 0.031;
  c.stage1.opt.beta1 = 0.1;
  c.stage1.opt.beta2 = 0.2;
  c.stage1.opt.lambda_div = 2.5;
  c.stage1.epsilon = 1.75;
  c.stage1.opt.log_every = 7;
  c.stage2.seed = 9;
  c.stage2.mode = LossMode::kDmEwc;
  c.stage2.iters = 55;
  c.stage2.batch = 13;
  c.stage2.lr = 3e-4;
  c.stage2.beta1 = 0.3;
  c.stage2.beta2 = 0.4;
  c.stage2.lambda_cov = 12.5;
  c.stage2.lambda_ewc = 345.5;
  c.stage2.lambda_rel = 0.875;
  c.stage2.gram_normalize = false;
  c.stage2.fisher_samples = 37;
  c.stage2.eval_every = 11;
  c.eval.seed = 77;
  c.eval.k = 4;
  c.eval.samples = 111;
  c.eval.truncations = {0.25, 1.5};
  c.out_dir = "results/run1";
  return c;
}

}  // namespace

TEST_CASE("config parses empty text to defaults") {
  RunConfig c = parse_config_text("");
  CHECK(c == RunConfig{});
  CHECK(c.world.seed == 569);
  CHECK(c.world.mean_offset == 3.0);
  CHECK(c.world.source == "src");
  CHECK(c.world.target == "trg");
  CHECK(c.stage1.k == 6);
  CHECK(c.stage1.epsilon == 0.0);
  CHECK(c.eval.truncations == std::vector<double>{0.5, 0.7, 1.0});
  CHECK(c.out_dir == "out");

  RunConfig commented = parse_config_text("# nothing but comments\n\n   \n# more\n");
  CHECK(commented == RunConfig{});
}

TEST_CASE("config emit then parse is the identity") {
  RunConfig c = full_config();
  RunConfig back = parse_config_text(emit_config(c));
  CHECK(back == c);

  // Real-valued fields survive with every bit intact.
  CHECK(same_bits(back.pretrain.lr, c.pretrain.lr));
  CHECK(same_bits(back.world.scale, c.world.scale));
  CHECK(same_bits(back.eval.truncations[0], c.eval.truncations[0]));
  CHECK(back.stage2.mode == LossMode::kDmEwc);
  CHECK(back.stage2.gram_normalize == false);
  CHECK(back.out_dir == "results/run1");

  CHECK(config_hash(c) == config_hash(back));
  CHECK(config_hash(c) != config_hash(RunConfig{}));

  // Same round trip through a file.
  TempDir tmp("config");
  std::ofstream(tmp.file("cfg.txt")) << emit_config(c);
  CHECK(load_config(tmp.file("cfg.txt")) == c);
  CHECK_THROWS_AS(load_config(tmp.file("missing.txt")), UsageError);
}

TEST_CASE("config round-trips every loss mode") {
  for (LossMode m : {LossMode::kDir, LossMode::kDm, LossMode::kDmEwc, LossMode::kFull}) {
    RunConfig c;
    c.stage2.mode = m;
    CHECK(parse_config_text(emit_config(c)).stage2.mode == m);
  }
}

TEST_CASE("config rejects unknown names with their location") {
  CHECK_THROWS_WITH_AS(parse_config_text("[world]\nflavor = mint\n"),
                       "unknown key world.flavor (line 2)", UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[cake]\n"), "unknown section [cake] (line 1)",
                       UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\n"),
                       "key 'seed' appears before any section (line 1)", UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[world]\nwhat is this\n"),
                       "expected 'key = value', got 'what is this' (line 2)", UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[world\n"), "malformed section header '[world' (line 1)",
                       UsageError);
}

TEST_CASE("config reports typed value errors") {
  CHECK_THROWS_WITH_AS(parse_config_text("[stage2]\nlambda_ewc = banana\n"),
                       "stage2.lambda_ewc: expected a real number, got 'banana' (line 2)",
                       UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[world]\nseed = -3\n"),
                       "world.seed: expected an unsigned integer, got '-3' (line 2)", UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[stage2]\ngram_normalize = maybe\n"),
                       "stage2.gram_normalize: expected a boolean (on/off), got 'maybe' (line 2)",
                       UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[stage2]\nloss_mode = metric\n"),
                       "stage2.loss_mode: expected one of dir | dm | dm-ewc | full, got 'metric' "
                       "(line 2)",
                       UsageError);
  CHECK_THROWS_AS(parse_config_text("[eval]\ntruncations = 0.5,,1.0\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("[eval]\ntruncations =\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("[world]\nscale = 1e999\n"), UsageError);
}

TEST_CASE("config tolerates comments, spacing, and CRLF") {
  std::string text =
      "# leading comment\r\n"
      "[world]\r\n"
      "  scale\t=  0.5   # trailing comment\r\n"
      "\r\n"
      "[stage2]\r\n"
      "gram_normalize = off\r\n";
  RunConfig c = parse_config_text(text);
  CHECK(c.world.scale == 0.5);
  CHECK(c.stage2.gram_normalize == false);
  CHECK(c.world.seed == 569);
}

TEST_CASE("config validates cross-field constraints") {
  CHECK_THROWS_WITH_AS(parse_config_text("[world]\nembed_dim = 4\n[stage1]\nk = 5\n"),
                       "stage1.k exceeds world.embed_dim; orthogonal variations are infeasible",
                       UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[eval]\nk = 10\nsamples = 10\n"),
                       "eval.samples must exceed eval.k", UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[world]\nmean_offset = -1\n"),
                       "world.mean_offset must be >= 0", UsageError);
  CHECK_THROWS_WITH_AS(parse_config_text("[world]\ntarget = src\n"),
                       "world.source and world.target must be distinct non-empty names",
                       UsageError);
  CHECK_THROWS_AS(parse_config_text("[stage1]\nepsilon = -0.5\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("[output]\ndir =\n"), UsageError);
}

TEST_CASE("checkpoint text reproduces doubles bit for bit") {
  Checkpoint c;
  c.kind = "generator";
  c.set_meta("layer_count", "0");
  c.set_meta("note", "two words here");
  c.arrays.emplace_back("flat", Tensor({3}, {1.0 / 3.0, -0.0, 2.2250738585072014e-308}));
  c.arrays.emplace_back(
      "wide", Tensor({2, 5}, {1e300, 1.7976931348623157e308, 0.1, 3.141592653589793, -7.25, 1.0,
                              -1e-17, 42.0, 0.0, -2.5}));

  Checkpoint back = parse_checkpoint_text(render_checkpoint(c));
  CHECK(back.kind == "generator");
  CHECK(back.get_meta("note") == std::string("two words here"));
  REQUIRE(back.arrays.size() == 2);
  CHECK(back.arrays[0].first == "flat");
  CHECK(same_bits(back.array("flat"), c.array("flat")));
  CHECK(same_bits(back.array("wide"), c.array("wide")));
  CHECK(std::signbit(back.array("flat").at(1)));

  // Rendering is a pure function of the content.
  CHECK(render_checkpoint(c) == render_checkpoint(back));
}

TEST_CASE("checkpoint files round-trip all four payload kinds") {
  TempDir tmp("ckpt");
  World w = make_two_domain_world(3, 4, 5, 6, "src", "trg", 2.0, 0.5, 1.0);

  SUBCASE("world") {
    save_checkpoint(to_checkpoint(w), tmp.file("w.ckpt"));
    World back = world_from_checkpoint(load_checkpoint(tmp.file("w.ckpt"), "world"));
    CHECK(back.seed == w.seed);
    CHECK(back.data_dim == w.data_dim);
    CHECK(back.embed_dim == w.embed_dim);
    CHECK(back.hidden_dim == w.hidden_dim);
    CHECK(same_bits(back.w1, w.w1));
    CHECK(same_bits(back.b1, w.b1));
    CHECK(same_bits(back.w2, w.w2));
    CHECK(same_bits(back.b2, w.b2));
    REQUIRE(back.domains.size() == w.domains.size());
    for (std::size_t i = 0; i < w.domains.size(); ++i) {
      CHECK(back.domains[i].name == w.domains[i].name);
      CHECK(same_bits(back.domains[i].mean, w.domains[i].mean));
      CHECK(same_bits(back.domains[i].scale, w.domains[i].scale));
    }
  }

  SUBCASE("generator") {
    GeneratorParams g = init_generator(7, 4);
    save_checkpoint(to_checkpoint(g), tmp.file("g.ckpt"));
    GeneratorParams back = generator_from_checkpoint(load_checkpoint(tmp.file("g.ckpt")));
    REQUIRE(back.layers().size() == g.layers().size());
    for (std::size_t l = 0; l < g.layers().size(); ++l) {
      CHECK(back.layers()[l].name == g.layers()[l].name);
      CHECK(same_bits(back.layers()[l].weight, g.layers()[l].weight));
      CHECK(same_bits(back.layers()[l].bias, g.layers()[l].bias));
    }
  }

  SUBCASE("variations") {
    VariationSet v = make_variation_set(Tensor({4}, {1.0, 0.0, 2.0, -1.0}),
                                        Rng(5).normal_tensor({3, 4}), 1.25);
    save_checkpoint(to_checkpoint(v), tmp.file("v.ckpt"));
    VariationSet back = variations_from_checkpoint(load_checkpoint(tmp.file("v.ckpt")));
    CHECK(same_bits(back.target, v.target));
    CHECK(same_bits(back.z, v.z));
    CHECK(back.epsilon == v.epsilon);
  }

  SUBCASE("fisher") {
    GeneratorParams g = init_generator(7, 4);
    FisherDiag f = estimate_fisher(w, g, encode_text(w, "src"), 8, 21);
    save_checkpoint(to_checkpoint(f), tmp.file("f.ckpt"));
    FisherDiag back = fisher_from_checkpoint(load_checkpoint(tmp.file("f.ckpt"), "fisher"));
    CHECK(back.samples == f.samples);
    REQUIRE(back.blocks.size() == f.blocks.size());
    for (std::size_t b = 0; b < f.blocks.size(); ++b) {
      CHECK(same_bits(back.blocks[b], f.blocks[b]));
    }
  }

  SUBCASE("saving twice writes identical bytes") {
    save_checkpoint(to_checkpoint(w), tmp.file("a.ckpt"));
    save_checkpoint(to_checkpoint(w), tmp.file("b.ckpt"));
    CHECK(slurp(tmp.file("a.ckpt")) == slurp(tmp.file("b.ckpt")));
  }
}

TEST_CASE("checkpoint rejects damaged or mismatched input") {
  TempDir tmp("ckpt_bad");
  World w = make_two_domain_world(3, 4, 5, 6, "src", "trg", 2.0, 0.5, 1.0);
  std::string good = render_checkpoint(to_checkpoint(w));

  CHECK_THROWS_WITH_AS(parse_checkpoint_text("hello\n"), "not a checkpoint: bad magic line",
                       UsageError);

  // Cut inside the first array's values.
  std::size_t arr = good.find("array ");
  REQUIRE(arr != std::string::npos);
  std::string cut = good.substr(0, good.find('\n', arr + 40));
  CHECK_THROWS_AS(parse_checkpoint_text(cut), UsageError);
  try {
    parse_checkpoint_text(cut);
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("truncated inside array") != std::string::npos);
  }

  // Strip the end marker.
  std::string no_end = good.substr(0, good.rfind("end\n"));
  CHECK_THROWS_WITH_AS(parse_checkpoint_text(no_end), "checkpoint truncated: missing end marker",
                       UsageError);

  // An unrecognized tag ahead of the end marker is an error.
  std::string junk = good;
  junk.insert(junk.rfind("end\n"), "mystery line\n");
  CHECK_THROWS_AS(parse_checkpoint_text(junk), UsageError);

  Checkpoint bad_kind;
  bad_kind.kind = "soup";
  CHECK_THROWS_WITH_AS(render_checkpoint(bad_kind), "checkpoint kind 'soup' is not valid",
                       UsageError);

  CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.ckpt")), UsageError);

  // Kind expectations, both at load and at conversion.
  GeneratorParams g = init_generator(7, 4);
  save_checkpoint(to_checkpoint(g), tmp.file("g.ckpt"));
  CHECK_THROWS_AS(load_checkpoint(tmp.file("g.ckpt"), "world"), UsageError);
  try {
    load_checkpoint(tmp.file("g.ckpt"), "world");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("has kind 'generator', expected 'world'") !=
          std::string::npos);
  }
  CHECK_THROWS_AS(world_from_checkpoint(to_checkpoint(g)), UsageError);

  Checkpoint neg;
  neg.kind = "fisher";
  neg.set_meta("samples", "4");
  neg.set_meta("block_count", "1");
  neg.arrays.emplace_back("block0", Tensor({2}, {0.5, -1.0}));
  CHECK_THROWS_AS(fisher_from_checkpoint(neg), UsageError);
}

TEST_CASE("checkpoint config-hash mismatch warns and never throws") {
  WarnCapture capture;
  Checkpoint c;
  c.kind = "world";
  check_config_hash(c, 456, "p.ckpt");  // no hash recorded: silent
  CHECK(capture.messages.empty());

  c.set_meta("config_hash", "123");
  check_config_hash(c, 456, "p.ckpt");
  REQUIRE(capture.messages.size() == 1);
  CHECK(capture.messages[0].find("different config") != std::string::npos);
  CHECK(capture.messages[0].find("p.ckpt") != std::string::npos);

  check_config_hash(c, 123, "p.ckpt");  // matching hash: silent
  CHECK(capture.messages.size() == 1);
}

TEST_CASE("metrics csv round-trips values and absent cells") {
  std::vector<MetricsRow> rows(3);
  rows[0].iter = 0;
  rows[0].loss_dir = 1.0 / 3.0;
  rows[0].loss_total = 0.1;
  rows[1].iter = 100;
  rows[1].sse = 42.5;
  rows[1].diversity_avg = 1.25;
  rows[1].diversity_all = 0.75;
  rows[1].frechet = 1e-9;
  rows[1].precision = 0.5;
  rows[1].recall = 1.0;
  rows[2].iter = 200;

  std::string text = render_metrics_csv(rows);
  std::vector<MetricsRow> back = parse_metrics_csv(text);
  REQUIRE(back.size() == 3);
  CHECK(back[0].iter == 0);
  REQUIRE(back[0].loss_dir.has_value());
  CHECK(same_bits(*back[0].loss_dir, 1.0 / 3.0));
  CHECK(same_bits(*back[0].loss_total, 0.1));
  CHECK_FALSE(back[0].sse.has_value());
  CHECK_FALSE(back[0].loss_dm.has_value());
  CHECK(same_bits(*back[1].frechet, 1e-9));
  CHECK(same_bits(*back[1].precision, 0.5));
  CHECK_FALSE(back[1].loss_dir.has_value());
  CHECK(back[2].iter == 200);
  CHECK_FALSE(back[2].loss_total.has_value());
  CHECK_FALSE(back[2].recall.has_value());

  // Fully absent rows still carry all 11 value columns.
  CHECK(count_occurrences(text, "\n200,,,,,,,,,,,\n") == 1);

  TempDir tmp("csv");
  write_metrics_csv(rows, tmp.file("m.csv"));
  CHECK(parse_metrics_csv(slurp(tmp.file("m.csv"))).size() == 3);
  CHECK(slurp(tmp.file("m.csv")) == text);
}

TEST_CASE("metrics csv edge cases") {
  std::vector<MetricsRow> one(1);
  one[0].iter = 7;
  std::string text = render_metrics_csv(one);
  CHECK(count_occurrences(text, "\n") == 2);  // header plus one record

  CHECK_THROWS_WITH_AS(render_metrics_csv({}), "metrics CSV needs at least one row", UsageError);
  CHECK_THROWS_WITH_AS(parse_metrics_csv("bogus\n"), "metrics CSV header mismatch", UsageError);

  std::string extra = text + "0,1,2,3,4,5,6,7,8,9,10,11,12\n";
  CHECK_THROWS_AS(parse_metrics_csv(extra), UsageError);
}

TEST_CASE("svg chart renders one polyline per series in input order") {
  std::vector<Series> series{
      {"dm", {{0.0, 1.0}, {1.0, 0.5}, {2.0, 0.25}}},
      {"dir", {{0.0, 1.5}, {1.0, 1.0}, {2.0, 0.9}, {3.0, 0.8}}},
  };
  std::string svg = render_svg_chart(series);
  CHECK(count_occurrences(svg, "<polyline") == 2);
  CHECK(count_occurrences(svg, "</svg>") == 1);

  std::size_t dm = svg.find(">dm</text>");
  std::size_t dir = svg.find(">dir</text>");
  REQUIRE(dm != std::string::npos);
  REQUIRE(dir != std::string::npos);
  CHECK(dm < dir);

  // Same input, same bytes; and the file write preserves them.
  CHECK(render_svg_chart(series) == svg);
  TempDir tmp("svg");
  write_svg_chart(series, tmp.file("a.svg"));
  write_svg_chart(series, tmp.file("b.svg"));
  CHECK(slurp(tmp.file("a.svg")) == svg);
  CHECK(slurp(tmp.file("a.svg")) == slurp(tmp.file("b.svg")));
}

TEST_CASE("svg chart escaping, degenerate ranges, and rejects") {
  std::string svg = render_svg_chart({{"a<b&c", {{0.0, 0.0}, {1.0, 1.0}}}});
  CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
  CHECK(svg.find("a<b&c") == std::string::npos);

  // A single point pads both ranges instead of dividing by zero.
  std::string flat = render_svg_chart({{"p", {{2.0, 5.0}}}});
  CHECK(count_occurrences(flat, "<polyline") == 1);

  CHECK_THROWS_WITH_AS(render_svg_chart({}), "svg chart needs at least one series", UsageError);
  CHECK_THROWS_WITH_AS(render_svg_chart({{"void", {}}}), "svg chart series 'void' is empty",
                       UsageError);
  double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(render_svg_chart({{"bad", {{0.0, inf}}}}),
                       "svg chart series 'bad' has non-finite values", UsageError);
}
