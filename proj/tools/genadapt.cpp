// Command-line driver: builds the synthetic world, pretrains the source
// generator, learns semantic variations, adapts the generator under the
// selected loss mode and evaluates the result.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "genadapt/checkpoint.hpp"
#include "genadapt/common.hpp"
#include "genadapt/config.hpp"
#include "genadapt/pipeline.hpp"

namespace {

using namespace genadapt;

struct CliArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string loss_mode = "full";
};

void add_common(CLI::App* cmd, CliArgs* args, bool with_seed) {
  cmd->add_option("--config", args->config_path, "config file (omit for built-in defaults)");
  cmd->add_option("--out", args->out_dir, "run directory (overrides config)");
  if (with_seed) {
    cmd->add_option("--seed", args->seed, "seed override for this subcommand")
        ->each([args](const std::string&) { args->seed_set = true; });
  }
}

RunConfig effective_config(const CliArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  return cfg;
}

void print_eval_rows(const std::vector<EvalRow>& rows) {
  std::printf("%-14s %-12s %s\n", "metric", "truncation", "value");
  for (const EvalRow& r : rows) {
    std::printf("%-14s %-12g %.6g\n", r.metric.c_str(), r.truncation, r.value);
  }
}

int dispatch(const std::string& cmd, const CliArgs& args) {
  if (cmd == "gradcheck") {
    std::uint64_t seed = args.seed_set ? args.seed : 21;
    GradSuiteResult res = run_gradient_suite(seed, 20, 1e-5, 1e-4);
    for (const GradCase& c : res.cases) {
      std::printf("%-5s max rel error %.3e  worst %s\n", c.loss.c_str(), c.max_rel_error,
                  c.worst.c_str());
    }
    std::printf("overall max rel error %.3e: %s\n", res.max_rel_error,
                res.pass ? "PASS" : "FAIL");
    return res.pass ? 0 : 2;
  }

  RunConfig cfg = effective_config(args);
  if (args.seed_set) {
    if (cmd == "world") cfg.world.seed = args.seed;
    if (cmd == "pretrain") cfg.pretrain.seed = args.seed;
    if (cmd == "variations") cfg.stage1.opt.seed = args.seed;
    if (cmd == "adapt" || cmd == "ablation" || cmd == "full-run") cfg.stage2.seed = args.seed;
    if (cmd == "eval") cfg.eval.seed = args.seed;
  }
  RunPaths paths(cfg.out_dir);

  if (cmd == "world") {
    World w = run_world(cfg, paths);
    std::cout << "wrote " << paths.world << " (data_dim=" << w.data_dim
              << ", embed_dim=" << w.embed_dim << ", domains=" << w.domains.size() << ")\n";
  } else if (cmd == "pretrain") {
    run_pretrain(cfg, paths);
    Checkpoint c = load_checkpoint(paths.g_src, "generator");
    std::cout << "wrote " << paths.g_src;
    if (auto mmd = c.get_meta("final_mmd")) std::cout << " (final mmd2 " << *mmd << ")";
    std::cout << "\n";
  } else if (cmd == "variations") {
    VariationSet vs = run_variations(cfg, paths);
    std::cout << "wrote " << paths.variations << " (" << vs.count()
              << " variations, epsilon=" << vs.epsilon << ")\n";
  } else if (cmd == "adapt") {
    LossMode mode = parse_loss_mode(args.loss_mode);
    AdaptResult res = run_adapt(cfg, paths, mode);
    std::cout << "wrote " << paths.g_trg(mode) << " (final total loss "
              << res.loss_log.back().total << ", final sse " << res.metric_log.back().sse
              << ")\n";
  } else if (cmd == "eval") {
    LossMode mode = parse_loss_mode(args.loss_mode);
    std::vector<EvalRow> rows = run_eval(cfg, paths, mode);
    print_eval_rows(rows);
    std::cout << "wrote " << paths.eval_csv(mode) << "\n";
  } else if (cmd == "ablation") {
    std::vector<AblationArm> arms = run_ablation(cfg, paths);
    std::printf("%-7s %-12s %-14s %-14s\n", "mode", "final_sse", "diversity_avg",
                "diversity_all");
    for (const AblationArm& a : arms) {
      std::printf("%-7s %-12.6g %-14.6g %-14.6g\n", loss_mode_name(a.mode),
                  a.result.metric_log.back().sse, a.diversity.avg, a.diversity.all);
    }
    std::cout << "wrote " << paths.ablation_summary << "\n";
  } else if (cmd == "report") {
    run_report(paths);
    std::cout << "wrote " << paths.report_svg << "\n";
  } else if (cmd == "full-run") {
    run_fullrun(cfg, paths);
    std::cout << "wrote " << paths.dir << " (ablation summary, checkpoints, report)\n";
  } else {
    throw UsageError("unknown subcommand '" + cmd + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-shot generator adaptation on a synthetic benchmark"};
  app.require_subcommand(1);

  CliArgs args;
  const char* with_mode[] = {"adapt", "eval"};
  const char* plain[] = {"world", "pretrain", "variations", "ablation", "report", "full-run",
                         "gradcheck"};
  for (const char* name : with_mode) {
    CLI::App* cmd = app.add_subcommand(name);
    add_common(cmd, &args, true);
    cmd->add_option("--loss-mode", args.loss_mode, "dir | dm | dm-ewc | full");
  }
  for (const char* name : plain) {
    add_common(app.add_subcommand(name), &args, std::string(name) != "report");
  }

  try {
    app.parse(argc, argv);
    return dispatch(app.get_subcommands().front()->get_name(), args);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const genadapt::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const genadapt::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
