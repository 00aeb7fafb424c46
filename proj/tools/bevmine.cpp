// Command-line driver: generate | mine | eval | dgp | pipeline.
// Every failure exits nonzero with a one-line JSON error object on stderr.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bevmine/cli.hpp"
#include "bevmine/errors.hpp"
#include "bevmine/io.hpp"

namespace {

using bevmine::io::RunConfig;

std::string error_json(const std::string& code, const std::string& message) {
  return nlohmann::ordered_json{
      {"error", {{"code", code}, {"message", message}}}}.dump();
}

/// Options shared by all subcommands: the config file and the mining/seed
/// flag overrides. Flags win over config-file values.
struct CommonOpts {
  std::string config;
  double theta_c = 0.0;
  double theta_u = 0.0;
  double theta_h = 0.0;
  int t_max = 0;
  std::uint64_t seed = 0;
  CLI::Option* o_theta_c = nullptr;
  CLI::Option* o_theta_u = nullptr;
  CLI::Option* o_theta_h = nullptr;
  CLI::Option* o_t_max = nullptr;
  CLI::Option* o_seed = nullptr;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config, "JSON config file");
    o_theta_c = sub->add_option("--theta-c", theta_c,
                                "2D selection score threshold");
    o_theta_u = sub->add_option("--theta-u", theta_u,
                                "uncertainty seeding threshold");
    o_theta_h = sub->add_option("--theta-h", theta_h,
                                "mining BEV residual threshold (m)");
    o_t_max = sub->add_option("--t-max", t_max, "max mining iterations");
    o_seed = sub->add_option("--seed", seed, "scene generation seed");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{}
                                   : bevmine::io::load_run_config(config);
    if (*o_theta_c) cfg.mining.theta_c = theta_c;
    if (*o_theta_u) cfg.mining.theta_u = theta_u;
    if (*o_theta_h) cfg.mining.theta_h = theta_h;
    if (*o_t_max) cfg.mining.t_max = t_max;
    if (*o_seed) cfg.scene.seed = seed;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic BEV pseudo-label mining pipeline"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("generate", "write a scene JSONL file");
  CommonOpts gen_opts;
  gen_opts.attach(gen);
  std::string gen_out;
  gen->add_option("--out", gen_out, "output scene file")->required();

  CLI::App* mine = app.add_subcommand("mine", "mine pseudo-labels per scene");
  CommonOpts mine_opts;
  mine_opts.attach(mine);
  std::string mine_out;
  std::vector<std::string> mine_scenes;
  mine->add_option("--out", mine_out, "output report JSON")->required();
  mine->add_option("scenes", mine_scenes, "scene JSONL files")->required();

  CLI::App* ev = app.add_subcommand("eval", "metrics for a scene/report pair");
  CommonOpts ev_opts;
  ev_opts.attach(ev);
  std::string ev_scene, ev_report, ev_out;
  std::size_t ev_index = 0;
  double ev_good = 1.0;
  ev->add_option("--scene", ev_scene, "scene JSONL file")->required();
  ev->add_option("--report", ev_report, "mining report JSON")->required();
  ev->add_option("--out", ev_out, "output CSV")->required();
  ev->add_option("--scene-index", ev_index,
                 "index of this scene in the report (default 0)");
  ev->add_option("--good-threshold", ev_good,
                 "BEV displacement defining a good pseudo-label (m)");

  CLI::App* dgp = app.add_subcommand("dgp", "toy gradient-conflict runs");
  CommonOpts dgp_opts;
  dgp_opts.attach(dgp);
  std::string dgp_out;
  dgp->add_option("--out", dgp_out, "output trace CSV")->required();

  CLI::App* pipe =
      app.add_subcommand("pipeline", "generate + mine + eval (+ dgp)");
  CommonOpts pipe_opts;
  pipe_opts.attach(pipe);
  std::string pipe_outdir;
  pipe->add_option("--out-dir", pipe_outdir,
                   "output directory (overrides config output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json("UsageError", e.what()) << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(gen)) {
      bevmine::cli::cmd_generate(gen_opts.resolve(), gen_out);
    } else if (app.got_subcommand(mine)) {
      bevmine::cli::cmd_mine(mine_scenes, mine_opts.resolve(), mine_out);
    } else if (app.got_subcommand(ev)) {
      ev_opts.resolve();  // surfaces config errors even though eval reads files
      bevmine::cli::cmd_eval(ev_scene, ev_report, ev_out, ev_index, ev_good);
    } else if (app.got_subcommand(dgp)) {
      bevmine::cli::cmd_dgp(dgp_opts.resolve(), dgp_out);
    } else if (app.got_subcommand(pipe)) {
      bevmine::io::RunConfig cfg = pipe_opts.resolve();
      if (!pipe_outdir.empty()) cfg.output_dir = pipe_outdir;
      bevmine::cli::cmd_pipeline(cfg);
    }
  } catch (const bevmine::Error& e) {
    std::cerr << error_json(e.code(), e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_json("Internal", e.what()) << "\n";
    return 1;
  }
  return 0;
}
