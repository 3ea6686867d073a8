// Fleet simulator CLI: run one episode, benchmark a configuration matrix, or
// replay an episode log.
#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "amod/bench.hpp"
#include "amod/sim.hpp"

namespace {

amod::SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "fcfs") return amod::SchedulerKind::Fcfs;
  if (s == "df") return amod::SchedulerKind::Df;
  if (s == "lmm") return amod::SchedulerKind::Lmm;
  throw CLI::ValidationError("scheduler must be fcfs | df | lmm");
}

amod::EvolverKind parse_evolver(const std::string& s) {
  if (s == "manhattan") return amod::EvolverKind::Manhattan;
  if (s == "lmm") return amod::EvolverKind::Lmm;
  if (s == "monolithic") return amod::EvolverKind::Monolithic;
  throw CLI::ValidationError("evolver must be manhattan | lmm | monolithic");
}

void apply_gateway_flags(amod::EpisodeConfig& cfg, const std::string& script,
                         const std::string& live_url, const std::string& model,
                         const std::string& key_env) {
  if (!live_url.empty()) {
    cfg.gateway.mode = amod::GatewayMode::Live;
    cfg.gateway.base_url = live_url;
    if (!model.empty()) cfg.gateway.model = model;
    if (!key_env.empty()) cfg.gateway.api_key_env = key_env;
  } else if (!script.empty()) {
    cfg.gateway.mode = amod::GatewayMode::MockScript;
    cfg.gateway.script_path = script;
  } else {
    cfg.gateway.mode = amod::GatewayMode::MockBrain;
  }
}

void print_report(const amod::EpisodeReport& rep) {
  if (rep.metrics)
    std::printf("T_atc / T_stc / T_mtc: %.2f / %.2f / %.2f s\n", rep.metrics->t_atc,
                rep.metrics->t_stc, rep.metrics->t_mtc);
  else
    std::printf("no completed requests\n");
  std::printf("completed %d, pending %d, spawned %d over %ld steps (%d cycles)\n",
              rep.completed, rep.pending, rep.total_spawned, rep.steps, rep.cycles);
  std::printf("collision steps: %d, min pair distance: %.3f m\n", rep.collision_count,
              rep.min_pair_distance);
  std::printf("fallbacks: schedule %d, evolve %d, solver %d, reflection %d\n",
              rep.schedule_fallbacks, rep.evolve_fallbacks, rep.solver_fallbacks,
              rep.reflect_failures);
  double total_ocp = 0;
  for (double ms : rep.ocp_wall_ms) total_ocp += ms;
  if (!rep.ocp_wall_ms.empty())
    std::printf("mean per-cycle OCP time: %.2f ms\n", total_ocp / rep.ocp_wall_ms.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale autonomous mobility-on-demand simulator"};
  app.require_subcommand(1);

  std::string scenario_path, scheduler = "df", evolver = "manhattan", out_dir;
  std::string gateway_script, gateway_url, gateway_model, gateway_key_env;
  uint64_t seed = 0;
  long steps = 3000;
  bool frames = false, verbose_solver = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario JSON file");
    cmd->add_option("--seed", seed, "master seed (overrides the scenario)");
    cmd->add_option("--steps", steps, "step budget");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--gateway-script", gateway_script, "mock gateway script (JSON)");
    cmd->add_option("--gateway-url", gateway_url, "live gateway base URL");
    cmd->add_option("--gateway-model", gateway_model, "live gateway model name");
    cmd->add_option("--gateway-key-env", gateway_key_env,
                    "environment variable holding the API key");
    cmd->add_flag("--verbose-solver", verbose_solver, "emit per-iteration solver trace");
  };

  CLI::App* run = app.add_subcommand("run", "run one episode");
  add_common(run);
  run->add_option("--scheduler", scheduler, "fcfs | df | lmm");
  run->add_option("--evolver", evolver, "manhattan | lmm | monolithic");
  run->add_flag("--frames", frames, "write BEV PNG frames per cycle");

  std::string schedulers_csv = "fcfs,df", evolvers_csv = "manhattan", seeds_csv = "1,2,3,4";
  CLI::App* bench = app.add_subcommand("bench", "run a configuration matrix");
  add_common(bench);
  bench->add_option("--schedulers", schedulers_csv, "comma list: fcfs,df,lmm");
  bench->add_option("--evolvers", evolvers_csv, "comma list: manhattan,lmm,monolithic");
  bench->add_option("--seeds", seeds_csv, "comma list of master seeds");

  std::string log_path;
  CLI::App* replay = app.add_subcommand("replay", "recompute metrics from an episode log");
  replay->add_option("--log", log_path, "episode_log.jsonl path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (replay->parsed()) {
      auto sum = amod::replay_log(log_path);
      std::printf("replayed %d cycles, %d completed requests, %d collision steps\n",
                  sum.cycles, sum.completed, sum.collision_steps);
      if (sum.completed > 0)
        std::printf("T_atc / T_stc / T_mtc: %.2f / %.2f / %.2f s\n", sum.metrics.t_atc,
                    sum.metrics.t_stc, sum.metrics.t_mtc);
      return 0;
    }

    amod::EpisodeConfig cfg;
    if (!scenario_path.empty()) cfg.scenario = amod::load_scenario(scenario_path);
    if (seed != 0) cfg.scenario.master_seed = seed;
    cfg.step_budget = steps;
    cfg.out_dir = out_dir;
    cfg.verbose_solver = verbose_solver;
    apply_gateway_flags(cfg, gateway_script, gateway_url, gateway_model, gateway_key_env);

    if (run->parsed()) {
      cfg.scheduler = parse_scheduler(scheduler);
      cfg.evolver = parse_evolver(evolver);
      cfg.write_frames = frames;
      auto rep = amod::run_episode(cfg);
      print_report(rep);
      return 0;
    }

    amod::BenchSpec spec;
    spec.base = cfg;
    spec.out_dir = out_dir;
    auto split = [](const std::string& csv) {
      std::vector<std::string> out;
      std::string cur;
      for (char c : csv) {
        if (c == ',') {
          if (!cur.empty()) out.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      if (!cur.empty()) out.push_back(cur);
      return out;
    };
    spec.schedulers.clear();
    for (const auto& s : split(schedulers_csv)) spec.schedulers.push_back(parse_scheduler(s));
    spec.evolvers.clear();
    for (const auto& e : split(evolvers_csv)) spec.evolvers.push_back(parse_evolver(e));
    spec.seeds.clear();
    for (const auto& s : split(seeds_csv)) spec.seeds.push_back(std::stoull(s));
    amod::run_benchmark(spec);
    return 0;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
}
