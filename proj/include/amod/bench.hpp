#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amod/plots.hpp"
#include "amod/sim.hpp"

namespace amod {

struct BenchSpec {
  EpisodeConfig base;                   // template; seed/policy fields overridden
  std::vector<SchedulerKind> schedulers = {SchedulerKind::Fcfs, SchedulerKind::Df};
  std::vector<EvolverKind> evolvers = {EvolverKind::Manhattan};
  std::vector<uint64_t> seeds = {1, 2, 3, 4};
  std::string out_dir;
};

struct BenchRun {
  SchedulerKind scheduler;
  EvolverKind evolver;
  uint64_t seed = 0;
  EpisodeReport report;
};

struct BenchResult {
  std::vector<BenchRun> runs;

  const BenchRun* find(SchedulerKind s, EvolverKind e, uint64_t seed) const {
    for (const auto& r : runs)
      if (r.scheduler == s && r.evolver == e && r.seed == seed) return &r;
    return nullptr;
  }
};

// Runs the full configuration matrix with shared seeds, prints the
// per-episode metric table, and emits machine-readable results plus the OCP
// wall-time box plot and the completion-time histogram.
inline BenchResult run_benchmark(const BenchSpec& spec) {
  if (spec.schedulers.size() * spec.evolvers.size() < 2 && spec.seeds.size() < 2)
    throw std::invalid_argument("bench: need at least two configurations");
  BenchResult result;
  for (SchedulerKind s : spec.schedulers)
    for (EvolverKind e : spec.evolvers)
      for (uint64_t seed : spec.seeds) {
        EpisodeConfig cfg = spec.base;
        cfg.scheduler = s;
        cfg.evolver = e;
        cfg.scenario.master_seed = seed;
        cfg.out_dir.clear();  // per-run artifacts off in bench mode
        cfg.write_frames = false;
        BenchRun run{s, e, seed, run_episode(cfg)};
        result.runs.push_back(std::move(run));
      }

  // Table: one row per configuration, one episode column per seed.
  std::printf("%-18s", "method");
  for (uint64_t seed : spec.seeds) std::printf(" | episode %-2llu  T_atc  T_stc  T_mtc",
                                               static_cast<unsigned long long>(seed));
  std::printf("\n");
  for (SchedulerKind s : spec.schedulers)
    for (EvolverKind e : spec.evolvers) {
      std::string name = std::string(to_string(s)) + "/" + to_string(e);
      std::printf("%-18s", name.c_str());
      for (uint64_t seed : spec.seeds) {
        const BenchRun* run = result.find(s, e, seed);
        if (run && run->report.metrics)
          std::printf(" |      %6.2f %6.2f %6.2f", run->report.metrics->t_atc,
                      run->report.metrics->t_stc, run->report.metrics->t_mtc);
        else
          std::printf(" |      %6s %6s %6s", "-", "-", "-");
      }
      std::printf("\n");
    }

  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir);
    nlohmann::json j = nlohmann::json::array();
    std::vector<std::string> labels;
    std::vector<std::vector<double>> ocp_series, completion_series;
    for (SchedulerKind s : spec.schedulers)
      for (EvolverKind e : spec.evolvers) {
        std::vector<double> ocp, completion;
        for (uint64_t seed : spec.seeds) {
          const BenchRun* run = result.find(s, e, seed);
          nlohmann::json rj;
          rj["scheduler"] = to_string(s);
          rj["evolver"] = to_string(e);
          rj["seed"] = seed;
          rj["report"] = run->report.to_json();
          rj["per_cycle_ocp_ms"] = run->report.ocp_wall_ms;
          j.push_back(rj);
          ocp.insert(ocp.end(), run->report.ocp_wall_ms.begin(),
                     run->report.ocp_wall_ms.end());
          completion.insert(completion.end(), run->report.completion_times.begin(),
                            run->report.completion_times.end());
        }
        labels.push_back(std::string(to_string(s)) + "/" + to_string(e));
        ocp_series.push_back(std::move(ocp));
        completion_series.push_back(std::move(completion));
      }
    std::ofstream jf(spec.out_dir + "/bench_results.json");
    jf << j.dump(2) << "\n";
    write_box_plot(spec.out_dir + "/ocp_time_box.png", labels, ocp_series,
                   "PER-CYCLE OCP WALL TIME, MS");
    write_histogram(spec.out_dir + "/completion_hist.png", labels, completion_series,
                    "COMPLETION TIMES, S");
  }
  return result;
}

}  // namespace amod
