#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amod/admm.hpp"
#include "amod/bev.hpp"
#include "amod/gateway.hpp"
#include "amod/graph_evolution.hpp"
#include "amod/memory.hpp"
#include "amod/reflection.hpp"
#include "amod/routing.hpp"
#include "amod/scheduling.hpp"
#include "amod/world.hpp"

namespace amod {

// Scenario: the synthetic city and its demand process.
struct ScenarioConfig {
  int blocks_x = 4;
  int blocks_y = 4;
  double block_length = 100.0;
  double lane_offset = 1.75;
  int vehicles = 10;
  int max_requests = 12;
  double spawn_rate = 0.05;  // requests per step
  double r_tele = 30.0;
  uint64_t master_seed = 1;
  DriveSide drive_side = DriveSide::RightHand;
};

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig s;
  s.blocks_x = j.value("blocks_x", s.blocks_x);
  s.blocks_y = j.value("blocks_y", s.blocks_y);
  s.block_length = j.value("block_length", s.block_length);
  s.lane_offset = j.value("lane_offset", s.lane_offset);
  s.vehicles = j.value("vehicles", s.vehicles);
  s.max_requests = j.value("max_requests", s.max_requests);
  s.spawn_rate = j.value("spawn_rate", s.spawn_rate);
  s.r_tele = j.value("r_tele", s.r_tele);
  s.master_seed = j.value("master_seed", s.master_seed);
  if (j.value("drive_side", "RHD") == std::string("LHD"))
    s.drive_side = DriveSide::LeftHand;
  return s;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("scenario: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return scenario_from_json(j);
}

enum class SchedulerKind { Fcfs, Df, Lmm };
enum class EvolverKind { Manhattan, Lmm, Monolithic };

inline const char* to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Fcfs: return "fcfs";
    case SchedulerKind::Df: return "df";
    default: return "lmm";
  }
}
inline const char* to_string(EvolverKind k) {
  switch (k) {
    case EvolverKind::Manhattan: return "manhattan";
    case EvolverKind::Lmm: return "lmm";
    default: return "monolithic";
  }
}

struct EpisodeConfig {
  ScenarioConfig scenario;
  SchedulerKind scheduler = SchedulerKind::Df;
  EvolverKind evolver = EvolverKind::Manhattan;
  int plan_horizon = 15;   // steps planned per cycle
  int exec_horizon = 10;   // steps executed per cycle; must be <= plan_horizon
  double dt = 0.1;
  long step_budget = 3000;
  double v_ref = 5.0;
  double pickup_radius = 2.5;
  double evolve_threshold = 20.0;
  int evolve_max_size = 4;
  int savgol_window = 5;
  int savgol_order = 2;
  size_t memory_capacity = 50;
  size_t top_k = 3;
  int lmm_retry = 2;
  admm::SolverParams solver;
  GatewayConfig gateway;  // MockBrain unless configured otherwise
  std::string out_dir;    // empty: nothing written
  bool write_frames = false;
  bool verbose_solver = false;
};

struct EpisodeReport {
  std::optional<CompletionMetrics> metrics;
  int completed = 0;
  int pending = 0;
  int total_spawned = 0;
  long steps = 0;
  int cycles = 0;
  int collision_count = 0;  // executed steps with any pair below d_safe
  double min_pair_distance = std::numeric_limits<double>::infinity();
  int schedule_fallbacks = 0;
  int evolve_fallbacks = 0;
  int reflect_failures = 0;
  int solver_fallbacks = 0;
  int plan_states_per_cycle = 0;   // horizon instrumentation
  int executed_per_full_cycle = 0;
  std::vector<double> completion_times;
  std::vector<double> ocp_wall_ms;  // timing side channel, kept out of report.json
  std::vector<int> subgraphs_per_cycle;

  nlohmann::json to_json() const {
    nlohmann::json j;
    if (metrics) {
      j["t_atc"] = metrics->t_atc;
      j["t_stc"] = metrics->t_stc;
      j["t_mtc"] = metrics->t_mtc;
    }
    j["completed"] = completed;
    j["pending"] = pending;
    j["total_spawned"] = total_spawned;
    j["steps"] = steps;
    j["cycles"] = cycles;
    j["collision_count"] = collision_count;
    j["min_pair_distance"] =
        std::isfinite(min_pair_distance) ? min_pair_distance : -1.0;
    j["schedule_fallbacks"] = schedule_fallbacks;
    j["evolve_fallbacks"] = evolve_fallbacks;
    j["reflect_failures"] = reflect_failures;
    j["solver_fallbacks"] = solver_fallbacks;
    j["plan_states_per_cycle"] = plan_states_per_cycle;
    j["executed_per_full_cycle"] = executed_per_full_cycle;
    j["completion_times"] = completion_times;
    j["subgraphs_per_cycle"] = subgraphs_per_cycle;
    return j;
  }
};

// One Alg.-2 style episode: schedule, route, smooth, evolve the fleet graph,
// solve each group, execute, feed back, repeat.
class Simulation {
 public:
  explicit Simulation(EpisodeConfig cfg)
      : cfg_(std::move(cfg)),
        gateway_(cfg_.gateway),
        embedder_(std::make_shared<BlockMeanEmbedder>()),
        sched_memory_(cfg_.memory_capacity, embedder_),
        evo_memory_(cfg_.memory_capacity, embedder_) {
    if (cfg_.exec_horizon > cfg_.plan_horizon || cfg_.exec_horizon < 1)
      throw std::invalid_argument("episode: need 1 <= exec_horizon <= plan_horizon");
    cfg_.solver.horizon = cfg_.plan_horizon;
    cfg_.solver.dyn.dt = cfg_.dt;
    init_world();
    if (!cfg_.out_dir.empty()) {
      std::filesystem::create_directories(cfg_.out_dir);
      log_.open(cfg_.out_dir + "/episode_log.jsonl");
      world_log_.open(cfg_.out_dir + "/world_log.jsonl");
      if (cfg_.verbose_solver) trace_log_.open(cfg_.out_dir + "/solver_trace.jsonl");
    }
  }

  const WorldState& world() const { return world_; }

  EpisodeReport run() {
    EpisodeReport rep;
    rep.plan_states_per_cycle = cfg_.plan_horizon + 1;
    rep.executed_per_full_cycle = cfg_.exec_horizon;
    while (world_.step < cfg_.step_budget && !demand_exhausted()) {
      run_cycle(rep);
    }
    rep.steps = world_.step;
    rep.completed = static_cast<int>(world_.completed_requests().size());
    rep.pending = world_.pending_count();
    rep.total_spawned = static_cast<int>(world_.requests.size());
    auto completed = world_.completed_requests();
    if (!completed.empty()) {
      rep.metrics = compute_metrics(completed);
      for (const auto& r : completed)
        rep.completion_times.push_back(*r.dropoff_time - r.spawn_time);
    }
    if (!cfg_.out_dir.empty()) {
      std::ofstream rf(cfg_.out_dir + "/report.json");
      rf << rep.to_json().dump(2) << "\n";
      nlohmann::json t;
      t["per_cycle_ocp_ms"] = rep.ocp_wall_ms;
      std::ofstream tf(cfg_.out_dir + "/timings.json");
      tf << t.dump(2) << "\n";
    }
    return rep;
  }

 private:
  bool demand_exhausted() const {
    if (world_.spawn_budget != 0) return false;  // more arrivals to come
    for (const auto& r : world_.requests)
      if (r.status != RequestStatus::Completed) return false;
    return true;
  }

  void init_world() {
    GridCityConfig g;
    g.blocks_x = cfg_.scenario.blocks_x;
    g.blocks_y = cfg_.scenario.blocks_y;
    g.block_length = cfg_.scenario.block_length;
    g.lane_offset = cfg_.scenario.lane_offset;
    g.drive_side = cfg_.scenario.drive_side;
    world_.map = std::make_shared<LaneGraph>(make_grid_city(g));
    world_.spawn_rng = Rng(derive_seed(cfg_.scenario.master_seed, "requests"));
    world_.spawn_budget = cfg_.scenario.max_requests;

    Rng place(derive_seed(cfg_.scenario.master_seed, "vehicles"));
    std::vector<int> nodes(world_.map->node_count());
    for (size_t i = 0; i < nodes.size(); ++i) nodes[i] = static_cast<int>(i);
    for (size_t i = nodes.size() - 1; i > 0; --i)
      std::swap(nodes[i], nodes[place.next_below(i + 1)]);
    if (cfg_.scenario.vehicles > static_cast<int>(nodes.size()))
      throw std::invalid_argument("scenario: more vehicles than nodes");
    for (int i = 0; i < cfg_.scenario.vehicles; ++i) {
      VehicleState v;
      v.id = i + 1;
      int node = nodes[i];
      const LaneGraph& map = *world_.map;
      // park on the outgoing lane so the vehicle starts on drivable geometry
      int ei = map.out_edges[node].front();
      const Vec2& p = map.edges[ei].centerline.front();
      Vec2 dir = map.nodes[map.edges[ei].to] - map.nodes[map.edges[ei].from];
      v.x = p.x;
      v.y = p.y;
      v.heading = std::atan2(dir.y, dir.x);
      v.speed = 0.0;
      world_.vehicles.push_back(v);
    }
  }

  struct VehiclePlanState {
    Route route;
    std::optional<RouteIndex> index;
  };

  void assign_route(VehicleState& v, int goal_node) {
    const LaneGraph& map = *world_.map;
    int start = map.nearest_node(v.position());
    Route r = astar_route(map, start, goal_node);
    bool applied = false;
    r = smooth_savgol(r, cfg_.savgol_window, cfg_.savgol_order, &applied);
    v.route_nodes = r.nodes;
    auto& slot = plans_[v.id];
    slot.route = std::move(r);
    slot.index.reset();
    if (!slot.route.empty()) slot.index.emplace(slot.route);
  }

  nlohmann::json run_schedule(EpisodeReport& rep) {
    nlohmann::json rec;
    bool any_pending = world_.pending_count() > 0;
    bool any_free = false;
    for (const auto& v : world_.vehicles) any_free |= v.is_free();
    if (!any_pending || !any_free) {
      rec["skipped"] = true;
      return rec;
    }
    Assignment a;
    if (cfg_.scheduler == SchedulerKind::Fcfs) {
      a = schedule_fcfs(world_);
    } else if (cfg_.scheduler == SchedulerKind::Df) {
      a = schedule_df(world_);
    } else {
      LmmSchedulerConfig sc;
      sc.top_k = cfg_.top_k;
      sc.retry_limit = cfg_.lmm_retry;
      auto res = schedule_lmm(world_, gateway_, sched_memory_, sc);
      a = std::move(res.assignment);
      if (res.context) {
        MemoryEntry e;
        e.variant = BevVariant::Scheduling;
        e.image = res.context->image;
        e.prompt_text = res.context->prompt_text;
        e.response_text = res.context->response_text;
        sched_memory_.store(std::move(e));
      }
      if (a.fallback) ++rep.schedule_fallbacks;
    }
    for (auto [rid, vid] : a.pairs) {
      Request* r = world_.request(rid);
      VehicleState* v = world_.vehicle(vid);
      r->status = RequestStatus::Assigned;
      v->occupancy = Occupancy::EnRouteToPickup;
      v->request_id = rid;
      assign_route(*v, r->pickup_node);
    }
    rec["policy"] = a.policy;
    rec["pairs"] = a.pairs;
    rec["fallback"] = a.fallback;
    if (a.prompt_hash) {
      char buf[24];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(a.prompt_hash));
      rec["prompt_hash"] = buf;
    }
    if (!a.raw_response.empty()) rec["raw_response"] = a.raw_response;
    return rec;
  }

  Partition run_evolution(EpisodeReport& rep, nlohmann::json& rec) {
    Partition part;
    if (cfg_.evolver == EvolverKind::Monolithic) {
      part = evolve_monolithic(world_.vehicles);
    } else if (cfg_.evolver == EvolverKind::Manhattan) {
      part = evolve_manhattan(world_.vehicles, cfg_.evolve_threshold, cfg_.evolve_max_size);
    } else {
      LmmEvolverConfig ec;
      ec.top_k = cfg_.top_k;
      ec.retry_limit = cfg_.lmm_retry;
      ec.fallback_threshold = cfg_.evolve_threshold;
      ec.fallback_max_size = cfg_.evolve_max_size;
      auto res = evolve_lmm(world_, gateway_, evo_memory_, ec);
      part = std::move(res.partition);
      if (res.context) {
        MemoryEntry e;
        e.variant = BevVariant::GraphEvolution;
        e.image = res.context->image;
        e.prompt_text = res.context->prompt_text;
        e.response_text = res.context->response_text;
        evo_memory_.store(std::move(e));
      }
      if (part.fallback) ++rep.evolve_fallbacks;
    }
    rec["groups"] = part.groups;
    rec["source"] = part.source == PartitionSource::Lmm ? "lmm" : "heuristic";
    rec["fallback"] = part.fallback;
    return part;
  }

  admm::VehicleInput make_input(const VehicleState& v) {
    admm::VehicleInput in;
    in.id = v.id;
    in.z0 = StateVec{v.x, v.y, v.heading, v.speed};
    const auto it = plans_.find(v.id);
    const Route* route = (it != plans_.end() && !it->second.route.empty() &&
                          v.occupancy != Occupancy::Free)
                             ? &it->second.route
                             : nullptr;
    ReferenceTrajectory ref =
        route ? build_reference(*route, v, cfg_.plan_horizon, cfg_.v_ref, cfg_.dt)
              : build_reference(Route{}, v, cfg_.plan_horizon, cfg_.v_ref, cfg_.dt);
    in.reference = ref.states;
    in.prior = in.reference;
    return in;
  }

  void run_cycle(EpisodeReport& rep) {
    nlohmann::json rec;
    rec["cycle"] = rep.cycles;
    rec["t"] = world_.time;
    rec["schedule"] = run_schedule(rep);
    nlohmann::json evo_rec;
    Partition part = run_evolution(rep, evo_rec);
    rec["partition"] = evo_rec;

    if (cfg_.write_frames && !cfg_.out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "/frame_%04d_scheduling.png", rep.cycles);
      save_png(render_bev(world_, BevVariant::Scheduling), cfg_.out_dir + name);
      std::snprintf(name, sizeof name, "/frame_%04d_graph_evolution.png", rep.cycles);
      save_png(render_bev(world_, BevVariant::GraphEvolution), cfg_.out_dir + name);
    }

    // per-group trajectory optimization, groups in parallel
    std::vector<std::vector<admm::VehicleInput>> group_inputs;
    for (const auto& group : part.groups) {
      std::vector<admm::VehicleInput> inputs;
      for (int id : group) inputs.push_back(make_input(*world_.vehicle(id)));
      group_inputs.push_back(std::move(inputs));
    }
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::future<admm::SubgraphSolution>> futures;
    for (auto& inputs : group_inputs) {
      auto params = cfg_.solver;
      params.collect_trace = cfg_.verbose_solver;
      futures.push_back(std::async(std::launch::async, [inputs, params] {
        return admm::solve_subgraph(admm::build_problem(inputs, params));
      }));
    }
    std::vector<admm::SubgraphSolution> solutions;
    for (auto& f : futures) solutions.push_back(f.get());
    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
    rep.ocp_wall_ms.push_back(ms);
    rep.subgraphs_per_cycle.push_back(static_cast<int>(part.groups.size()));

    nlohmann::json solver_rec = nlohmann::json::array();
    std::map<int, const admm::PlannedTrajectory*> plan_of;
    for (size_t g = 0; g < solutions.size(); ++g) {
      auto& sol = solutions[g];
      if (sol.fallback) ++rep.solver_fallbacks;
      nlohmann::json sj;
      sj["group"] = part.groups[g];
      sj["objective"] = sol.objective;
      sj["consensus_residual"] = sol.consensus_residual;
      sj["converged"] = sol.converged;
      sj["outer_passes"] = sol.outer_passes;
      sj["plan_states"] = cfg_.plan_horizon + 1;
      solver_rec.push_back(sj);
      for (const auto& t : sol.plans) plan_of[t.id] = &t;
      if (trace_log_.is_open())
        for (const auto& tr : sol.trace) {
          nlohmann::json tj;
          tj["cycle"] = rep.cycles;
          tj["group"] = g;
          tj["outer"] = tr.outer;
          tj["k"] = tr.k;
          tj["consensus_residual"] = tr.consensus_residual;
          tj["objective"] = tr.objective;
          trace_log_ << tj.dump() << "\n";
        }
    }
    rec["solver"] = solver_rec;

    // execute the first exec_horizon steps of every plan
    nlohmann::json events = nlohmann::json::array();
    int executed = 0;
    bool collision_this_cycle = false;
    double cycle_min_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg_.exec_horizon && world_.step < cfg_.step_budget; ++k) {
      for (auto& v : world_.vehicles) {
        const auto* plan = plan_of.count(v.id) ? plan_of[v.id] : nullptr;
        ControlVec u = plan && k < static_cast<int>(plan->controls.size())
                           ? clamp_control(plan->controls[k], cfg_.solver.dyn)
                           : ControlVec{-cfg_.solver.dyn.a_max, 0.0};
        StateVec z{v.x, v.y, v.heading, v.speed};
        StateVec nz = step(z, u, cfg_.solver.dyn);
        v.x = nz[0];
        v.y = nz[1];
        v.heading = wrap_angle(nz[2]);
        v.speed = nz[3];
      }
      world_.time += cfg_.dt;
      ++world_.step;
      ++executed;

      for (int sid : spawn_requests(world_, cfg_.scenario.spawn_rate)) {
        nlohmann::json e;
        e["type"] = "spawn";
        e["t"] = world_.time;
        e["request"] = sid;
        const Request* r = world_.request(sid);
        e["pickup_node"] = r->pickup_node;
        e["dropoff_node"] = r->dropoff_node;
        events.push_back(e);
      }

      // pickup / dropoff events
      for (auto& v : world_.vehicles) {
        if (v.occupancy == Occupancy::EnRouteToPickup) {
          Request* r = world_.request(v.request_id);
          if (distance(v.position(), r->pickup) < cfg_.pickup_radius) {
            r->status = RequestStatus::InTransit;
            r->pickup_time = world_.time;
            v.occupancy = Occupancy::Occupied;
            assign_route(v, r->dropoff_node);
            nlohmann::json e;
            e["type"] = "pickup";
            e["t"] = world_.time;
            e["request"] = r->id;
            e["vehicle"] = v.id;
            events.push_back(e);
          }
        } else if (v.occupancy == Occupancy::Occupied) {
          Request* r = world_.request(v.request_id);
          if (distance(v.position(), r->dropoff) < cfg_.pickup_radius) {
            r->status = RequestStatus::Completed;
            r->dropoff_time = world_.time;
            v.occupancy = Occupancy::Free;
            v.request_id = -1;
            v.route_nodes.clear();
            plans_.erase(v.id);
            nlohmann::json e;
            e["type"] = "dropoff";
            e["t"] = world_.time;
            e["request"] = r->id;
            e["vehicle"] = v.id;
            events.push_back(e);
          }
        }
      }

      // safety bookkeeping
      bool violation = false;
      for (size_t a = 0; a < world_.vehicles.size(); ++a)
        for (size_t b = a + 1; b < world_.vehicles.size(); ++b) {
          double d = distance(world_.vehicles[a].position(), world_.vehicles[b].position());
          cycle_min_dist = std::min(cycle_min_dist, d);
          rep.min_pair_distance = std::min(rep.min_pair_distance, d);
          if (d < cfg_.solver.d_safe) {
            violation = true;
            if (!collision_this_cycle) {
              last_collision_ = CollisionEvent{world_.time, world_.step,
                                               world_.vehicles[a].id,
                                               world_.vehicles[b].id, d, ""};
            }
          }
        }
      if (violation) {
        ++rep.collision_count;
        collision_this_cycle = true;
        nlohmann::json e;
        e["type"] = "collision_step";
        e["t"] = world_.time;
        events.push_back(e);
      }

      if (world_log_.is_open()) {
        nlohmann::json w;
        w["step"] = world_.step;
        w["t"] = world_.time;
        nlohmann::json vs = nlohmann::json::array();
        for (const auto& v : world_.vehicles) {
          nlohmann::json vj;
          vj["id"] = v.id;
          vj["x"] = v.x;
          vj["y"] = v.y;
          vj["heading"] = v.heading;
          vj["speed"] = v.speed;
          vj["occupancy"] = static_cast<int>(v.occupancy);
          vs.push_back(vj);
        }
        w["vehicles"] = vs;
        w["pending"] = world_.pending_count();
        world_log_ << w.dump() << "\n";
      }
    }

    // collision reflection feeds the memory stack in model-backed modes
    if (collision_this_cycle && (cfg_.scheduler == SchedulerKind::Lmm ||
                                 cfg_.evolver == EvolverKind::Lmm)) {
      last_collision_.decision_summary = rec["partition"].dump();
      auto bev = render_bev(world_, BevVariant::GraphEvolution);
      bool failed = false;
      reflect_on_collision(evo_memory_, gateway_, world_, bev, last_collision_, &failed);
      if (failed) ++rep.reflect_failures;
      rec["reflection"] = failed ? "failed" : "stored";
    }

    rec["executed_steps"] = executed;
    rec["events"] = events;
    if (std::isfinite(cycle_min_dist)) rec["min_pair_distance"] = cycle_min_dist;
    if (log_.is_open()) log_ << rec.dump() << "\n";
    ++rep.cycles;
  }

  EpisodeConfig cfg_;
  WorldState world_;
  LmmGateway gateway_;
  std::shared_ptr<BlockMeanEmbedder> embedder_;
  MemoryStore sched_memory_;
  MemoryStore evo_memory_;
  std::map<int, VehiclePlanState> plans_;
  CollisionEvent last_collision_;
  std::ofstream log_, world_log_, trace_log_;
};

inline EpisodeReport run_episode(const EpisodeConfig& cfg) {
  Simulation sim(cfg);
  return sim.run();
}

// Metrics recomputed from the raw episode log; the consistency oracle for
// reports and the `replay` subcommand.
struct ReplaySummary {
  CompletionMetrics metrics;
  int completed = 0;
  int collision_steps = 0;
  int cycles = 0;
};

inline ReplaySummary replay_log(const std::string& log_path) {
  std::ifstream f(log_path);
  if (!f) throw std::invalid_argument("replay: cannot open " + log_path);
  std::map<int, double> spawn_t, drop_t;
  ReplaySummary out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ++out.cycles;
    for (const auto& e : j.value("events", nlohmann::json::array())) {
      std::string type = e.value("type", "");
      if (type == "spawn")
        spawn_t[e["request"].get<int>()] = e["t"].get<double>();
      else if (type == "dropoff")
        drop_t[e["request"].get<int>()] = e["t"].get<double>();
      else if (type == "collision_step")
        ++out.collision_steps;
    }
  }
  std::vector<Request> done;
  for (auto& [id, t1] : drop_t) {
    Request r;
    r.id = id;
    r.spawn_time = spawn_t.count(id) ? spawn_t[id] : 0.0;
    r.dropoff_time = t1;
    r.status = RequestStatus::Completed;
    done.push_back(r);
  }
  out.completed = static_cast<int>(done.size());
  if (!done.empty()) out.metrics = compute_metrics(done);
  return out;
}

}  // namespace amod
