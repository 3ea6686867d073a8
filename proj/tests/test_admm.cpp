#include <doctest.h>

#include <map>

#include "admm_test_utils.hpp"
#include "amod/admm.hpp"
#include "amod/rng.hpp"
#include "oracles.hpp"
#include "qp_oracle.hpp"

using namespace amod;
using namespace amod::admm;

namespace {

// straight constant-speed input: reference and prior advance along `heading`
VehicleInput straight_input(int id, Vec2 start, double heading, double speed,
                            const SolverParams& params) {
  VehicleInput in;
  in.id = id;
  in.z0 = StateVec{start.x, start.y, heading, speed};
  for (int t = 0; t <= params.horizon; ++t) {
    double s = speed * params.dyn.dt * t;
    in.reference.push_back(StateVec{start.x + s * std::cos(heading),
                                    start.y + s * std::sin(heading), heading, speed});
  }
  in.prior = in.reference;
  return in;
}

double plan_pair_min_distance(const PlannedTrajectory& a, const PlannedTrajectory& b) {
  double worst = std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < a.states.size(); ++t) {
    double d = std::hypot(a.states[t][0] - b.states[t][0], a.states[t][1] - b.states[t][1]);
    worst = std::min(worst, d);
  }
  return worst;
}

}  // namespace

TEST_CASE("build_problem: singleton reduces to a boxed tracking problem") {
  SolverParams params;
  auto p = build_problem({straight_input(7, {0, 0}, 0.0, 5.0, params)}, params);
  REQUIRE(p.vehicles.size() == 1);
  const auto& v = p.vehicles[0];
  CHECK(v.coll_rows.empty());
  CHECK(v.neighbors.empty());
  CHECK(v.box_rows.size() == static_cast<size_t>(6 * params.horizon));
  CHECK(v.k_box.minCoeff() >= 0.0);  // nominal is feasible
}

TEST_CASE("build_problem: normals along the x separation axis") {
  SolverParams params;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 0.0, params),
                          straight_input(2, {10, 0}, 0.0, 0.0, params)},
                         params);
  for (const auto& v : p.vehicles)
    for (const auto& row : v.coll_rows) {
      double expect = v.id == 1 ? -1.0 : 1.0;  // unit vector from own to... own minus other
      CHECK(row.nx == doctest::Approx(expect));
      CHECK(row.ny == doctest::Approx(0.0));
    }
}

TEST_CASE("build_problem: row residuals at zero equal direct prior distances") {
  SolverParams params;
  params.horizon = 8;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 4.0, params),
                          straight_input(2, {30, 3}, M_PI, 4.0, params)},
                         params);
  for (const auto& v : p.vehicles) {
    const auto& other = p.vehicles[v.id == 1 ? 1 : 0];
    for (size_t r = 0; r < v.coll_rows.size(); ++r) {
      int t = v.coll_rows[r].step;
      double gap = std::hypot(v.prior[t][0] - other.prior[t][0],
                              v.prior[t][1] - other.prior[t][1]);
      // nominal equals the (consistent) prior here, so -k is d_safe - distance
      CHECK(v.k_coll[r] == doctest::Approx(gap - params.d_safe).epsilon(1e-6));
    }
  }
}

TEST_CASE("build_problem: coincident priors get the deterministic fallback normal") {
  SolverParams params;
  auto p = build_problem({straight_input(1, {5, 5}, 0.0, 0.0, params),
                          straight_input(2, {5, 5}, 0.0, 0.0, params)},
                         params);
  CHECK(p.vehicles[0].degenerate_normals == params.horizon);
  CHECK(p.vehicles[0].coll_rows[0].nx == 1.0);   // id 1 < id 2
  CHECK(p.vehicles[1].coll_rows[0].nx == -1.0);
}

TEST_CASE("dual updates: zero penalties leave p and s unchanged") {
  SolverParams params;
  params.sigma = 0.0;
  params.rho = 0.0;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 2.0, params),
                          straight_input(2, {8, 0}, M_PI, 2.0, params)},
                         params);
  auto st = init_state(p);
  // seed nonzero momenta to make "unchanged" observable
  st.dual[0].coll.at(1).p.setConstant(0.25);
  st.dual[0].coll.at(1).s.setConstant(-0.5);
  st.dual[0].box.s.setConstant(0.75);
  begin_iteration(st);
  dual_update_target(p, st, 0);
  dual_update_surrounding(p, st, 0, 2);
  CHECK((st.dual[0].coll.at(1).p.array() == 0.25).all());
  CHECK((st.dual[0].coll.at(1).s.array() == -0.5).all());
  CHECK((st.dual[0].box.s.array() == 0.75).all());
}

TEST_CASE("dual updates: single vehicle has an empty consensus sum") {
  SolverParams params;
  auto p = build_problem({straight_input(3, {0, 0}, 0.0, 2.0, params)}, params);
  auto st = init_state(p);
  begin_iteration(st);
  dual_update_target(p, st, 0);
  CHECK(st.dual[0].coll.at(3).rows() == 0);  // no p-update anywhere
  CHECK(st.dual[0].box.r.size() == 6 * params.horizon);
}

TEST_CASE("dual updates: surrounding estimate is a pure scaling of r") {
  SolverParams params;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 2.0, params),
                          straight_input(2, {8, 0}, M_PI, 2.0, params)},
                         params);
  auto st = init_state(p);
  Rng rng(4);
  auto& blk = st.dual[0].coll.at(2);
  for (int i = 0; i < blk.r.size(); ++i) blk.r[i] = rng.next_range(-2, 2);
  dual_update_surrounding_estimates(p, st, 0, 2);
  double c_shared = params.sigma + 2.0 * params.rho * p.degree();
  CHECK((blk.y - blk.r / c_shared).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one iteration matches an independent transcription of the update equations") {
  SolverParams params;
  params.horizon = 3;
  std::vector<VehicleInput> inputs = {straight_input(1, {0, 0}, 0.0, 2.0, params),
                                      straight_input(2, {6, 0.5}, M_PI, 2.0, params)};
  auto p = build_problem(inputs, params);
  const int nz = p.nz();
  const double sigma = params.sigma, rho = params.rho;
  const double c1 = sigma, c2 = sigma + 2 * rho * p.degree();

  // the transcription's own dual state (dense), indexed [vehicle][owner]
  struct Blk {
    Eigen::VectorXd p, s, r, y, x;
  };
  std::vector<Blk> box(2);
  std::map<std::pair<int, int>, Blk> coll;
  std::vector<Eigen::MatrixXd> J1(2), J2(2), D(2), H(2);
  for (int i = 0; i < 2; ++i) {
    const auto& v = p.vehicles[i];
    int m1 = static_cast<int>(v.box_rows.size());
    int m2 = static_cast<int>(v.coll_rows.size());
    box[i] = {Eigen::VectorXd::Zero(m1), Eigen::VectorXd::Zero(m1),
              Eigen::VectorXd::Zero(m1), Eigen::VectorXd::Zero(m1),
              Eigen::VectorXd::Zero(m1)};
    for (int owner = 0; owner < 2; ++owner) {
      int rows = static_cast<int>(p.vehicles[owner].coll_rows.size());
      coll[{i, p.vehicles[owner].id}] = {
          Eigen::VectorXd::Zero(rows), Eigen::VectorXd::Zero(rows),
          Eigen::VectorXd::Zero(rows), Eigen::VectorXd::Zero(rows),
          Eigen::VectorXd::Zero(rows)};
      (void)m2;
    }
    J1[i] = admm_dense::dense_box(v, nz);
    J2[i] = admm_dense::dense_coll(v, nz, params.horizon);
    D[i] = admm_dense::dense_dynamics(v, params.horizon);
    H[i] = admm_dense::dense_cost_hessian(p) + J1[i].transpose() * J1[i] / c1 +
           J2[i].transpose() * J2[i] / c2;
  }

  auto st = init_state(p);
  for (int iter = 0; iter < 2; ++iter) {
    // --- transcription step (from its own copies only) ---
    std::vector<Blk> box_next(2);
    std::map<std::pair<int, int>, Blk> coll_next;
    std::vector<Eigen::VectorXd> dz_exp(2);
    for (int i = 0; i < 2; ++i) {
      const auto& v = p.vehicles[i];
      int other = 1 - i;
      int my_id = v.id, other_id = p.vehicles[other].id;
      Blk b = box[i];
      b.s = box[i].s + sigma * (box[i].y - box[i].x);
      b.r = sigma * box[i].x - (v.k_box + b.s);
      Blk own = coll[{i, my_id}];
      const Blk& own_prev = coll[{i, my_id}];
      const Blk& their_copy = coll[{other, my_id}];
      own.p = own_prev.p + rho * (own_prev.y - their_copy.y);
      own.s = own_prev.s + sigma * (own_prev.y - own_prev.x);
      own.r = sigma * own_prev.x + rho * (own_prev.y + their_copy.y) -
              (v.k_coll + own.p + own.s);
      Blk cp = coll[{i, other_id}];
      const Blk& cp_prev = coll[{i, other_id}];
      const Blk& owner_own = coll[{other, other_id}];
      cp.p = cp_prev.p + rho * (cp_prev.y - owner_own.y);
      cp.s = cp_prev.s + sigma * (cp_prev.y - cp_prev.x);
      cp.r = sigma * cp_prev.x + rho * (2.0 * p.degree() - 1.0) * cp_prev.y +
             rho * owner_own.y - (cp.p + cp.s);

      Eigen::VectorXd q = v.grad + J1[i].transpose() * b.r / c1 +
                          J2[i].transpose() * own.r / c2;
      Eigen::MatrixXd no_g(0, nz);
      Eigen::VectorXd no_h(0);
      auto sol = oracle::solve_qp(H[i], q, D[i], Eigen::VectorXd::Zero(D[i].rows()),
                                  no_g, no_h);
      dz_exp[i] = sol.x;

      b.y = (J1[i] * sol.x + b.r) / c1;
      b.x = (b.s / sigma + b.y).cwiseMax(0.0);
      own.y = (J2[i] * sol.x + own.r) / c2;
      own.x = (own.s / sigma + own.y).cwiseMax(0.0);
      cp.y = cp.r / c2;
      cp.x = (cp.s / sigma + cp.y).cwiseMax(0.0);
      box_next[i] = b;
      coll_next[{i, my_id}] = own;
      coll_next[{i, other_id}] = cp;
    }
    box = box_next;
    coll = coll_next;

    // --- implementation step ---
    inner_iteration(p, st);
    for (int i = 0; i < 2; ++i) {
      const auto& v = p.vehicles[i];
      int other_id = p.vehicles[1 - i].id;
      CHECK((st.dz[i] - dz_exp[i]).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((st.dual[i].box.s - box[i].s).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((st.dual[i].box.r - box[i].r).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((st.dual[i].box.y - box[i].y).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((st.dual[i].box.x - box[i].x).cwiseAbs().maxCoeff() < 1e-8);
      for (int owner : {v.id, other_id}) {
        const auto& mine = st.dual[i].coll.at(owner);
        const Blk& exp = coll[{i, owner}];
        CHECK((mine.p - exp.p).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((mine.s - exp.s).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((mine.r - exp.r).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((mine.y - exp.y).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((mine.x - exp.x).cwiseAbs().maxCoeff() < 1e-8);
      }
    }
  }
}

TEST_CASE("shortcut updates equal the generic consensus updates they abbreviate") {
  Rng rng(2718);
  int checked = 0;
  for (int instance = 0; instance < 30; ++instance) {
    SolverParams params;
    params.horizon = 3;
    int n = 2 + static_cast<int>(rng.next_below(3));  // 2..4 vehicles
    std::vector<VehicleInput> inputs;
    for (int i = 0; i < n; ++i)
      inputs.push_back(straight_input(i + 1,
                                      {rng.next_range(0, 15), rng.next_range(0, 15)},
                                      rng.next_range(-3, 3), rng.next_range(0.5, 6),
                                      params));
    auto p = build_problem(inputs, params);
    auto st = init_state(p);
    for (int iter = 0; iter < 4; ++iter) {
      auto before = st.dual;  // the snapshot the implementation will read
      inner_iteration(p, st);
      const double c2 = p.c_shared();
      for (int vi = 0; vi < n; ++vi)
        for (int owner_idx = 0; owner_idx < n; ++owner_idx) {
          if (owner_idx == vi) continue;
          int owner = p.vehicles[owner_idx].id;
          // generic updates: literal sums over every other member's copy
          const auto& mine_prev = before[vi].coll.at(owner);
          Eigen::VectorXd sum_diff = Eigen::VectorXd::Zero(mine_prev.rows());
          Eigen::VectorXd sum_plus = Eigen::VectorXd::Zero(mine_prev.rows());
          for (int j = 0; j < n; ++j) {
            if (j == vi) continue;
            sum_diff += mine_prev.y - before[j].coll.at(owner).y;
            sum_plus += mine_prev.y + before[j].coll.at(owner).y;
          }
          Eigen::VectorXd p_gen = mine_prev.p + params.rho * sum_diff;
          Eigen::VectorXd s_gen = mine_prev.s + params.sigma * (mine_prev.y - mine_prev.x);
          Eigen::VectorXd r_gen = params.sigma * mine_prev.x + params.rho * sum_plus -
                                  (p_gen + s_gen);
          Eigen::VectorXd y_gen = r_gen / c2;
          Eigen::VectorXd x_gen = (s_gen / params.sigma + y_gen).cwiseMax(0.0);
          const auto& got = st.dual[vi].coll.at(owner);
          auto close = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
            return (a - b).cwiseAbs().maxCoeff() <=
                   1e-10 * std::max(1.0, b.cwiseAbs().maxCoeff());
          };
          CHECK(close(got.p, p_gen));
          CHECK(close(got.s, s_gen));
          CHECK(close(got.r, r_gen));
          CHECK(close(got.y, y_gen));
          CHECK(close(got.x, x_gen));
          ++checked;
          // every surrounding copy of a block is bitwise identical
          for (int w = 0; w < n; ++w) {
            if (w == vi || w == owner_idx) continue;
            const auto& other_copy = st.dual[w].coll.at(owner);
            CHECK((got.p - other_copy.p).cwiseAbs().maxCoeff() == 0.0);
            CHECK((got.y - other_copy.y).cwiseAbs().maxCoeff() == 0.0);
          }
        }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("primal: decoupled case equals the pure tracking LQR") {
  SolverParams params;
  params.horizon = 6;
  auto p = build_problem({straight_input(1, {0, 0}, 0.2, 3.0, params)}, params);
  // strip every inequality row; re-prepare so the proximal terms vanish
  p.vehicles[0].box_rows.clear();
  p.vehicles[0].k_box = Eigen::VectorXd::Zero(0);
  amod::admm::detail::prepare_lqr(p.vehicles[0], p);
  auto st = init_state(p);
  begin_iteration(st);
  dual_update_target(p, st, 0);
  auto dz = primal_update_lqr(p, st, 0);

  Eigen::MatrixXd D = admm_dense::dense_dynamics(p.vehicles[0], params.horizon);
  Eigen::MatrixXd H = admm_dense::dense_cost_hessian(p);
  Eigen::MatrixXd no_g(0, p.nz());
  Eigen::VectorXd no_h(0);
  auto pure = oracle::solve_qp(H, p.vehicles[0].grad, D,
                               Eigen::VectorXd::Zero(D.rows()), no_g, no_h);
  CHECK((dz - pure.x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("primal: linearized dynamics hold exactly and the KKT residual is tiny") {
  SolverParams params;
  params.horizon = 5;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 4.0, params),
                          straight_input(2, {7, 0}, M_PI, 4.0, params)},
                         params);
  auto st = init_state(p);
  Rng rng(8);
  for (auto& d : st.dual) {
    for (int i = 0; i < d.box.r.size(); ++i) d.box.r[i] = rng.next_range(-1, 1);
    for (auto& [owner, blk] : d.coll)
      for (int i = 0; i < blk.r.size(); ++i) blk.r[i] = rng.next_range(-1, 1);
  }
  for (int vi = 0; vi < 2; ++vi) {
    auto dz = primal_update_lqr(p, st, vi);
    const auto& v = p.vehicles[vi];
    Eigen::MatrixXd D = admm_dense::dense_dynamics(v, params.horizon);
    CHECK((D * dz).cwiseAbs().maxCoeff() < 1e-8);

    const double c1 = p.c_private(), c2 = p.c_shared();
    Eigen::MatrixXd J1 = admm_dense::dense_box(v, p.nz());
    Eigen::MatrixXd J2 = admm_dense::dense_coll(v, p.nz(), params.horizon);
    Eigen::MatrixXd H = admm_dense::dense_cost_hessian(p) +
                        J1.transpose() * J1 / c1 + J2.transpose() * J2 / c2;
    Eigen::VectorXd q = v.grad + J1.transpose() * st.dual[vi].box.r / c1 +
                        J2.transpose() * st.dual[vi].coll.at(v.id).r / c2;
    Eigen::MatrixXd no_g(0, p.nz());
    Eigen::VectorXd no_h(0);
    auto dense = oracle::solve_qp(H, q, D, Eigen::VectorXd::Zero(D.rows()), no_g, no_h);
    CHECK((dz - dense.x).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("primal: one-step horizon matches the dense KKT oracle") {
  SolverParams params;
  params.horizon = 1;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 3.0, params)}, params);
  auto st = init_state(p);
  Rng rng(12);
  for (int i = 0; i < st.dual[0].box.r.size(); ++i)
    st.dual[0].box.r[i] = rng.next_range(-2, 2);
  auto dz = primal_update_lqr(p, st, 0);
  const auto& v = p.vehicles[0];
  Eigen::MatrixXd J1 = admm_dense::dense_box(v, p.nz());
  Eigen::MatrixXd H = admm_dense::dense_cost_hessian(p) +
                      J1.transpose() * J1 / p.c_private();
  Eigen::VectorXd q = v.grad + J1.transpose() * st.dual[0].box.r / p.c_private();
  Eigen::MatrixXd D = admm_dense::dense_dynamics(v, 1);
  Eigen::MatrixXd no_g(0, p.nz());
  Eigen::VectorXd no_h(0);
  auto dense = oracle::solve_qp(H, q, D, Eigen::VectorXd::Zero(D.rows()), no_g, no_h);
  CHECK((dz - dense.x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("primal: degenerate weights raise a diagnostic") {
  SolverParams params;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 0.0, params)}, params);
  // zero weights and no box rows leave the control Hessian singular
  p.params.weights.control = {0.0, 0.0};
  p.params.weights.state = {0.0, 0.0, 0.0, 0.0};
  p.vehicles[0].box_rows.clear();
  p.vehicles[0].k_box = Eigen::VectorXd::Zero(0);
  CHECK_THROWS_WITH_AS(amod::admm::detail::prepare_lqr(p.vehicles[0], p),
                       doctest::Contains("degenerate"), std::runtime_error);
}

TEST_CASE("solve: singleton converges in one outer pass to the boxed tracking optimum") {
  SolverParams params;
  auto sol = solve_subgraph(build_problem(
      {straight_input(1, {0, 0}, 0.0, 5.0, params)}, params));
  CHECK(sol.converged);
  CHECK(sol.outer_passes == 1);
  auto central = admm_dense::solve_centralized(sol.problem);
  REQUIRE(central.converged);
  CHECK(sol.objective ==
        doctest::Approx(central.objective).epsilon(1e-4).scale(1.0));
}

TEST_CASE("solve: two vehicles head-on stay separated and match the centralized QP") {
  SolverParams params;
  params.k_max = 800;
  params.max_outer = 14;
  params.outer_tol = 1e-4;
  std::vector<VehicleInput> inputs = {
      straight_input(1, {0, 0}, 0.0, 6.5, params),
      straight_input(2, {20, 0}, M_PI, 6.5, params)};
  auto sol = solve_subgraph(build_problem(inputs, params));
  CHECK_FALSE(sol.fallback);
  CHECK(sol.consensus_residual < 1e-3);
  REQUIRE(sol.plans.size() == 2);
  CHECK(plan_pair_min_distance(sol.plans[0], sol.plans[1]) >= params.d_safe - 1e-3);

  auto central = admm_dense::solve_centralized(sol.problem);
  REQUIRE(central.converged);
  CHECK(std::abs(sol.objective - central.objective) <=
        0.01 * std::max(1.0, std::abs(central.objective)));
}

TEST_CASE("solve: three-vehicle crossing matches the centralized QP within 2%") {
  SolverParams params;
  params.k_max = 800;
  params.max_outer = 14;
  params.outer_tol = 1e-4;
  std::vector<VehicleInput> inputs = {
      straight_input(1, {-8, -1.75}, 0.0, 6.0, params),
      straight_input(2, {1.75, -8}, M_PI / 2, 6.0, params),
      straight_input(3, {8, 1.75}, M_PI, 6.0, params)};
  auto sol = solve_subgraph(build_problem(inputs, params));
  CHECK_FALSE(sol.fallback);
  CHECK(sol.consensus_residual < 1e-3);
  auto central = admm_dense::solve_centralized(sol.problem);
  REQUIRE(central.converged);
  CHECK(std::abs(sol.objective - central.objective) <=
        0.02 * std::max(1.0, std::abs(central.objective)));
}

TEST_CASE("solve: identical problems give bitwise-identical plans") {
  SolverParams params;
  std::vector<VehicleInput> inputs = {
      straight_input(1, {0, 0}, 0.0, 6.5, params),
      straight_input(2, {18, 0.5}, M_PI, 6.5, params)};
  auto a = solve_subgraph(build_problem(inputs, params));
  auto b = solve_subgraph(build_problem(inputs, params));
  REQUIRE(a.plans.size() == b.plans.size());
  for (size_t i = 0; i < a.plans.size(); ++i)
    for (size_t t = 0; t < a.plans[i].states.size(); ++t)
      CHECK((a.plans[i].states[t] - b.plans[i].states[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve: non-finite iterates fall back to the nominal trajectory") {
  SolverParams params;
  params.sigma = 0.0;  // degenerate: the private-step scaling divides by sigma
  params.k_max = 3;
  params.max_outer = 2;
  auto p = build_problem({straight_input(1, {0, 0}, 0.0, 5.0, params)}, params);
  auto nominal = extract_nominal(p);
  auto sol = solve_subgraph(p);
  CHECK(sol.fallback);
  CHECK_FALSE(sol.converged);
  REQUIRE(sol.plans.size() == 1);
  for (size_t t = 0; t < sol.plans[0].states.size(); ++t)
    CHECK((sol.plans[0].states[t] - nominal[0].states[t]).cwiseAbs().maxCoeff() == 0.0);
}
