#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "amod/dynamics.hpp"
#include "amod/geometry.hpp"

// Decentralized trajectory optimization for one planning group.
//
// Each vehicle solves a tracking LQR coupled to its neighbors through
// inequality rows handled by consensus dual ascent:
//   block [1]  - private box rows (control and speed bounds), no copies;
//   block [2,i]- collision half-plane rows owned by vehicle i, replicated on
//                every neighbor, which drives the per-iteration message
//                exchange.
// All inequality rows are oriented "row <= 0", so every dual is feasible on
// the nonnegative orthant and the dual projection is a componentwise clamp.
// Per-block step sizes follow gamma_b = 1/(2*(sigma + 2*rho*deg_b)), where
// deg_b counts the neighbors holding a copy of the block (0 for private
// rows). The primal step minimizes the host tracking cost plus
// sum_b ||J_b dz + r_b||^2 / (2*(sigma + 2*rho*deg_b)) subject to the
// linearized dynamics, solved exactly by a Riccati sweep whose gains are
// prepared once per outer pass.
namespace amod::admm {

struct Weights {
  Eigen::Vector4d state{10.0, 10.0, 1.0, 1.0};
  Eigen::Vector2d control{1.0, 10.0};
};

struct SolverParams {
  double sigma = 0.05;
  double rho = 0.01;
  int k_max = 300;       // inner consensus iterations per outer pass
  int max_outer = 8;     // linearization passes
  double outer_tol = 1e-3;  // m, trajectory change that ends the outer loop
  // Under-relaxation of the broadcast priors between outer passes; 1 is the
  // plain update, which 2-cycles on symmetric conflicts.
  double outer_relaxation = 0.5;
  double d_safe = 3.0;  // m, center-to-center separation
  Weights weights;
  DynamicsParams dyn;
  int horizon = 15;  // planning steps
  bool collect_trace = false;
};

// One collision half-plane row: -(nx, ny) . dpos(step) <= bound.
struct CollisionRow {
  int neighbor_id = -1;
  int step = 0;  // 1..horizon
  double nx = 0, ny = 0;
};

// One private box row: coef * dz[col] <= bound.
struct BoxRow {
  int col = 0;
  double coef = 1.0;
};

struct VehicleInput {
  int id = 0;
  StateVec z0;
  std::vector<StateVec> reference;  // horizon + 1 states
  std::vector<StateVec> prior;      // horizon + 1 broadcast states (first pass: the reference)
};

namespace detail {

struct LqrPrep {
  std::vector<Eigen::Matrix4d> P;                  // value Hessians, index tau = 0..T
  std::vector<Eigen::Matrix<double, 2, 4>> K;      // feedback gains, tau = 0..T-1
  std::vector<Eigen::Matrix2d> G_inv;              // (R + B'P B)^-1 per step
  std::vector<Eigen::Matrix4d> Qs;                 // augmented state Hessian, tau = 1..T
  std::vector<Eigen::Matrix2d> Rs;                 // augmented control Hessian, tau = 0..T-1
};

}  // namespace detail

struct VehicleProblem {
  int id = 0;
  std::vector<int> neighbors;  // sorted ids, clique within the group
  StateVec z0;
  std::vector<StateVec> nominal_states;      // T+1, dynamics-consistent
  std::vector<ControlVec> nominal_controls;  // T
  std::vector<StateVec> reference;           // T+1
  std::vector<StateVec> prior;               // T+1 broadcast states
  std::vector<Eigen::Matrix4d> A;            // T
  std::vector<Eigen::Matrix<double, 4, 2>> B;
  std::vector<BoxRow> box_rows;
  Eigen::VectorXd k_box;
  std::vector<CollisionRow> coll_rows;  // grouped by neighbor (sorted), then step
  Eigen::VectorXd k_coll;
  Eigen::VectorXd grad;  // tracking-cost gradient at dz = 0
  int degenerate_normals = 0;
  detail::LqrPrep prep;

  int state_col(int step) const { return (step - 1) * 4; }             // step 1..T
  int control_col(int step, int horizon) const { return horizon * 4 + step * 2; }  // step 0..T-1
};

struct SubgraphProblem {
  SolverParams params;
  std::vector<VehicleProblem> vehicles;  // sorted by id
  std::vector<VehicleInput> inputs;      // retained for relinearization

  int nz() const { return params.horizon * 6; }
  int index_of(int id) const {
    for (size_t i = 0; i < vehicles.size(); ++i)
      if (vehicles[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("subgraph: unknown vehicle id " + std::to_string(id));
  }
  // Consensus degree of the shared row blocks (clique).
  int degree() const { return static_cast<int>(vehicles.size()) - 1; }
  double c_private() const { return params.sigma; }
  double c_shared() const { return params.sigma + 2.0 * params.rho * degree(); }
};

// Dual vectors for one row block; p/s/r/y/x slots match the block rows.
struct DualBlock {
  Eigen::VectorXd p, s, r, y, x;

  explicit DualBlock(int rows = 0) { resize(rows); }
  void resize(int rows) {
    p = Eigen::VectorXd::Zero(rows);
    s = Eigen::VectorXd::Zero(rows);
    r = Eigen::VectorXd::Zero(rows);
    y = Eigen::VectorXd::Zero(rows);
    x = Eigen::VectorXd::Zero(rows);
  }
  int rows() const { return static_cast<int>(p.size()); }
};

// Per-vehicle dual state: the private block plus one block per owner id
// (its own collision rows and its copies of every neighbor's rows).
struct VehicleDual {
  DualBlock box;
  std::map<int, DualBlock> coll;  // owner vehicle id -> block
};

struct SolveState {
  std::vector<VehicleDual> dual;  // iteration k+1 (being written)
  std::vector<VehicleDual> prev;  // iteration k snapshot = the exchanged messages
  std::vector<Eigen::VectorXd> dz;
  int iteration = 0;
};

struct TraceRecord {
  int outer = 0;
  int k = 0;
  double consensus_residual = 0;
  double objective = 0;
};

struct PlannedTrajectory {
  int id = 0;
  std::vector<StateVec> states;      // T+1, linear-model consistent
  std::vector<ControlVec> controls;  // T
};

struct SubgraphSolution {
  std::vector<PlannedTrajectory> plans;
  double consensus_residual = 0;
  double objective = 0;
  bool converged = false;
  bool fallback = false;
  int outer_passes = 0;
  std::vector<TraceRecord> trace;
  SubgraphProblem problem;  // the final convexified problem the plans solve
};

namespace detail {

// Recovers the control sequence that reproduces a state sequence under the
// bicycle model (exact when the sequence is a rollout; clamped otherwise).
inline std::vector<ControlVec> controls_from_trajectory(const std::vector<StateVec>& z,
                                                        const DynamicsParams& dyn) {
  std::vector<ControlVec> u;
  for (size_t t = 0; t + 1 < z.size(); ++t) {
    double a = (z[t + 1][3] - z[t][3]) / dyn.dt;
    double delta = 0.0;
    if (z[t][3] > 1e-6) {
      double dtheta = wrap_angle(z[t + 1][2] - z[t][2]);
      delta = std::atan(dtheta * dyn.wheelbase / (z[t][3] * dyn.dt));
    }
    u.push_back(clamp_control({a, delta}, dyn));
  }
  return u;
}

inline double tracking_objective(const std::vector<PlannedTrajectory>& plans,
                                 const std::vector<VehicleProblem>& vehicles,
                                 const Weights& w) {
  double obj = 0;
  for (size_t i = 0; i < plans.size(); ++i) {
    const auto& ref = vehicles[i].reference;
    for (size_t t = 1; t < plans[i].states.size(); ++t) {
      StateVec d = plans[i].states[t] - ref[t];
      d[2] = wrap_angle(d[2]);
      obj += d.cwiseProduct(w.state).dot(d);
    }
    for (const auto& u : plans[i].controls) obj += u.cwiseProduct(w.control).dot(u);
  }
  return obj;
}

inline void prepare_lqr(VehicleProblem& v, const SubgraphProblem& p) {
  const int T = p.params.horizon;
  const double c1 = p.c_private();
  const double c2 = p.vehicles.size() > 1 ? p.c_shared() : p.c_private();
  LqrPrep& prep = v.prep;
  prep.Qs.assign(T, Eigen::Matrix4d::Zero());
  prep.Rs.assign(T, Eigen::Matrix2d::Zero());
  for (int t = 0; t < T; ++t) {
    prep.Qs[t] = (2.0 * p.params.weights.state).asDiagonal();
    prep.Rs[t] = (2.0 * p.params.weights.control).asDiagonal();
  }
  for (size_t r = 0; r < v.box_rows.size(); ++r) {
    const BoxRow& row = v.box_rows[r];
    double add = row.coef * row.coef / c1;
    if (row.col < 4 * T)
      prep.Qs[row.col / 4](row.col % 4, row.col % 4) += add;
    else {
      int cc = row.col - 4 * T;
      prep.Rs[cc / 2](cc % 2, cc % 2) += add;
    }
  }
  for (const CollisionRow& row : v.coll_rows) {
    Eigen::Matrix2d nn;
    nn << row.nx * row.nx, row.nx * row.ny, row.nx * row.ny, row.ny * row.ny;
    prep.Qs[row.step - 1].block<2, 2>(0, 0) += nn / c2;
  }
  prep.P.assign(T + 1, Eigen::Matrix4d::Zero());
  prep.K.assign(T, Eigen::Matrix<double, 2, 4>::Zero());
  prep.G_inv.assign(T, Eigen::Matrix2d::Zero());
  prep.P[T] = prep.Qs[T - 1];
  for (int t = T - 1; t >= 0; --t) {
    const auto& A = v.A[t];
    const auto& B = v.B[t];
    Eigen::Matrix2d G = prep.Rs[t] + B.transpose() * prep.P[t + 1] * B;
    Eigen::LLT<Eigen::Matrix2d> llt(G);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error(
          "lqr: control Hessian not positive definite at step " + std::to_string(t) +
          " (degenerate weights?)");
    prep.G_inv[t] = llt.solve(Eigen::Matrix2d::Identity());
    Eigen::Matrix<double, 2, 4> M = B.transpose() * prep.P[t + 1] * A;
    prep.K[t] = prep.G_inv[t] * M;
    Eigen::Matrix4d Qt = t >= 1 ? prep.Qs[t - 1] : Eigen::Matrix4d::Zero();
    prep.P[t] = Qt + A.transpose() * prep.P[t + 1] * A - prep.K[t].transpose() * G * prep.K[t];
    prep.P[t] = 0.5 * (prep.P[t] + prep.P[t].transpose());
  }
}

}  // namespace detail

// Builds the convexified group problem around the current broadcast priors.
// Nominal trajectories are dynamics-consistent rollouts of the controls
// recovered from each prior; collision normals come from the prior geometry
// of both vehicles of a pair, the offsets from the own nominal against the
// neighbor prior.
inline SubgraphProblem build_problem(const std::vector<VehicleInput>& inputs,
                                     const SolverParams& params) {
  const int T = params.horizon;
  if (T < 1) throw std::invalid_argument("build_problem: horizon must be >= 1");
  SubgraphProblem p;
  p.params = params;
  p.inputs = inputs;
  std::sort(p.inputs.begin(), p.inputs.end(),
            [](const VehicleInput& a, const VehicleInput& b) { return a.id < b.id; });
  for (const auto& in : p.inputs) {
    if (in.reference.size() != static_cast<size_t>(T + 1) ||
        in.prior.size() != static_cast<size_t>(T + 1))
      throw std::invalid_argument("build_problem: reference/prior must span horizon+1");
    VehicleProblem v;
    v.id = in.id;
    v.z0 = in.z0;
    v.reference = in.reference;
    v.prior = in.prior;
    v.nominal_controls = detail::controls_from_trajectory(in.prior, params.dyn);
    // re-anchor at the true initial state
    v.nominal_states = rollout(in.z0, v.nominal_controls, params.dyn);
    for (int t = 0; t < T; ++t) {
      auto lin = linearize(v.nominal_states[t], v.nominal_controls[t], params.dyn);
      v.A.push_back(lin.A);
      v.B.push_back(lin.B);
    }
    p.vehicles.push_back(std::move(v));
  }

  for (auto& v : p.vehicles) {
    for (const auto& o : p.vehicles)
      if (o.id != v.id) v.neighbors.push_back(o.id);

    // [1]: control bounds (4 rows/step) then speed bounds (2 rows/step)
    std::vector<double> bounds;
    for (int t = 0; t < T; ++t) {
      int col = v.control_col(t, T);
      const ControlVec& u = v.nominal_controls[t];
      v.box_rows.push_back({col, 1.0});
      bounds.push_back(params.dyn.a_max - u[0]);
      v.box_rows.push_back({col, -1.0});
      bounds.push_back(params.dyn.a_max + u[0]);
      v.box_rows.push_back({col + 1, 1.0});
      bounds.push_back(params.dyn.steer_max - u[1]);
      v.box_rows.push_back({col + 1, -1.0});
      bounds.push_back(params.dyn.steer_max + u[1]);
    }
    for (int t = 1; t <= T; ++t) {
      int col = v.state_col(t) + 3;
      double v_nom = v.nominal_states[t][3];
      v.box_rows.push_back({col, 1.0});
      bounds.push_back(params.dyn.v_max - v_nom);
      v.box_rows.push_back({col, -1.0});
      bounds.push_back(v_nom);
    }
    v.k_box = Eigen::Map<Eigen::VectorXd>(bounds.data(), bounds.size());

    // [2, own]: one row per (neighbor, step) against the neighbor's prior.
    // Normals are kept sign-continuous along the horizon: when two priors
    // cross mid-horizon the raw separation direction flips, which would make
    // the half-planes jointly infeasible, so the previous step's normal is
    // carried forward instead.
    std::vector<double> koff;
    for (int nid : v.neighbors) {
      const VehicleProblem& nb = p.vehicles[p.index_of(nid)];
      double last_nx = v.id < nid ? 1.0 : -1.0, last_ny = 0.0;
      bool have_normal = false;
      for (int t = 1; t <= T; ++t) {
        Vec2 pi{v.prior[t][0], v.prior[t][1]};
        Vec2 pj{nb.prior[t][0], nb.prior[t][1]};
        Vec2 diff = pi - pj;
        double d = norm(diff);
        CollisionRow row;
        row.neighbor_id = nid;
        row.step = t;
        if (d < 1e-9) {
          row.nx = last_nx;
          row.ny = last_ny;
          ++v.degenerate_normals;
        } else {
          row.nx = diff.x / d;
          row.ny = diff.y / d;
          if (have_normal && row.nx * last_nx + row.ny * last_ny < 0.0) {
            row.nx = last_nx;
            row.ny = last_ny;
          }
        }
        last_nx = row.nx;
        last_ny = row.ny;
        have_normal = true;
        Vec2 p_nom{v.nominal_states[t][0], v.nominal_states[t][1]};
        koff.push_back(row.nx * (p_nom.x - pj.x) + row.ny * (p_nom.y - pj.y) -
                       params.d_safe);
        v.coll_rows.push_back(row);
      }
    }
    v.k_coll = Eigen::Map<Eigen::VectorXd>(koff.data(), koff.size());

    v.grad = Eigen::VectorXd::Zero(p.nz());
    for (int t = 1; t <= T; ++t) {
      StateVec d = v.nominal_states[t] - v.reference[t];
      d[2] = wrap_angle(d[2]);
      v.grad.segment<4>(v.state_col(t)) = 2.0 * params.weights.state.cwiseProduct(d);
    }
    for (int t = 0; t < T; ++t)
      v.grad.segment<2>(v.control_col(t, T)) =
          2.0 * params.weights.control.cwiseProduct(v.nominal_controls[t]);
  }
  for (auto& v : p.vehicles) detail::prepare_lqr(v, p);
  return p;
}

inline SolveState init_state(const SubgraphProblem& p) {
  SolveState s;
  const int T = p.params.horizon;
  s.dual.resize(p.vehicles.size());
  s.dz.assign(p.vehicles.size(), Eigen::VectorXd::Zero(p.nz()));
  for (size_t i = 0; i < p.vehicles.size(); ++i) {
    const VehicleProblem& v = p.vehicles[i];
    s.dual[i].box.resize(static_cast<int>(v.box_rows.size()));
    s.dual[i].coll.emplace(v.id, DualBlock(static_cast<int>(v.coll_rows.size())));
    for (int nid : v.neighbors) {
      const VehicleProblem& nb = p.vehicles[p.index_of(nid)];
      s.dual[i].coll.emplace(nid, DualBlock(static_cast<int>(nb.coll_rows.size())));
    }
  }
  s.prev = s.dual;
  return s;
}

// Snapshot barrier: everything read across vehicles during one iteration
// comes from this copy.
inline void begin_iteration(SolveState& s) { s.prev = s.dual; }

// Consensus momenta (p), slack momenta (s) and aggregated residual (r) for
// vehicle vi's own rows: the private block and the collision block it owns.
inline void dual_update_target(const SubgraphProblem& p, SolveState& s, int vi) {
  const VehicleProblem& v = p.vehicles[vi];
  VehicleDual& d = s.dual[vi];
  const VehicleDual& prev = s.prev[vi];
  const double sigma = p.params.sigma, rho = p.params.rho;

  d.box.s = prev.box.s + sigma * (prev.box.y - prev.box.x);
  d.box.r = sigma * prev.box.x - (v.k_box + d.box.s);  // private rows: p == 0

  DualBlock& own = d.coll.at(v.id);
  const DualBlock& own_prev = prev.coll.at(v.id);
  if (own.rows() == 0) return;
  Eigen::VectorXd sum_diff = Eigen::VectorXd::Zero(own.rows());
  Eigen::VectorXd sum_plus = Eigen::VectorXd::Zero(own.rows());
  for (int nid : v.neighbors) {
    const Eigen::VectorXd& yj = s.prev[p.index_of(nid)].coll.at(v.id).y;
    if (yj.size() != own.rows())
      throw std::logic_error("admm: neighbor copy dimension mismatch");
    sum_diff += own_prev.y - yj;
    sum_plus += own_prev.y + yj;
  }
  own.p = own_prev.p + rho * sum_diff;
  own.s = own_prev.s + sigma * (own_prev.y - own_prev.x);
  own.r = sigma * own_prev.x + rho * sum_plus - (v.k_coll + own.p + own.s);
}

// Shortcut momenta for vehicle vi's copy of `owner`'s rows. Only the owner's
// broadcast y enters; every other member's copy carries the same value as
// ours, so their terms fold into the (2 deg - 1) coefficient.
inline void dual_update_surrounding(const SubgraphProblem& p, SolveState& s, int vi,
                                    int owner) {
  const double sigma = p.params.sigma, rho = p.params.rho;
  const double deg = static_cast<double>(p.degree());
  VehicleDual& d = s.dual[vi];
  DualBlock& blk = d.coll.at(owner);
  const DualBlock& mine = s.prev[vi].coll.at(owner);
  const Eigen::VectorXd& y_owner = s.prev[p.index_of(owner)].coll.at(owner).y;
  if (y_owner.size() != mine.y.size())
    throw std::logic_error("admm: owner block dimension mismatch");
  blk.p = mine.p + rho * (mine.y - y_owner);
  blk.s = mine.s + sigma * (mine.y - mine.x);
  blk.r = sigma * mine.x + rho * (2.0 * deg - 1.0) * mine.y + rho * y_owner -
          (blk.p + blk.s);  // copies carry no constraint offset
}

// Tracking LQR with the consensus proximal terms, solved exactly through the
// prepared Riccati gains. Requires the iteration's r vectors in s.dual.
inline Eigen::VectorXd primal_update_lqr(const SubgraphProblem& p, const SolveState& s,
                                         int vi) {
  const VehicleProblem& v = p.vehicles[vi];
  const detail::LqrPrep& prep = v.prep;
  const int T = p.params.horizon;
  const double c1 = p.c_private();
  const double c2 = p.vehicles.size() > 1 ? p.c_shared() : p.c_private();
  const VehicleDual& d = s.dual[vi];

  Eigen::VectorXd q = v.grad;
  for (size_t r = 0; r < v.box_rows.size(); ++r)
    q[v.box_rows[r].col] += v.box_rows[r].coef * d.box.r[r] / c1;
  const DualBlock& own = d.coll.at(v.id);
  for (size_t r = 0; r < v.coll_rows.size(); ++r) {
    const CollisionRow& row = v.coll_rows[r];
    int col = v.state_col(row.step);
    q[col] += -row.nx * own.r[r] / c2;
    q[col + 1] += -row.ny * own.r[r] / c2;
  }

  // backward affine pass
  std::vector<Eigen::Vector4d> pvec(T + 1, Eigen::Vector4d::Zero());
  std::vector<Eigen::Vector2d> kff(T, Eigen::Vector2d::Zero());
  pvec[T] = q.segment<4>(v.state_col(T));
  for (int t = T - 1; t >= 0; --t) {
    Eigen::Vector2d qu = q.segment<2>(v.control_col(t, T));
    Eigen::Vector2d m = v.B[t].transpose() * pvec[t + 1] + qu;
    kff[t] = prep.G_inv[t] * m;
    Eigen::Vector4d qs = t >= 1 ? Eigen::Vector4d(q.segment<4>(v.state_col(t)))
                                : Eigen::Vector4d::Zero();
    pvec[t] = qs + v.A[t].transpose() * pvec[t + 1] - prep.K[t].transpose() * m;
  }
  // forward rollout from dz0 = 0
  Eigen::VectorXd dz = Eigen::VectorXd::Zero(p.nz());
  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  for (int t = 0; t < T; ++t) {
    Eigen::Vector2d u = -prep.K[t] * z - kff[t];
    dz.segment<2>(v.control_col(t, T)) = u;
    z = v.A[t] * z + v.B[t] * u;
    dz.segment<4>(v.state_col(t + 1)) = z;
  }
  return dz;
}

// Local dual estimate and projection for vehicle vi's own blocks, given the
// fresh primal iterate.
inline void dual_update_target_estimates(const SubgraphProblem& p, SolveState& s, int vi,
                                         const Eigen::VectorXd& dz) {
  const VehicleProblem& v = p.vehicles[vi];
  const double c1 = p.c_private();
  const double c2 = p.vehicles.size() > 1 ? p.c_shared() : p.c_private();
  VehicleDual& d = s.dual[vi];

  Eigen::VectorXd jdz(v.box_rows.size());
  for (size_t r = 0; r < v.box_rows.size(); ++r)
    jdz[r] = v.box_rows[r].coef * dz[v.box_rows[r].col];
  d.box.y = (jdz + d.box.r) / c1;
  d.box.x = (d.box.s / p.params.sigma + d.box.y).cwiseMax(0.0);

  DualBlock& own = d.coll.at(v.id);
  if (own.rows() == 0) return;
  Eigen::VectorXd j2dz(v.coll_rows.size());
  for (size_t r = 0; r < v.coll_rows.size(); ++r) {
    const CollisionRow& row = v.coll_rows[r];
    int col = v.state_col(row.step);
    j2dz[r] = -row.nx * dz[col] - row.ny * dz[col + 1];
  }
  own.y = (j2dz + own.r) / c2;
  own.x = (own.s / p.params.sigma + own.y).cwiseMax(0.0);
}

// Estimate/projection shortcut for a copied block: no matrix product, the
// copy's rows do not touch this vehicle's decision.
inline void dual_update_surrounding_estimates(const SubgraphProblem& p, SolveState& s,
                                              int vi, int owner) {
  const double c2 = p.c_shared();
  DualBlock& blk = s.dual[vi].coll.at(owner);
  blk.y = blk.r / c2;
  blk.x = (blk.s / p.params.sigma + blk.y).cwiseMax(0.0);
}

inline double consensus_residual(const SubgraphProblem& p, const SolveState& s) {
  double worst = 0;
  for (size_t i = 0; i < p.vehicles.size(); ++i)
    for (int nid : p.vehicles[i].neighbors) {
      int j = p.index_of(nid);
      for (int owner : {p.vehicles[i].id, nid}) {
        const Eigen::VectorXd& yi = s.dual[i].coll.at(owner).y;
        const Eigen::VectorXd& yj = s.dual[j].coll.at(owner).y;
        if (yi.size() > 0)
          worst = std::max(worst, (yi - yj).cwiseAbs().maxCoeff());
      }
    }
  return worst;
}

// One bulk-synchronous consensus iteration: snapshot, then momenta ->
// primal -> estimates for every vehicle against the snapshot.
inline void inner_iteration(const SubgraphProblem& p, SolveState& s) {
  begin_iteration(s);
  for (size_t i = 0; i < p.vehicles.size(); ++i) {
    const int vi = static_cast<int>(i);
    dual_update_target(p, s, vi);
    for (int nid : p.vehicles[i].neighbors) dual_update_surrounding(p, s, vi, nid);
    s.dz[i] = primal_update_lqr(p, s, vi);
    dual_update_target_estimates(p, s, vi, s.dz[i]);
    for (int nid : p.vehicles[i].neighbors)
      dual_update_surrounding_estimates(p, s, vi, nid);
  }
  ++s.iteration;
}

inline std::vector<PlannedTrajectory> extract_nominal(const SubgraphProblem& p) {
  std::vector<PlannedTrajectory> out;
  for (const auto& v : p.vehicles) {
    PlannedTrajectory t;
    t.id = v.id;
    t.states = v.nominal_states;
    t.controls = v.nominal_controls;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<PlannedTrajectory> extract_plans(const SubgraphProblem& p,
                                                    const SolveState& s) {
  const int T = p.params.horizon;
  std::vector<PlannedTrajectory> plans;
  for (size_t i = 0; i < p.vehicles.size(); ++i) {
    const VehicleProblem& v = p.vehicles[i];
    PlannedTrajectory t;
    t.id = v.id;
    t.states.push_back(v.z0);
    for (int step = 1; step <= T; ++step)
      t.states.push_back(v.nominal_states[step] +
                         StateVec(s.dz[i].segment<4>(v.state_col(step))));
    for (int step = 0; step < T; ++step)
      t.controls.push_back(v.nominal_controls[step] +
                           ControlVec(s.dz[i].segment<2>(v.control_col(step, T))));
    plans.push_back(std::move(t));
  }
  return plans;
}

// Outer relinearization loop around the inner consensus iterations, with the
// private duals warm-started across passes and the shared blocks reset.
inline SubgraphSolution solve_subgraph(SubgraphProblem problem) {
  SubgraphSolution sol;
  const SolverParams params = problem.params;
  std::vector<VehicleInput> inputs = problem.inputs;
  std::vector<Eigen::VectorXd> warm_y_box, warm_x_box;
  std::vector<PlannedTrajectory> best;

  for (int outer = 1; outer <= params.max_outer; ++outer) {
    sol.outer_passes = outer;
    SolveState state = init_state(problem);
    if (!warm_y_box.empty())
      for (size_t i = 0; i < state.dual.size(); ++i) {
        if (state.dual[i].box.y.size() == warm_y_box[i].size()) {
          state.dual[i].box.y = warm_y_box[i];
          state.dual[i].box.x = warm_x_box[i];
        }
      }
    for (int k = 0; k < params.k_max; ++k) {
      inner_iteration(problem, state);
      if (params.collect_trace) {
        TraceRecord rec;
        rec.outer = outer;
        rec.k = k;
        rec.consensus_residual = consensus_residual(problem, state);
        rec.objective = detail::tracking_objective(extract_plans(problem, state),
                                                   problem.vehicles, params.weights);
        sol.trace.push_back(rec);
      }
    }

    bool finite = true;
    for (const auto& dz : state.dz)
      if (!dz.allFinite()) finite = false;
    if (!finite) {
      sol.fallback = true;
      sol.converged = false;
      if (best.empty()) best = extract_nominal(problem);
      break;
    }

    std::vector<PlannedTrajectory> plans = extract_plans(problem, state);
    double change = 0;
    for (size_t i = 0; i < plans.size(); ++i) {
      const auto& prior = problem.vehicles[i].prior;
      for (size_t t = 0; t < plans[i].states.size(); ++t) {
        change = std::max(change, std::abs(plans[i].states[t][0] - prior[t][0]));
        change = std::max(change, std::abs(plans[i].states[t][1] - prior[t][1]));
      }
    }
    best = std::move(plans);
    sol.consensus_residual = consensus_residual(problem, state);

    warm_y_box.clear();
    warm_x_box.clear();
    for (const auto& d : state.dual) {
      warm_y_box.push_back(d.box.y);
      warm_x_box.push_back(d.box.x);
    }

    if (change < params.outer_tol) {
      sol.converged = true;
      break;
    }
    if (outer == params.max_outer) break;

    // broadcast: next pass linearizes around the executed (under-relaxed)
    // version of the plan
    const double beta = std::min(std::max(params.outer_relaxation, 0.0), 1.0);
    for (size_t i = 0; i < inputs.size(); ++i) {
      auto& in = inputs[i];
      const PlannedTrajectory* mine = nullptr;
      for (const auto& t : best)
        if (t.id == in.id) mine = &t;
      const auto& nominal_u = problem.vehicles[problem.index_of(in.id)].nominal_controls;
      std::vector<ControlVec> blended;
      for (size_t t = 0; t < mine->controls.size(); ++t)
        blended.push_back(clamp_control(
            beta * mine->controls[t] + (1.0 - beta) * nominal_u[t], params.dyn));
      in.prior = rollout(in.z0, blended, params.dyn);
    }
    problem = build_problem(inputs, params);
  }

  sol.objective = detail::tracking_objective(best, problem.vehicles, params.weights);
  sol.plans = std::move(best);
  sol.problem = std::move(problem);
  return sol;
}

}  // namespace amod::admm
