// Dense primal-dual interior-point QP solver, used only as a test oracle:
//   minimize    0.5 x'P x + q'x
//   subject to  A x = b,  G x <= h
// Mehrotra-style predictor-corrector on the reduced dense KKT system;
// adequate and accurate for the small problems the tests build.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <tuple>

namespace oracle {

struct QpResult {
  Eigen::VectorXd x;
  double objective = 0;
  int iterations = 0;
  bool converged = false;
};

inline QpResult solve_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                         int max_iter = 100, double tol = 1e-10) {
  const int n = static_cast<int>(P.rows());
  const int me = static_cast<int>(A.rows());
  const int mi = static_cast<int>(G.rows());

  QpResult res;
  if (mi == 0) {
    Eigen::MatrixXd kkt(n + me, n + me);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = P;
    if (me) {
      kkt.topRightCorner(n, me) = A.transpose();
      kkt.bottomLeftCorner(me, n) = A;
    }
    Eigen::VectorXd rhs(n + me);
    rhs.head(n) = -q;
    if (me) rhs.tail(me) = b;
    Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    res.x = sol.head(n);
    res.objective = 0.5 * res.x.dot(P * res.x) + q.dot(res.x);
    res.converged = true;
    return res;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd s = (h - G * x).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(mi);

  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd r_dual = P * x + q + G.transpose() * z;
    if (me) r_dual += A.transpose() * y;
    Eigen::VectorXd r_pri_e = me ? Eigen::VectorXd(A * x - b) : Eigen::VectorXd();
    Eigen::VectorXd r_pri_i = G * x + s - h;
    double mu = s.dot(z) / mi;
    double err = r_dual.lpNorm<Eigen::Infinity>() + r_pri_i.lpNorm<Eigen::Infinity>() +
                 (me ? r_pri_e.lpNorm<Eigen::Infinity>() : 0.0) + mu;
    if (err < tol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd zs = z.cwiseQuotient(s);
    Eigen::MatrixXd kkt(n + me, n + me);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = P + G.transpose() * zs.asDiagonal() * G;
    if (me) {
      kkt.topRightCorner(n, me) = A.transpose();
      kkt.bottomLeftCorner(me, n) = A;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);

    // Newton step for complementarity target s.*z -> comp:
    //   dz = comp./s - z - zs.*ds,  ds = -r_pri_i - G dx
    //   (P + G' Zs G) dx + A' dy = -r_dual + G'(z - comp./s - zs.*r_pri_i)
    auto solve_step = [&](const Eigen::VectorXd& comp) {
      Eigen::VectorXd rhs(n + me);
      rhs.head(n) = -r_dual + G.transpose() * (z - comp.cwiseQuotient(s) -
                                               zs.cwiseProduct(r_pri_i));
      if (me) rhs.tail(me) = -r_pri_e;
      Eigen::VectorXd sol = lu.solve(rhs);
      Eigen::VectorXd dx = sol.head(n);
      Eigen::VectorXd dy = me ? Eigen::VectorXd(sol.tail(me)) : Eigen::VectorXd();
      Eigen::VectorXd ds = -r_pri_i - G * dx;
      Eigen::VectorXd dz = comp.cwiseQuotient(s) - z - zs.cwiseProduct(ds);
      return std::make_tuple(dx, dy, ds, dz);
    };

    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (int i = 0; i < v.size(); ++i)
        if (dv[i] < 0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };

    auto [dx_aff, dy_aff, ds_aff, dz_aff] = solve_step(Eigen::VectorXd::Zero(mi));
    double alpha_aff = std::min(max_step(s, ds_aff), max_step(z, dz_aff));
    double mu_aff = (s + alpha_aff * ds_aff).dot(z + alpha_aff * dz_aff) / mi;
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);

    Eigen::VectorXd comp =
        Eigen::VectorXd::Constant(mi, sigma * mu) - ds_aff.cwiseProduct(dz_aff);
    auto [dx, dy, ds, dz] = solve_step(comp);
    double alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    x += alpha * dx;
    if (me) y += alpha * dy;
    s += alpha * ds;
    z += alpha * dz;
    res.iterations = it + 1;
  }
  res.x = x;
  res.objective = 0.5 * x.dot(P * x) + q.dot(x);
  return res;
}

}  // namespace oracle
