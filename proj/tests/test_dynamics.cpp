#include <doctest.h>

#include "amod/dynamics.hpp"
#include "amod/rng.hpp"
#include "oracles.hpp"

using namespace amod;

TEST_CASE("step: zero input at rest is an equilibrium") {
  DynamicsParams p;
  StateVec z{1.0, 2.0, 0.7, 0.0};
  StateVec z2 = step(z, {0.0, 0.0}, p);
  CHECK(z2.isApprox(z, 0.0));
}

TEST_CASE("step: straight-line kinematics") {
  DynamicsParams p;
  StateVec z{0.0, 0.0, 0.0, 2.0};
  StateVec z2 = step(z, {0.0, 0.0}, p);
  CHECK(z2[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(z2[1] == doctest::Approx(0.0));
  CHECK(z2[2] == doctest::Approx(0.0));
  CHECK(z2[3] == doctest::Approx(2.0));
}

TEST_CASE("step: steering limit rejected") {
  DynamicsParams p;
  CHECK_THROWS_AS(step({0, 0, 0, 1}, {0.0, M_PI / 2}, p), std::invalid_argument);
}

TEST_CASE("step: matches fine RK4 integration of the continuous model") {
  DynamicsParams p;
  p.dt = 0.01;  // one short step; the discrete update is first order in dt
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    StateVec z{rng.next_range(-50, 50), rng.next_range(-50, 50),
               rng.next_range(-3, 3), rng.next_range(1.0, 6.0)};
    ControlVec u{rng.next_range(-1.0, 1.0), rng.next_range(-0.1, 0.1)};
    StateVec mine = step(z, u, p);
    StateVec ref = oracle::rk4_kinematics(z, u, p, p.dt);
    for (int c = 0; c < 4; ++c) CHECK(std::abs(mine[c] - ref[c]) < 1e-3);
  }
}

TEST_CASE("linearize: analytic entries") {
  DynamicsParams p;
  auto lin = linearize({0, 0, 0, 0}, {0, 0}, p);
  CHECK(lin.A(0, 0) == 1.0);
  CHECK(lin.A(0, 1) == 0.0);
  CHECK(lin.A(0, 2) == 0.0);
  CHECK(lin.A(0, 3) == doctest::Approx(p.dt));
  CHECK(lin.B(3, 0) == doctest::Approx(p.dt));
}

TEST_CASE("linearize: matches central finite differences") {
  DynamicsParams p;
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    // stay away from the speed clamp where the update is non-smooth
    StateVec z{rng.next_range(-20, 20), rng.next_range(-20, 20),
               rng.next_range(-3, 3), rng.next_range(1.0, 8.0)};
    ControlVec u{rng.next_range(-1.5, 1.5), rng.next_range(-0.4, 0.4)};
    auto lin = linearize(z, u, p);
    Eigen::Matrix4d A_fd;
    Eigen::Matrix<double, 4, 2> B_fd;
    oracle::fd_jacobians(z, u, p, A_fd, B_fd);
    CHECK((lin.A - A_fd).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((lin.B - B_fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("linearize: first-order consistency improves under halved perturbations") {
  DynamicsParams p;
  StateVec z{1, -2, 0.4, 4.0};
  ControlVec u{0.8, 0.2};
  auto lin = linearize(z, u, p);
  double prev = -1;
  for (double eps : {1e-2, 5e-3, 2.5e-3}) {
    StateVec dz = eps * StateVec{0.3, -0.2, 0.5, 0.7};
    ControlVec du = eps * ControlVec{0.4, 0.3};
    StateVec lhs = step(z + dz, u + du, p);
    StateVec rhs = step(z, u, p) + lin.A * dz + lin.B * du;
    double err = (lhs - rhs).norm();
    if (prev >= 0) CHECK(err < prev / 3.0);  // O(eps^2): halving gives ~1/4
    prev = err;
  }
}

TEST_CASE("step: SE(2) equivariance under global rotation and translation") {
  DynamicsParams p;
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    StateVec z{rng.next_range(-10, 10), rng.next_range(-10, 10),
               rng.next_range(-2, 2), rng.next_range(0.5, 8)};
    ControlVec u{rng.next_range(-2, 2), rng.next_range(-0.4, 0.4)};
    double ang = rng.next_range(-3, 3), tx = rng.next_range(-5, 5), ty = rng.next_range(-5, 5);
    auto transform = [&](const StateVec& s) {
      StateVec out;
      out[0] = std::cos(ang) * s[0] - std::sin(ang) * s[1] + tx;
      out[1] = std::sin(ang) * s[0] + std::cos(ang) * s[1] + ty;
      out[2] = s[2] + ang;
      out[3] = s[3];
      return out;
    };
    StateVec a = step(transform(z), u, p);
    StateVec b = transform(step(z, u, p));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rollout: empty controls and fold identity") {
  DynamicsParams p;
  StateVec z{0, 0, 0, 0};
  auto traj = rollout(z, {}, p);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0] == z);

  Rng rng(5);
  std::vector<ControlVec> controls;
  for (int i = 0; i < 12; ++i)
    controls.push_back({rng.next_range(-2, 2), rng.next_range(-0.3, 0.3)});
  StateVec z0{1, 1, 0.2, 3.0};
  auto mine = rollout(z0, controls, p);
  REQUIRE(mine.size() == controls.size() + 1);
  StateVec acc = z0;  // definitional fold
  for (size_t i = 0; i < controls.size(); ++i) {
    acc = step(acc, controls[i], p);
    CHECK((mine[i + 1] - acc).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("rollout: zero controls at rest stays constant") {
  DynamicsParams p;
  auto traj = rollout({3, 4, 1.0, 0.0}, std::vector<ControlVec>(5, {0, 0}), p);
  for (const auto& z : traj) CHECK((z - traj[0]).cwiseAbs().maxCoeff() == 0.0);
}
