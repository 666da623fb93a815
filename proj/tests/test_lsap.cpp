#include <catch2/catch_amalgamated.hpp>

#include "fieldmap/association.hpp"
#include "fieldmap/random.hpp"
#include "oracles.hpp"

using namespace fieldmap;

namespace {

CostMatrix square(const Eigen::MatrixXd& m) {
  CostMatrix cm;
  cm.values = m;
  cm.rows_real = static_cast<int>(m.rows());
  cm.cols_real = static_cast<int>(m.cols());
  cm.dummy_cost = m.maxCoeff() * 10.0 + 1.0;
  return cm;
}

}  // namespace

TEST_CASE("identity-favoring matrix picks the diagonal") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(4, 4);
  m.diagonal().setZero();
  const Assignment a = solve_lsap(square(m));
  REQUIRE(a.matches.size() == 4);
  for (const Match& match : a.matches) {
    REQUIRE(match.u_index == match.v_index);
  }
  REQUIRE(a.total_cost() == 0.0);
}

TEST_CASE("3x3 example has the brute-force optimum") {
  Eigen::MatrixXd m(3, 3);
  m << 4, 1, 3,
       2, 0, 5,
       3, 2, 2;
  REQUIRE(oracles::brute_force_lsap_min(m) == 5.0);
  const Assignment a = solve_lsap(square(m));
  REQUIRE(a.total_cost() == 5.0);
  REQUIRE(a.matches[0].v_index == 1);
  REQUIRE(a.matches[1].v_index == 0);
  REQUIRE(a.matches[2].v_index == 2);
}

TEST_CASE("random matrices match the exhaustive minimum") {
  Rng rng(321);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = rng.uniform_int(2, 8);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) m(i, j) = rng.uniform(0.0, 100.0);
    }
    const Assignment a = solve_lsap(square(m));
    REQUIRE(a.total_cost() == Catch::Approx(oracles::brute_force_lsap_min(m)).margin(1e-9));
    // bijection
    std::vector<char> used_u(n, 0), used_v(n, 0);
    for (const Match& match : a.matches) {
      REQUIRE(!used_u[match.u_index]);
      REQUIRE(!used_v[match.v_index]);
      used_u[match.u_index] = used_v[match.v_index] = 1;
    }
  }
}

TEST_CASE("solver is deterministic") {
  Rng rng(77);
  Eigen::MatrixXd m(6, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) m(i, j) = rng.uniform_int(0, 3);  // many ties
  }
  const Assignment a = solve_lsap(square(m));
  const Assignment b = solve_lsap(square(m));
  REQUIRE(a.matches.size() == b.matches.size());
  for (std::size_t i = 0; i < a.matches.size(); ++i) {
    REQUIRE(a.matches[i].u_index == b.matches[i].u_index);
    REQUIRE(a.matches[i].v_index == b.matches[i].v_index);
  }
}

TEST_CASE("invalid inputs are rejected") {
  CostMatrix cm;
  cm.values = Eigen::MatrixXd::Ones(2, 3);
  cm.rows_real = 2;
  cm.cols_real = 3;
  REQUIRE_THROWS_AS(solve_lsap(cm), Error);  // not square

  Eigen::MatrixXd neg(2, 2);
  neg << 1.0, -0.5, 0.0, 2.0;
  REQUIRE_THROWS_AS(solve_lsap(square(neg)), Error);
}
