#include <doctest.h>

#include <random>

#include "planweave/errors.hpp"
#include "planweave/transport.hpp"
#include "support.hpp"

using namespace planweave;

TEST_CASE("transport matches vertex enumeration on random instances") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int m = size(rng), n = size(rng);
    std::vector<double> supply(m), demand(n), cost(m * n);
    double s = 0, d = 0;
    for (double& x : supply) s += (x = u(rng) + 0.01);
    for (double& x : demand) d += (x = u(rng) + 0.01);
    for (double& x : supply) x /= s;
    for (double& x : demand) x /= d;
    for (double& x : cost) x = u(rng);
    const auto plan = solve_transport(supply, demand, cost);
    CHECK(plan.cost == doctest::Approx(pwtest::lp_vertex_transport(supply, demand, cost)).epsilon(1e-9));
    std::vector<double> rows(m, 0.0), cols(n, 0.0);
    for (const auto& c : plan.flows) {
      CHECK(c.flow >= 0.0);
      rows[c.row] += c.flow;
      cols[c.col] += c.flow;
    }
    for (int i = 0; i < m; ++i) CHECK(rows[i] == doctest::Approx(supply[i]));
    for (int j = 0; j < n; ++j) CHECK(cols[j] == doctest::Approx(demand[j]));
  }
}

TEST_CASE("transport handles degenerate integer instances") {
  // Equal marginals with many ties in cost.
  std::vector<double> supply{0.25, 0.25, 0.25, 0.25}, demand{0.5, 0.5};
  std::vector<double> cost{1, 1, 1, 1, 0, 2, 2, 0};
  CHECK(solve_transport(supply, demand, cost).cost ==
        doctest::Approx(pwtest::lp_vertex_transport(supply, demand, cost)));
}

TEST_CASE("transport preconditions") {
  std::vector<double> a{0.5, 0.5}, b{1.0}, c{1.0, 2.0};
  CHECK(solve_transport(a, b, c).cost == doctest::Approx(1.5));
  std::vector<double> unbalanced{2.0};
  CHECK_THROWS(solve_transport(a, unbalanced, c));
  std::vector<double> negative{-0.5, 1.5};
  CHECK_THROWS(solve_transport(negative, b, c));
  std::vector<double> short_cost{1.0};
  CHECK_THROWS(solve_transport(a, b, short_cost));
}
