#pragma once

#include <span>
#include <vector>

namespace planweave {

struct TransportCell {
  std::size_t row;
  std::size_t col;
  double flow;
};

struct TransportPlan {
  double cost = 0.0;
  std::vector<TransportCell> flows;  // basic cells with positive flow
  std::size_t pivots = 0;
};

/// Exact solution of the balanced transportation problem
///   min sum_ij T_ij C_ij  s.t.  T 1 = supply, T^T 1 = demand, T >= 0
/// by the transportation simplex (north-west corner start, MODI potentials).
/// `cost` is row-major supply.size() x demand.size(). Supplies and demands
/// must be non-negative with equal totals (relative tolerance 1e-9); the
/// demand side is rescaled to the supply total before solving.
TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand,
                              std::span<const double> cost);

}  // namespace planweave
