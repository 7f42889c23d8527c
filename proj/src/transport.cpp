#include "planweave/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "planweave/errors.hpp"

namespace planweave {

namespace {

struct BasicCell {
  std::size_t row;
  std::size_t col;
  double flow;
};

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Spanning-tree view of the basis. Rows are nodes [0, m), columns [m, m+n).
class BasisTree {
 public:
  BasisTree(std::size_t m, std::size_t n, const std::vector<BasicCell>& basis)
      : m_(m), adj_(m + n) {
    for (std::size_t e = 0; e < basis.size(); ++e) {
      adj_[basis[e].row].push_back(e);
      adj_[m + basis[e].col].push_back(e);
    }
  }

  // Potentials with u[0] = 0 and u_i + v_j = c_ij on every basic cell.
  void potentials(const std::vector<BasicCell>& basis, std::span<const double> cost, std::size_t n,
                  std::vector<double>& u, std::vector<double>& v) const {
    std::vector<char> seen(adj_.size(), 0);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = 1;
    u[0] = 0.0;
    while (!q.empty()) {
      const std::size_t node = q.front();
      q.pop();
      for (std::size_t e : adj_[node]) {
        const auto& c = basis[e];
        const std::size_t rn = c.row, cn = m_ + c.col;
        const double cij = cost[c.row * n + c.col];
        if (node == rn && !seen[cn]) {
          v[c.col] = cij - u[c.row];
          seen[cn] = 1;
          q.push(cn);
        } else if (node == cn && !seen[rn]) {
          u[c.row] = cij - v[c.col];
          seen[rn] = 1;
          q.push(rn);
        }
      }
    }
  }

  // Basis edges on the tree path from column `col` to row `row`, in order.
  std::vector<std::size_t> path(std::size_t col, std::size_t row, const std::vector<BasicCell>& basis) const {
    const std::size_t start = m_ + col;
    std::vector<std::size_t> via(adj_.size(), kNone);
    std::vector<char> seen(adj_.size(), 0);
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty() && !seen[row]) {
      const std::size_t node = q.front();
      q.pop();
      for (std::size_t e : adj_[node]) {
        const std::size_t other = node < m_ ? m_ + basis[e].col : basis[e].row;
        if (!seen[other]) {
          seen[other] = 1;
          via[other] = e;
          q.push(other);
        }
      }
    }
    if (!seen[row]) throw Error("transport: basis is not a spanning tree");
    std::vector<std::size_t> edges;
    for (std::size_t node = row; node != start;) {
      const std::size_t e = via[node];
      edges.push_back(e);
      node = node < m_ ? m_ + basis[e].col : basis[e].row;
    }
    std::reverse(edges.begin(), edges.end());
    return edges;
  }

 private:
  std::size_t m_;
  std::vector<std::vector<std::size_t>> adj_;
};

}  // namespace

TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand,
                              std::span<const double> cost) {
  const std::size_t m = supply.size(), n = demand.size();
  if (m == 0 || n == 0) throw PreconditionError("transport: empty marginal");
  if (cost.size() != m * n) throw PreconditionError("transport: cost matrix has the wrong size");
  double total_a = 0, total_b = 0, cmax = 0;
  for (double x : supply) {
    if (!(x >= 0) || !std::isfinite(x)) throw PreconditionError("transport: negative or non-finite supply");
    total_a += x;
  }
  for (double x : demand) {
    if (!(x >= 0) || !std::isfinite(x)) throw PreconditionError("transport: negative or non-finite demand");
    total_b += x;
  }
  for (double c : cost) {
    if (!std::isfinite(c)) throw PreconditionError("transport: non-finite cost");
    cmax = std::max(cmax, std::abs(c));
  }
  if (total_a <= 0 || std::abs(total_a - total_b) > 1e-9 * std::max(total_a, total_b)) {
    throw PreconditionError("transport: unbalanced marginals");
  }

  std::vector<double> ra(supply.begin(), supply.end());
  std::vector<double> rb(demand.begin(), demand.end());
  for (double& x : rb) x *= total_a / total_b;

  // North-west corner start; degenerate cells stay in the basis with zero flow
  // so that it always has m + n - 1 cells forming a spanning tree.
  std::vector<BasicCell> basis;
  basis.reserve(m + n - 1);
  std::vector<char> is_basic(m * n, 0);
  for (std::size_t i = 0, j = 0;;) {
    const double f = std::min(ra[i], rb[j]);
    basis.push_back({i, j, f});
    is_basic[i * n + j] = 1;
    ra[i] -= f;
    rb[j] -= f;
    if (i == m - 1 && j == n - 1) break;
    if ((ra[i] <= rb[j] && i < m - 1) || j == n - 1) {
      ++i;
    } else {
      ++j;
    }
  }

  const double eps = 1e-12 * std::max(1.0, cmax);
  const double flow_eps = 1e-15 * total_a;
  std::vector<double> u(m), v(n);
  std::size_t pivots = 0, degenerate_run = 0;
  const std::size_t max_pivots = 50 * m * n + 1000;
  for (;;) {
    BasisTree tree(m, n, basis);
    tree.potentials(basis, cost, n, u, v);

    // Dantzig's rule; Bland's (first improving cell) after a run of degenerate pivots.
    const bool bland = degenerate_run > 50;
    std::size_t enter = kNone;
    double best = -eps;
    for (std::size_t idx = 0; idx < m * n && !(bland && enter != kNone); ++idx) {
      if (is_basic[idx]) continue;
      const double rc = cost[idx] - u[idx / n] - v[idx % n];
      if (rc < best) {
        best = rc;
        enter = idx;
      }
    }
    if (enter == kNone) break;
    if (++pivots > max_pivots) throw Error("transport: pivot limit exceeded");

    const std::size_t ei = enter / n, ej = enter % n;
    const auto cycle = tree.path(ej, ei, basis);
    // Edges alternate -, +, -, ... starting from the entering column.
    std::size_t leave = kNone;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const auto& c = basis[cycle[k]];
      const std::size_t lin = c.row * n + c.col;
      if (c.flow < theta ||
          (c.flow == theta && lin < basis[leave].row * n + basis[leave].col)) {
        theta = c.flow;
        leave = cycle[k];
      }
    }
    theta = std::max(theta, 0.0);
    degenerate_run = theta <= flow_eps ? degenerate_run + 1 : 0;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      double& f = basis[cycle[k]].flow;
      f = (k % 2 == 0) ? std::max(f - theta, 0.0) : f + theta;
    }
    is_basic[basis[leave].row * n + basis[leave].col] = 0;
    basis[leave] = {ei, ej, theta};
    is_basic[enter] = 1;
  }

  TransportPlan out;
  out.pivots = pivots;
  for (const auto& c : basis) {
    if (c.flow > 0) {
      out.cost += c.flow * cost[c.row * n + c.col];
      out.flows.push_back({c.row, c.col, c.flow});
    }
  }
  return out;
}

}  // namespace planweave
