#include "shine/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shine {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Potential-based Hungarian algorithm on an n x m matrix with n <= m.
// Returns the minimum total cost and fills row_to_col.
double hungarian(const std::vector<std::vector<double>>& a,
                 std::vector<int>& row_to_col) {
  const int n = static_cast<int>(a.size());
  const int m = n == 0 ? 0 : static_cast<int>(a[0].size());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  row_to_col.assign(n, -1);
  double total = 0.0;
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) {
      row_to_col[p[j] - 1] = j - 1;
      total += a[p[j] - 1][j - 1];
    }
  }
  return total;
}

// Minimum cost of assigning min(|rows|, |cols|) pairs within the given
// index subsets.
double optimal_cost(const std::vector<std::vector<double>>& cost,
                    const std::vector<int>& rows,
                    const std::vector<int>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  std::vector<std::vector<double>> sub;
  const bool transpose = rows.size() > cols.size();
  const auto& outer = transpose ? cols : rows;
  const auto& inner = transpose ? rows : cols;
  sub.reserve(outer.size());
  for (int oi : outer) {
    std::vector<double> row;
    row.reserve(inner.size());
    for (int ii : inner) {
      row.push_back(transpose ? cost[ii][oi] : cost[oi][ii]);
    }
    sub.push_back(std::move(row));
  }
  std::vector<int> unused;
  return hungarian(sub, unused);
}

}  // namespace

std::vector<std::vector<double>> match_cost(
    const std::vector<MomentPrediction>& preds,
    const std::vector<MomentSpan>& gts, const BaseLossConfig& cfg) {
  if (preds.empty()) {
    throw Error(Errc::empty_predictions, "no moment predictions to match");
  }
  if (gts.empty()) {
    throw Error(Errc::empty_matrix, "no ground-truth spans to match");
  }
  for (const auto& p : preds) {
    if (p.p_foreground < 0.0 || p.p_foreground > 1.0 || p.p_background < 0.0 ||
        p.p_background > 1.0 ||
        std::abs(p.p_foreground + p.p_background - 1.0) > 1e-9) {
      throw Error(Errc::bad_weights,
                  "class probabilities must be in [0,1] and sum to 1");
    }
    if (p.span.width <= 0.0) {
      throw Error(Errc::degenerate_span, "predicted width must be positive");
    }
  }
  for (const auto& g : gts) {
    if (g.length() <= 0.0) {
      throw Error(Errc::degenerate_span, "ground-truth span must have length");
    }
  }

  std::vector<std::vector<double>> cost(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cost[i].resize(gts.size());
    MomentSpan pspan = from_center_width(preds[i].span);
    for (std::size_t j = 0; j < gts.size(); ++j) {
      CenterWidth gcw = to_center_width(gts[j]);
      double l1 = std::abs(preds[i].span.center - gcw.center) +
                  std::abs(preds[i].span.width - gcw.width);
      double g = giou_1d(pspan, gts[j]);
      cost[i][j] = cfg.lambda_cls * (-preds[i].p_foreground) +
                   cfg.lambda_l1 * l1 + cfg.lambda_giou * (1.0 - g);
    }
  }
  return cost;
}

Assignment solve(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0 || cost[0].empty()) {
    throw Error(Errc::empty_matrix, "cost matrix has no entries");
  }
  const int m = static_cast<int>(cost[0].size());
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != m) {
      throw Error(Errc::shape_mismatch, "cost matrix is ragged");
    }
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw Error(Errc::non_finite, "cost matrix entry is not finite");
      }
    }
  }

  std::vector<int> all_rows(n), all_cols(m);
  for (int i = 0; i < n; ++i) all_rows[i] = i;
  for (int j = 0; j < m; ++j) all_cols[j] = j;
  const double best = optimal_cost(cost, all_rows, all_cols);
  const double tol = 1e-9 * std::max(1.0, std::abs(best));

  // Greedy fix-and-check: accept the smallest (i, j) whose forced inclusion
  // still completes to an optimal assignment. Produces the lexicographically
  // smallest optimal pair list.
  Assignment out;
  std::vector<char> row_used(n, 0), col_used(m, 0);
  double fixed_cost = 0.0;
  const int k = std::min(n, m);
  for (int step = 0; step < k; ++step) {
    bool accepted = false;
    for (int i = 0; i < n && !accepted; ++i) {
      if (row_used[i]) continue;
      for (int j = 0; j < m && !accepted; ++j) {
        if (col_used[j]) continue;
        std::vector<int> rows, cols;
        for (int r = 0; r < n; ++r) {
          if (!row_used[r] && r != i) rows.push_back(r);
        }
        for (int c = 0; c < m; ++c) {
          if (!col_used[c] && c != j) cols.push_back(c);
        }
        double total = fixed_cost + cost[i][j] + optimal_cost(cost, rows, cols);
        if (total <= best + tol) {
          out.pairs.emplace_back(i, j);
          row_used[i] = 1;
          col_used[j] = 1;
          fixed_cost += cost[i][j];
          accepted = true;
        }
      }
    }
  }
  out.total_cost = fixed_cost;
  return out;
}

}  // namespace shine
