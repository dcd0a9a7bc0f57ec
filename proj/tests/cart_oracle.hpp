#pragma once

// Brute-force CART reference used by the forest tests and the acceptance
// suite. Grows a fully independent tree by exhaustively recomputing every
// (feature, boundary) split from scratch with its own impurity formula
// (1 - sum p^2), keeping the first maximum in ascending (feature, threshold)
// order. A 1e-9 slack absorbs cross-implementation rounding on exact rational
// ties; genuinely distinct splits on these tiny datasets differ by far more.

#include <algorithm>
#include <memory>
#include <set>
#include <vector>

#include "insider/dataset.hpp"
#include "insider/matrix.hpp"

namespace cart_oracle {

struct Node {
  bool leaf = true;
  int feature = -1;
  double upper = 0.0;  // rows with value <= boundary-lower go left; this is hi
  double lower = 0.0;
  std::array<std::int64_t, 2> counts{0, 0};
  std::unique_ptr<Node> left, right;
};

inline double gini(std::int64_t c0, std::int64_t c1) {
  const double n = static_cast<double>(c0 + c1);
  const double p0 = static_cast<double>(c0) / n;
  const double p1 = static_cast<double>(c1) / n;
  return 1.0 - (p0 * p0 + p1 * p1);
}

inline std::unique_ptr<Node> grow(const insider::Matrix& x,
                                  const std::vector<insider::Label>& y,
                                  std::vector<std::size_t> rows, int depth,
                                  int max_depth) {
  auto node = std::make_unique<Node>();
  std::int64_t c0 = 0, c1 = 0;
  for (auto r : rows) (y[r] == insider::Label::Lawful ? c0 : c1)++;
  node->counts = {c0, c1};

  const bool depth_capped = max_depth >= 0 && depth >= max_depth;
  if (depth_capped || rows.size() < 2 || c0 == 0 || c1 == 0) return node;

  int best_f = -1;
  double best_lower = 0.0, best_upper = 0.0;
  double best_decrease = 0.0;
  const double n = static_cast<double>(rows.size());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::vector<double> distinct;
    for (auto r : rows) distinct.push_back(x(r, f));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t b = 0; b + 1 < distinct.size(); ++b) {
      std::int64_t l0 = 0, l1 = 0;
      for (auto r : rows)
        if (x(r, f) <= distinct[b]) (y[r] == insider::Label::Lawful ? l0 : l1)++;
      const std::int64_t r0 = c0 - l0, r1 = c1 - l1;
      const double decrease =
          gini(c0, c1) - (static_cast<double>(l0 + l1) * gini(l0, l1) +
                          static_cast<double>(r0 + r1) * gini(r0, r1)) /
                             n;
      if (decrease > best_decrease + 1e-9) {
        best_decrease = decrease;
        best_f = static_cast<int>(f);
        best_lower = distinct[b];
        best_upper = distinct[b + 1];
      }
    }
  }
  if (best_f < 0) return node;

  std::vector<std::size_t> left_rows, right_rows;
  for (auto r : rows)
    (x(r, static_cast<std::size_t>(best_f)) <= best_lower ? left_rows : right_rows)
        .push_back(r);
  node->leaf = false;
  node->feature = best_f;
  node->lower = best_lower;
  node->upper = best_upper;
  node->left = grow(x, y, std::move(left_rows), depth + 1, max_depth);
  node->right = grow(x, y, std::move(right_rows), depth + 1, max_depth);
  return node;
}

inline insider::Label predict(const Node& node, const insider::Matrix& x,
                              std::size_t row) {
  const Node* cur = &node;
  while (!cur->leaf) {
    cur = x(row, static_cast<std::size_t>(cur->feature)) <= cur->lower
              ? cur->left.get()
              : cur->right.get();
  }
  return cur->counts[1] >= cur->counts[0] ? insider::Label::Unlawful
                                          : insider::Label::Lawful;
}

inline std::unique_ptr<Node> grow_full(const insider::Matrix& x,
                                       const std::vector<insider::Label>& y) {
  std::vector<std::size_t> rows(x.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return grow(x, y, std::move(rows), 0, -1);
}

}  // namespace cart_oracle
