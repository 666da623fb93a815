#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fieldmap/camera.hpp"
#include "fieldmap/error.hpp"
#include "fieldmap/landmark.hpp"

namespace fieldmap {

// ---------------------------------------------------------------------------
// Structural data association between two seed-keypoint sets (a stereo pair
// or two consecutive frames), framed as a linear sum assignment problem.
//
// For a node at (a, b), its axis-aligned neighbor sets over peers (c, d) are
//   left:   0 < a - c < delta  and  |d - b| < eps
//   right:  0 < c - a < delta  and  |d - b| < eps
//   top:    0 < b - d < delta  and  |c - a| < eps
//   bottom: 0 < d - b < delta  and  |c - a| < eps
// and the pairwise cost is
//   C = r C'(L_u, L_v) + r C'(R_u, R_v) + r C'(B_u, B_v) + r C'(T_u, T_v)
//       + |b - n|
// with C'(X, Y) the ratio of summed Euclidean distances from each node to its
// neighbors in X resp. Y. Terms with an empty X or Y contribute 0, so
// isolated seeds degrade to the vertical penalty alone.
// ---------------------------------------------------------------------------

struct BipartiteGraph {
  std::vector<SeedKeypoint> u_nodes;  // image A
  std::vector<SeedKeypoint> v_nodes;  // image B
};

struct NeighborSets {
  std::vector<SeedKeypoint> left, right, top, bottom;
  double delta = 0.0;
  double epsilon = 0.0;
};

inline NeighborSets neighbor_sets(const SeedKeypoint& node,
                                  const std::vector<SeedKeypoint>& peers, double delta,
                                  double epsilon) {
  NeighborSets sets;
  sets.delta = delta;
  sets.epsilon = epsilon;
  const double a = node.center.u;
  const double b = node.center.v;
  for (const SeedKeypoint& peer : peers) {
    const double c = peer.center.u;
    const double d = peer.center.v;
    const bool same_row = std::abs(d - b) < epsilon;
    const bool same_col = std::abs(c - a) < epsilon;
    if (same_row && 0.0 < a - c && a - c < delta) sets.left.push_back(peer);
    if (same_row && 0.0 < c - a && c - a < delta) sets.right.push_back(peer);
    if (same_col && 0.0 < b - d && b - d < delta) sets.top.push_back(peer);
    if (same_col && 0.0 < d - b && d - b < delta) sets.bottom.push_back(peer);
  }
  return sets;
}

enum class CostVariant {
  kLiteral,    // C' enters as the raw ratio (the printed formula)
  kDeviation,  // |1 - C'| per term (the "approximately equal" reading)
};

inline std::string to_string(CostVariant v) {
  return v == CostVariant::kLiteral ? "literal" : "deviation";
}

inline CostVariant cost_variant_from_string(const std::string& s) {
  if (s == "literal") return CostVariant::kLiteral;
  if (s == "deviation") return CostVariant::kDeviation;
  throw ConfigError("unknown cost variant: " + s);
}

namespace detail {

// Guard value for a zero denominator with a non-empty numerator; unreachable
// with strictly positive neighbor offsets but kept as a hard stop.
constexpr double kDegenerateTermCost = 1.0e6;

inline double distance_sum(const std::vector<SeedKeypoint>& set, const ImagePoint& origin) {
  double sum = 0.0;
  for (const SeedKeypoint& s : set) {
    sum += std::hypot(s.center.u - origin.u, s.center.v - origin.v);
  }
  return sum;
}

inline double cost_term(const std::vector<SeedKeypoint>& x, const ImagePoint& x_origin,
                        const std::vector<SeedKeypoint>& y, const ImagePoint& y_origin,
                        CostVariant variant) {
  if (x.empty() || y.empty()) return 0.0;
  const double num = distance_sum(x, x_origin);
  const double den = distance_sum(y, y_origin);
  if (den <= 0.0) return kDegenerateTermCost;
  const double ratio = num / den;
  return variant == CostVariant::kLiteral ? ratio : std::abs(1.0 - ratio);
}

}  // namespace detail

inline double structural_cost(const SeedKeypoint& u_node, const NeighborSets& u_sets,
                              const SeedKeypoint& v_node, const NeighborSets& v_sets, double r,
                              CostVariant variant = CostVariant::kLiteral) {
  double cost = std::abs(u_node.center.v - v_node.center.v);
  cost += r * detail::cost_term(u_sets.left, u_node.center, v_sets.left, v_node.center, variant);
  cost += r * detail::cost_term(u_sets.right, u_node.center, v_sets.right, v_node.center, variant);
  cost += r * detail::cost_term(u_sets.bottom, u_node.center, v_sets.bottom, v_node.center, variant);
  cost += r * detail::cost_term(u_sets.top, u_node.center, v_sets.top, v_node.center, variant);
  return cost;
}

struct MatchParams {
  double delta = 64.0;
  double epsilon = 16.0;
  double r = 16.0;
  double cost_threshold = 160.0;
  CostVariant variant = CostVariant::kLiteral;

  // The paper states no values; these tie the windows to the image scale and
  // put the ratio terms and the pixel penalty on a shared scale.
  static MatchParams defaults_for(const StereoCamera& cam) {
    MatchParams p;
    p.delta = 0.1 * cam.width;
    p.epsilon = 0.25 * p.delta;
    p.r = p.epsilon;
    p.cost_threshold = 2.0 * (4.0 * p.r + p.epsilon);
    p.variant = CostVariant::kLiteral;
    return p;
  }
};

struct CostMatrix {
  Eigen::MatrixXd values;  // square after padding
  int rows_real = 0;       // U count
  int cols_real = 0;       // V count
  double dummy_cost = 0.0;
  double r = 0.0;
};

inline CostMatrix build_cost_matrix(const BipartiteGraph& graph, const MatchParams& params) {
  const int n = static_cast<int>(graph.u_nodes.size());
  const int m = static_cast<int>(graph.v_nodes.size());
  if (n == 0 || m == 0) {
    throw EmptySide("build_cost_matrix: U has " + std::to_string(n) + " nodes, V has " +
                    std::to_string(m));
  }
  std::vector<NeighborSets> u_sets(n), v_sets(m);
  for (int i = 0; i < n; ++i) {
    u_sets[i] = neighbor_sets(graph.u_nodes[i], graph.u_nodes, params.delta, params.epsilon);
  }
  for (int j = 0; j < m; ++j) {
    v_sets[j] = neighbor_sets(graph.v_nodes[j], graph.v_nodes, params.delta, params.epsilon);
  }

  const int k = std::max(n, m);
  CostMatrix cm;
  cm.rows_real = n;
  cm.cols_real = m;
  cm.r = params.r;
  cm.values.resize(k, k);
  double max_entry = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double c = structural_cost(graph.u_nodes[i], u_sets[i], graph.v_nodes[j], v_sets[j],
                                       params.r, params.variant);
      cm.values(i, j) = c;
      max_entry = std::max(max_entry, c);
    }
  }
  // Rectangular problems are padded square; dummy matches come back as
  // unmatched nodes.
  cm.dummy_cost = 10.0 * max_entry + 1.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (i >= n || j >= m) cm.values(i, j) = cm.dummy_cost;
    }
  }
  return cm;
}

struct Match {
  int u_index = -1;
  int v_index = -1;
  double cost = 0.0;
};

struct Assignment {
  std::vector<Match> matches;
  std::vector<int> unmatched_u;
  std::vector<int> unmatched_v;

  double total_cost() const {
    double sum = 0.0;
    for (const Match& m : matches) sum += m.cost;
    return sum;
  }
};

namespace detail {

// Shortest augmenting path LSAP solver with potentials, O(n^3). Scans use
// strict < comparisons, so ties resolve to the lowest index and the result is
// deterministic. Indices are 1-based internally with a virtual 0 column.
inline std::vector<int> solve_square_assignment(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace detail

// Exact minimum-cost assignment on the padded matrix. Matches that land on a
// dummy row or column are reported through the unmatched lists.
inline Assignment solve_lsap(const CostMatrix& cm) {
  const int k = static_cast<int>(cm.values.rows());
  if (k != cm.values.cols()) {
    throw Error("solve_lsap: matrix must be square after padding");
  }
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double c = cm.values(i, j);
      if (!std::isfinite(c) || c < 0.0) {
        throw Error("solve_lsap: costs must be finite and non-negative");
      }
    }
  }
  const std::vector<int> row_to_col = detail::solve_square_assignment(cm.values);
  Assignment out;
  for (int i = 0; i < cm.rows_real; ++i) {
    const int j = row_to_col[i];
    if (j >= 0 && j < cm.cols_real) {
      out.matches.push_back(Match{i, j, cm.values(i, j)});
    } else {
      out.unmatched_u.push_back(i);
    }
  }
  std::vector<char> v_matched(cm.cols_real, 0);
  for (const Match& m : out.matches) v_matched[m.v_index] = 1;
  for (int j = 0; j < cm.cols_real; ++j) {
    if (!v_matched[j]) out.unmatched_v.push_back(j);
  }
  return out;
}

// Keeps only high-confidence matches: anything costlier than the threshold
// moves to the unmatched lists.
inline Assignment filter_by_cost(const Assignment& assignment, double threshold) {
  if (!(threshold > 0.0)) {
    throw Error("filter_by_cost: threshold must be positive");
  }
  Assignment out;
  out.unmatched_u = assignment.unmatched_u;
  out.unmatched_v = assignment.unmatched_v;
  for (const Match& m : assignment.matches) {
    if (m.cost > threshold) {
      out.unmatched_u.push_back(m.u_index);
      out.unmatched_v.push_back(m.v_index);
    } else {
      out.matches.push_back(m);
    }
  }
  std::sort(out.unmatched_u.begin(), out.unmatched_u.end());
  std::sort(out.unmatched_v.begin(), out.unmatched_v.end());
  return out;
}

// Declared feature-flow direction across the image pair: kLeftToRight means
// matched features may only drift toward larger u from A to B.
enum class TravelDirection { kAny, kLeftToRight, kRightToLeft };

inline std::string to_string(TravelDirection d) {
  switch (d) {
    case TravelDirection::kLeftToRight: return "left-to-right";
    case TravelDirection::kRightToLeft: return "right-to-left";
    default: return "any";
  }
}

// Removes matches that violate the camera motion assumptions: vertical
// displacement beyond max_vertical, or horizontal displacement whose sign
// contradicts the declared travel direction.
inline Assignment filter_by_motion(const Assignment& assignment, const BipartiteGraph& graph,
                                   double max_vertical, TravelDirection direction) {
  Assignment out;
  out.unmatched_u = assignment.unmatched_u;
  out.unmatched_v = assignment.unmatched_v;
  for (const Match& m : assignment.matches) {
    const ImagePoint& a = graph.u_nodes[m.u_index].center;
    const ImagePoint& b = graph.v_nodes[m.v_index].center;
    const double du = b.u - a.u;
    const double dv = std::abs(b.v - a.v);
    bool ok = dv <= max_vertical;
    if (direction == TravelDirection::kLeftToRight && du < 0.0) ok = false;
    if (direction == TravelDirection::kRightToLeft && du > 0.0) ok = false;
    if (ok) {
      out.matches.push_back(m);
    } else {
      out.unmatched_u.push_back(m.u_index);
      out.unmatched_v.push_back(m.v_index);
    }
  }
  std::sort(out.unmatched_u.begin(), out.unmatched_u.end());
  std::sort(out.unmatched_v.begin(), out.unmatched_v.end());
  return out;
}

// Descriptor-free baseline: mutual nearest neighbor in pixel space. Stands in
// for brute-force descriptor matching on scenes where no descriptors exist.
// Match cost is the pixel distance.
inline Assignment baseline_nn_match(const BipartiteGraph& graph, double max_dist) {
  const int n = static_cast<int>(graph.u_nodes.size());
  const int m = static_cast<int>(graph.v_nodes.size());
  Assignment out;
  auto nearest = [](const ImagePoint& q, const std::vector<SeedKeypoint>& nodes) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
      const double d = std::hypot(nodes[i].center.u - q.u, nodes[i].center.v - q.v);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return std::pair<int, double>(best, best_d);
  };
  std::vector<char> v_matched(m, 0);
  for (int i = 0; i < n; ++i) {
    const auto [j, d] = nearest(graph.u_nodes[i].center, graph.v_nodes);
    if (j < 0 || d > max_dist) {
      out.unmatched_u.push_back(i);
      continue;
    }
    const auto [back, back_d] = nearest(graph.v_nodes[j].center, graph.u_nodes);
    (void)back_d;
    if (back == i) {
      out.matches.push_back(Match{i, j, d});
      v_matched[j] = 1;
    } else {
      out.unmatched_u.push_back(i);
    }
  }
  for (int j = 0; j < m; ++j) {
    if (!v_matched[j]) out.unmatched_v.push_back(j);
  }
  return out;
}

inline nlohmann::json match_to_json(int frame_a, int frame_b, const Assignment& assignment,
                                    const MatchParams& params) {
  nlohmann::json matches = nlohmann::json::array();
  for (const Match& m : assignment.matches) {
    matches.push_back({{"u_index", m.u_index}, {"v_index", m.v_index}, {"cost", m.cost}});
  }
  return nlohmann::json{{"frame_a", frame_a},
                        {"frame_b", frame_b},
                        {"matches", matches},
                        {"unmatched_u", assignment.unmatched_u},
                        {"unmatched_v", assignment.unmatched_v},
                        {"params",
                         {{"delta", params.delta},
                          {"epsilon", params.epsilon},
                          {"r", params.r},
                          {"threshold", params.cost_threshold},
                          {"cost_variant", to_string(params.variant)}}}};
}

inline void write_match_json(const std::filesystem::path& path, int frame_a, int frame_b,
                             const Assignment& assignment, const MatchParams& params) {
  std::ofstream os(path);
  if (!os) {
    throw OutputIoError("cannot write match file: " + path.string());
  }
  os << match_to_json(frame_a, frame_b, assignment, params).dump(2) << "\n";
}

}  // namespace fieldmap
