#pragma once

// Sensing graph, bearing algebra and the bearing Laplacian.
//
// Agents are indexed 0..n-1 in this API. Leaders occupy 0..n_l-1 and
// followers n_l..n-1; scenario files and CSV output use 1-based ids, the
// conversion happens in scenario.hpp only. Stacked vectors follow the
// col(x_1, ..., x_n) convention: agent i owns entries [i*d, (i+1)*d).

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace bearing_forge {

inline constexpr double kDefaultSeparation = 1e-9;
inline constexpr double kLocalizabilityThreshold = 1e-10;

class SensingGraph {
 public:
  using Edge = std::pair<int, int>;

  SensingGraph(int agent_count, int dimension, int leader_count, const std::vector<Edge>& edges)
      : n_(agent_count), d_(dimension), n_l_(leader_count), neighbors_(static_cast<std::size_t>(agent_count)) {
    if (n_ < 3) throw Error(ErrorCode::DimensionMismatch, "sensing graph needs at least 3 agents");
    if (d_ < 2) throw Error(ErrorCode::DimensionMismatch, "ambient dimension must be at least 2");
    if (n_l_ < 1 || n_l_ >= n_) {
      throw Error(ErrorCode::DimensionMismatch, "leader count must satisfy 1 <= n_l < n");
    }
    for (const auto& [i, j] : edges) add_edge(i, j);
  }

  [[nodiscard]] int agent_count() const noexcept { return n_; }
  [[nodiscard]] int dimension() const noexcept { return d_; }
  [[nodiscard]] int leader_count() const noexcept { return n_l_; }
  [[nodiscard]] int follower_count() const noexcept { return n_ - n_l_; }
  [[nodiscard]] bool is_leader(int i) const noexcept { return i < n_l_; }

  [[nodiscard]] bool has_edge(int i, int j) const { return edges_.count({i, j}) > 0; }
  [[nodiscard]] const std::set<int>& neighbors(int i) const { return neighbors_.at(static_cast<std::size_t>(i)); }

  /// Ordered pairs, both orientations present.
  [[nodiscard]] const std::set<Edge>& edges() const noexcept { return edges_; }

  /// Each undirected edge once, with i < j.
  [[nodiscard]] std::vector<Edge> undirected_edges() const {
    std::vector<Edge> out;
    for (const auto& e : edges_) {
      if (e.first < e.second) out.push_back(e);
    }
    return out;
  }

 private:
  void add_edge(int i, int j) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "edge (" + std::to_string(i) + "," + std::to_string(j) + ") references a missing agent");
    }
    if (i == j) throw Error(ErrorCode::DimensionMismatch, "self-loop at agent " + std::to_string(i));
    edges_.insert({i, j});
    edges_.insert({j, i});
    neighbors_[static_cast<std::size_t>(i)].insert(j);
    neighbors_[static_cast<std::size_t>(j)].insert(i);
  }

  int n_;
  int d_;
  int n_l_;
  std::set<Edge> edges_;
  std::vector<std::set<int>> neighbors_;
};

/// Unit vector pointing from p_j to p_i.
inline VectorXd unit_bearing(const VectorXd& p_i, const VectorXd& p_j, double min_separation = kDefaultSeparation) {
  if (p_i.size() != p_j.size()) throw Error(ErrorCode::DimensionMismatch, "bearing endpoints differ in dimension");
  const VectorXd diff = p_i - p_j;
  const double dist = diff.norm();
  if (!(dist > min_separation)) {
    throw Error(ErrorCode::DegenerateBearing, "points coincide (separation " + std::to_string(dist) + ")");
  }
  return diff / dist;
}

/// Orthogonal projector I - g g^T onto the complement of g.
inline MatrixXd projector(const VectorXd& g) {
  if (std::abs(g.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::NonUnitInput, "projector needs a unit vector, got norm " + std::to_string(g.norm()));
  }
  return MatrixXd::Identity(g.size(), g.size()) - g * g.transpose();
}

/// Desired bearings g*_ij keyed by ordered pair. Setting (i,j) also sets
/// (j,i) to the negated vector, so the set is antisymmetric by construction.
class BearingSet {
 public:
  explicit BearingSet(int dimension) : d_(dimension) {}

  void set(int i, int j, const VectorXd& g) {
    if (g.size() != d_) throw Error(ErrorCode::DimensionMismatch, "bearing has wrong dimension");
    const double norm = g.norm();
    if (std::abs(norm - 1.0) > 1e-9) {
      throw Error(ErrorCode::NonUnitInput, "bearing (" + std::to_string(i) + "," + std::to_string(j) +
                                               ") has norm " + std::to_string(norm));
    }
    const VectorXd unit = g / norm;
    bearings_[{i, j}] = unit;
    bearings_[{j, i}] = -unit;
  }

  [[nodiscard]] bool contains(int i, int j) const { return bearings_.count({i, j}) > 0; }

  [[nodiscard]] const VectorXd& at(int i, int j) const {
    auto it = bearings_.find({i, j});
    if (it == bearings_.end()) {
      throw Error(ErrorCode::MissingBearing,
                  "no desired bearing for edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    return it->second;
  }

  [[nodiscard]] int dimension() const noexcept { return d_; }

  /// Derives every edge bearing from a concrete configuration (stacked n*d).
  static BearingSet from_positions(const SensingGraph& graph, const VectorXd& positions,
                                   double min_separation = kDefaultSeparation) {
    const int d = graph.dimension();
    if (positions.size() != graph.agent_count() * d) {
      throw Error(ErrorCode::DimensionMismatch, "stacked positions have wrong length");
    }
    BearingSet out(d);
    for (const auto& [i, j] : graph.undirected_edges()) {
      out.set(i, j, unit_bearing(positions.segment(i * d, d), positions.segment(j * d, d), min_separation));
    }
    return out;
  }

 private:
  int d_;
  std::map<std::pair<int, int>, VectorXd> bearings_;
};

struct BearingLaplacian {
  MatrixXd full;
  MatrixXd ll;
  MatrixXd lf;
  MatrixXd fl;
  MatrixXd ff;
  int dimension = 0;
  int leader_count = 0;
  int follower_count = 0;
};

inline BearingLaplacian build_bearing_laplacian(const SensingGraph& graph, const BearingSet& bearings) {
  const int n = graph.agent_count();
  const int d = graph.dimension();
  if (bearings.dimension() != d) throw Error(ErrorCode::DimensionMismatch, "bearing set dimension mismatch");

  BearingLaplacian out;
  out.dimension = d;
  out.leader_count = graph.leader_count();
  out.follower_count = graph.follower_count();
  out.full = MatrixXd::Zero(n * d, n * d);
  for (const auto& [i, j] : graph.edges()) {
    const MatrixXd p = projector(bearings.at(i, j));
    out.full.block(i * d, j * d, d, d) = -p;
    out.full.block(i * d, i * d, d, d) += p;
  }
  const int nl = graph.leader_count() * d;
  const int nf = graph.follower_count() * d;
  out.ll = out.full.topLeftCorner(nl, nl);
  out.lf = out.full.topRightCorner(nl, nf);
  out.fl = out.full.bottomLeftCorner(nf, nl);
  out.ff = out.full.bottomRightCorner(nf, nf);
  return out;
}

/// Cached factorization of B_ff for repeated target-formation queries.
class Localizer {
 public:
  explicit Localizer(const BearingLaplacian& laplacian)
      : fl_(laplacian.fl), d_(laplacian.dimension), follower_count_(laplacian.follower_count) {
    const double smin = linalg::min_singular_value(laplacian.ff);
    if (smin < kLocalizabilityThreshold) {
      throw Error(ErrorCode::NotLocalizable,
                  "B_ff is singular (smallest singular value " + std::to_string(smin) + ")");
    }
    lu_.compute(laplacian.ff);
  }

  /// p_f* = -B_ff^{-1} B_fl p_l*
  [[nodiscard]] VectorXd follower_positions(const VectorXd& leader_positions) const {
    if (leader_positions.size() != fl_.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "leader positions have wrong length");
    }
    return -lu_.solve(fl_ * leader_positions);
  }

  /// v_f* = 1_{n_f} (x) v_c
  [[nodiscard]] VectorXd follower_velocities(const VectorXd& common_velocity) const {
    if (common_velocity.size() != d_) throw Error(ErrorCode::DimensionMismatch, "v_c has wrong dimension");
    return common_velocity.replicate(follower_count_, 1);
  }

 private:
  MatrixXd fl_;
  int d_;
  int follower_count_;
  Eigen::PartialPivLU<MatrixXd> lu_;
};

struct TargetFormation {
  VectorXd positions;
  VectorXd velocities;
};

inline TargetFormation localize_followers(const BearingLaplacian& laplacian, const VectorXd& leader_positions,
                                          const VectorXd& common_velocity) {
  const Localizer loc(laplacian);
  return {loc.follower_positions(leader_positions), loc.follower_velocities(common_velocity)};
}

}  // namespace bearing_forge
