// Copyright 2026 The distpriv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Bottleneck optimal transport between finite distributions under the L1
// ground metric.
//
// Probability masses are integers over a common denominator, so every
// feasibility decision is a max-flow computation in exact integer
// arithmetic. Only the distances themselves are floating point, and
// thresholds are always chosen among realized pairwise distances.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <tuple>
#include <span>
#include <vector>

#include <boost/rational.hpp>

#include "distpriv/error.hpp"
#include "distpriv/model.hpp"

namespace distpriv {

using Rational = boost::rational<std::int64_t>;

class DiscreteDistribution {
 public:
  DiscreteDistribution(std::vector<Vector> points,
                       std::vector<std::int64_t> mass_num,
                       std::int64_t mass_den)
      : points_(std::move(points)), mass_num_(std::move(mass_num)),
        mass_den_(mass_den) {
    detail::require(!points_.empty(), ErrorCode::kInput,
                    "distribution needs at least one support point");
    detail::require(points_.size() == mass_num_.size(), ErrorCode::kInput,
                    "one mass per support point required");
    detail::require(mass_den_ > 0, ErrorCode::kInput,
                    "mass denominator must be positive");
    const auto m = points_.front().size();
    detail::require(m > 0, ErrorCode::kInput, "zero-dimensional support");
    __int128 total = 0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      detail::require(points_[i].size() == m, ErrorCode::kInput,
                      "support points have inconsistent dimensions");
      detail::require(points_[i].allFinite(), ErrorCode::kInput,
                      "support point not finite");
      detail::require(mass_num_[i] >= 0, ErrorCode::kInput,
                      "negative probability mass");
      total += mass_num_[i];
      for (std::size_t j = 0; j < i; ++j) {
        detail::require(points_[i] != points_[j], ErrorCode::kInput,
                        "support points must be distinct");
      }
    }
    detail::require(total == mass_den_, ErrorCode::kInput,
                    "masses must sum exactly to one");
  }

  const std::vector<Vector>& points() const { return points_; }
  const std::vector<std::int64_t>& mass_num() const { return mass_num_; }
  std::int64_t mass_den() const { return mass_den_; }
  std::size_t size() const { return points_.size(); }
  Eigen::Index dimension() const { return points_.front().size(); }
  Rational mass(std::size_t i) const { return Rational(mass_num_[i], mass_den_); }

 private:
  std::vector<Vector> points_;
  std::vector<std::int64_t> mass_num_;
  std::int64_t mass_den_;
};

struct CouplingEdge {
  std::size_t source;
  std::size_t target;
  Rational mass;
};

// Witness for (W, delta)-closeness: a partial coupling whose edges all move
// mass by at most max_retained_distance.
struct ClosenessCertificate {
  std::vector<CouplingEdge> coupling_edges;
  Rational retained_mass{0};
  double max_retained_distance = 0.0;
};

struct ClosenessResult {
  bool close = false;
  std::optional<ClosenessCertificate> certificate;
};

namespace detail {

inline std::int64_t checked_lcm(std::int64_t a, std::int64_t b) {
  const __int128 l = static_cast<__int128>(a / std::gcd(a, b)) * b;
  require(l <= std::numeric_limits<std::int64_t>::max(), ErrorCode::kInput,
          "common mass denominator overflows 64 bits");
  return static_cast<std::int64_t>(l);
}

// Dinic's algorithm on an integer-capacity network.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes) : adjacency_(nodes), level_(nodes),
                                        cursor_(nodes) {}

  std::size_t add_edge(std::size_t from, std::size_t to, std::int64_t cap) {
    adjacency_[from].push_back(edges_.size());
    edges_.push_back({to, cap});
    adjacency_[to].push_back(edges_.size());
    edges_.push_back({from, 0});
    return edges_.size() - 2;
  }

  std::int64_t run(std::size_t source, std::size_t sink) {
    std::int64_t total = 0;
    while (build_levels(source, sink)) {
      std::fill(cursor_.begin(), cursor_.end(), 0);
      while (std::int64_t pushed =
                 augment(source, sink, std::numeric_limits<std::int64_t>::max())) {
        total += pushed;
      }
    }
    return total;
  }

  // Flow currently carried by the forward edge with the given id.
  std::int64_t flow(std::size_t edge_id) const { return edges_[edge_id ^ 1].cap; }

 private:
  struct Edge {
    std::size_t to;
    std::int64_t cap;
  };

  bool build_levels(std::size_t source, std::size_t sink) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> frontier;
    level_[source] = 0;
    frontier.push(source);
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t id : adjacency_[u]) {
        const Edge& e = edges_[id];
        if (e.cap > 0 && level_[e.to] < 0) {
          level_[e.to] = level_[u] + 1;
          frontier.push(e.to);
        }
      }
    }
    return level_[sink] >= 0;
  }

  std::int64_t augment(std::size_t u, std::size_t sink, std::int64_t limit) {
    if (u == sink) return limit;
    for (std::size_t& k = cursor_[u]; k < adjacency_[u].size(); ++k) {
      const std::size_t id = adjacency_[u][k];
      Edge& e = edges_[id];
      if (e.cap <= 0 || level_[e.to] != level_[u] + 1) continue;
      const std::int64_t pushed = augment(e.to, sink, std::min(limit, e.cap));
      if (pushed > 0) {
        e.cap -= pushed;
        edges_[id ^ 1].cap += pushed;
        return pushed;
      }
    }
    return 0;
  }

  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<Edge> edges_;
  std::vector<int> level_;
  std::vector<std::size_t> cursor_;
};

struct TransportProblem {
  std::vector<std::int64_t> supply;
  std::vector<std::int64_t> demand;
  std::int64_t total = 0;
  std::vector<std::vector<double>> distance;
};

inline TransportProblem make_problem(const DiscreteDistribution& mu,
                                     const DiscreteDistribution& nu) {
  require(mu.dimension() == nu.dimension(), ErrorCode::kInput,
          "distributions live in different dimensions");
  TransportProblem p;
  p.total = checked_lcm(mu.mass_den(), nu.mass_den());
  const std::int64_t su = p.total / mu.mass_den();
  const std::int64_t sv = p.total / nu.mass_den();
  for (auto n : mu.mass_num()) p.supply.push_back(n * su);
  for (auto n : nu.mass_num()) p.demand.push_back(n * sv);
  p.distance.assign(mu.size(), std::vector<double>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) {
      p.distance[i][j] = (mu.points()[i] - nu.points()[j]).lpNorm<1>();
    }
  }
  return p;
}

struct FlowSolution {
  std::int64_t value = 0;
  std::vector<std::tuple<std::size_t, std::size_t, std::int64_t>> edges;
};

inline FlowSolution solve_within(const TransportProblem& p, double w) {
  const std::size_t a = p.supply.size();
  const std::size_t b = p.demand.size();
  const std::size_t source = a + b;
  const std::size_t sink = a + b + 1;
  MaxFlow graph(a + b + 2);
  for (std::size_t i = 0; i < a; ++i) {
    if (p.supply[i] > 0) graph.add_edge(source, i, p.supply[i]);
  }
  for (std::size_t j = 0; j < b; ++j) {
    if (p.demand[j] > 0) graph.add_edge(a + j, sink, p.demand[j]);
  }
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> middle;
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (p.distance[i][j] <= w && p.supply[i] > 0 && p.demand[j] > 0) {
        middle.emplace_back(
            i, j, graph.add_edge(i, a + j, std::min(p.supply[i], p.demand[j])));
      }
    }
  }
  FlowSolution out;
  out.value = graph.run(source, sink);
  for (const auto& [i, j, id] : middle) {
    if (const std::int64_t f = graph.flow(id); f > 0) out.edges.emplace_back(i, j, f);
  }
  return out;
}

// deficit <= delta * total, with delta read as a decimal input.
inline bool retains_enough(std::int64_t flow, std::int64_t total, double delta) {
  const long double deficit = static_cast<long double>(total - flow);
  return deficit <= static_cast<long double>(delta) * total + 1e-6L;
}

inline std::vector<double> candidate_thresholds(const TransportProblem& p) {
  std::vector<double> t{0.0};
  for (const auto& row : p.distance) t.insert(t.end(), row.begin(), row.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

inline double smallest_feasible_threshold(const TransportProblem& p,
                                          double delta) {
  const auto t = candidate_thresholds(p);
  std::size_t lo = 0;
  std::size_t hi = t.size() - 1;  // the largest distance always suffices
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (retains_enough(solve_within(p, t[mid]).value, p.total, delta)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return t[lo];
}

}  // namespace detail

// Maximum coupling mass placeable on pairs at L1 distance <= w.
inline Rational max_mass_within(const DiscreteDistribution& mu,
                                const DiscreteDistribution& nu, double w) {
  detail::require(w >= 0.0 && !std::isnan(w), ErrorCode::kInput,
                  "distance threshold must be nonnegative");
  const auto p = detail::make_problem(mu, nu);
  return Rational(detail::solve_within(p, w).value, p.total);
}

// Infinity-Wasserstein distance: the smallest threshold admitting a full
// coupling.
inline double winf_distance(const DiscreteDistribution& mu,
                            const DiscreteDistribution& nu) {
  const auto p = detail::make_problem(mu, nu);
  return detail::smallest_feasible_threshold(p, 0.0);
}

inline ClosenessResult is_w_delta_close(const DiscreteDistribution& mu,
                                        const DiscreteDistribution& nu,
                                        double w, double delta) {
  detail::require(w >= 0.0 && !std::isnan(w), ErrorCode::kInput,
                  "distance threshold must be nonnegative");
  detail::require(delta >= 0.0 && delta <= 1.0, ErrorCode::kInput,
                  "delta must lie in [0,1]");
  const auto p = detail::make_problem(mu, nu);
  const auto flow = detail::solve_within(p, w);
  ClosenessResult result;
  result.close = detail::retains_enough(flow.value, p.total, delta);
  if (!result.close) return result;
  ClosenessCertificate cert;
  for (const auto& [i, j, f] : flow.edges) {
    cert.coupling_edges.push_back({i, j, Rational(f, p.total)});
    cert.max_retained_distance =
        std::max(cert.max_retained_distance, p.distance[i][j]);
  }
  cert.retained_mass = Rational(flow.value, p.total);
  result.certificate = std::move(cert);
  return result;
}

// Smallest realized pairwise distance w with max_mass_within >= 1 - delta.
inline double min_w_for_delta(const DiscreteDistribution& mu,
                              const DiscreteDistribution& nu, double delta) {
  detail::require(delta >= 0.0 && delta <= 1.0, ErrorCode::kInput,
                  "delta must lie in [0,1]");
  const auto p = detail::make_problem(mu, nu);
  if (delta >= 1.0) return 0.0;
  return detail::smallest_feasible_threshold(p, delta);
}

// Closeness radius for queries within L1 distance c of their mean with
// probability 1 - delta/2: (delta_e1 + 2c, delta)-close.
inline double closeness_from_bounds(double delta_e1, double c) {
  detail::require(delta_e1 >= 0.0 && c >= 0.0, ErrorCode::kInput,
                  "closeness bounds must be nonnegative");
  return delta_e1 + 2.0 * c;
}

// Re-checks a certificate against the two marginals without the solver.
inline bool verify_certificate(const ClosenessCertificate& cert,
                               const DiscreteDistribution& mu,
                               const DiscreteDistribution& nu, double w) {
  std::vector<Rational> out(mu.size(), Rational(0));
  std::vector<Rational> in(nu.size(), Rational(0));
  Rational total(0);
  for (const auto& e : cert.coupling_edges) {
    if (e.source >= mu.size() || e.target >= nu.size()) return false;
    if (e.mass < 0) return false;
    const double d = (mu.points()[e.source] - nu.points()[e.target]).lpNorm<1>();
    if (d > cert.max_retained_distance || d > w) return false;
    out[e.source] += e.mass;
    in[e.target] += e.mass;
    total += e.mass;
  }
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (out[i] > mu.mass(i)) return false;
  }
  for (std::size_t j = 0; j < nu.size(); ++j) {
    if (in[j] > nu.mass(j)) return false;
  }
  return total == cert.retained_mass;
}

// Empirical distribution of the samples with duplicates merged. The
// resolution must be a multiple of the sample count.
inline DiscreteDistribution discretize_samples(std::span<const Vector> samples,
                                               std::int64_t mass_resolution) {
  detail::require(!samples.empty(), ErrorCode::kInput,
                  "need at least one sample");
  const auto count = static_cast<std::int64_t>(samples.size());
  detail::require(mass_resolution > 0 && mass_resolution % count == 0,
                  ErrorCode::kInput,
                  "mass resolution must be a positive multiple of the "
                  "sample count");
  const std::int64_t unit = mass_resolution / count;
  std::vector<Vector> points;
  std::vector<std::int64_t> masses;
  for (const Vector& x : samples) {
    auto it = std::find(points.begin(), points.end(), x);
    if (it == points.end()) {
      points.push_back(x);
      masses.push_back(unit);
    } else {
      masses[static_cast<std::size_t>(it - points.begin())] += unit;
    }
  }
  return DiscreteDistribution(std::move(points), std::move(masses),
                              mass_resolution);
}

// Approximates N(mean, cov) by density weights at the centers of an
// axis-aligned grid spanning +-6 standard deviations per axis. The masses
// are rounded to the resolution by largest remainder; empty cells dropped.
// This is an approximation, never an exact transport input.
inline DiscreteDistribution discretize_gaussian(const GaussianModel& model,
                                                int cells_per_axis,
                                                std::int64_t mass_resolution) {
  detail::require(cells_per_axis >= 1 && mass_resolution > 0,
                  ErrorCode::kInput, "bad grid parameters");
  const auto m = model.dimension();
  const Vector sd = model.cov().diagonal().cwiseMax(0.0).cwiseSqrt();
  std::vector<int> axis_cells(static_cast<std::size_t>(m));
  std::vector<Eigen::Index> active;
  for (Eigen::Index a = 0; a < m; ++a) {
    axis_cells[static_cast<std::size_t>(a)] = sd(a) > 0.0 ? cells_per_axis : 1;
    if (sd(a) > 0.0) active.push_back(a);
  }
  Matrix sub(static_cast<Eigen::Index>(active.size()),
             static_cast<Eigen::Index>(active.size()));
  for (std::size_t r = 0; r < active.size(); ++r) {
    for (std::size_t c = 0; c < active.size(); ++c) {
      sub(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          model.cov()(active[r], active[c]);
    }
  }
  Eigen::LLT<Matrix> llt(sub);
  detail::require(active.empty() || llt.info() == Eigen::Success,
                  ErrorCode::kNumeric,
                  "grid discretization needs a nonsingular covariance");

  std::vector<Vector> points;
  std::vector<double> weights;
  std::vector<int> index(static_cast<std::size_t>(m), 0);
  for (;;) {
    Vector x = model.mean();
    for (Eigen::Index a = 0; a < m; ++a) {
      const int cells = axis_cells[static_cast<std::size_t>(a)];
      if (cells > 1) {
        const double width = 12.0 * sd(a) / cells;
        x(a) += -6.0 * sd(a) + (index[static_cast<std::size_t>(a)] + 0.5) * width;
      }
    }
    Vector z(static_cast<Eigen::Index>(active.size()));
    for (std::size_t r = 0; r < active.size(); ++r) {
      z(static_cast<Eigen::Index>(r)) = x(active[r]) - model.mean()(active[r]);
    }
    const double q = active.empty() ? 0.0 : llt.matrixL().solve(z).squaredNorm();
    points.push_back(std::move(x));
    weights.push_back(std::exp(-0.5 * q));
    Eigen::Index a = 0;
    for (; a < m; ++a) {
      auto& i = index[static_cast<std::size_t>(a)];
      if (++i < axis_cells[static_cast<std::size_t>(a)]) break;
      i = 0;
    }
    if (a == m) break;
  }

  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::int64_t> masses(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / total * static_cast<double>(mass_resolution);
    masses[i] = static_cast<std::int64_t>(std::floor(exact));
    assigned += masses[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::size_t k = 0; assigned < mass_resolution; ++k, ++assigned) {
    ++masses[remainders[k % remainders.size()].second];
  }
  std::vector<Vector> kept_points;
  std::vector<std::int64_t> kept_masses;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] > 0) {
      kept_points.push_back(std::move(points[i]));
      kept_masses.push_back(masses[i]);
    }
  }
  return DiscreteDistribution(std::move(kept_points), std::move(kept_masses),
                              mass_resolution);
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const DiscreteDistribution& d) {
  json points = json::array();
  for (const auto& p : d.points()) points.push_back(vector_to_json(p));
  return json{{"points", points},
              {"mass_num", d.mass_num()},
              {"mass_den", d.mass_den()}};
}

inline DiscreteDistribution distribution_from_json(const json& j) {
  try {
    std::vector<Vector> points;
    for (const auto& p : j.at("points")) points.push_back(vector_from_json(p));
    return DiscreteDistribution(std::move(points),
                                j.at("mass_num").get<std::vector<std::int64_t>>(),
                                j.at("mass_den").get<std::int64_t>());
  } catch (const json::exception& e) {
    detail::fail(ErrorCode::kFormat,
                 std::string("bad distribution document: ") + e.what());
  }
}

inline json rational_to_json(const Rational& r) {
  return json{{"num", r.numerator()}, {"den", r.denominator()}};
}

inline json to_json(const ClosenessCertificate& cert) {
  json edges = json::array();
  for (const auto& e : cert.coupling_edges) {
    edges.push_back(json{{"source", e.source},
                         {"target", e.target},
                         {"mass", rational_to_json(e.mass)}});
  }
  return json{{"coupling_edges", edges},
              {"retained_mass", rational_to_json(cert.retained_mass)},
              {"max_retained_distance", cert.max_retained_distance}};
}

}  // namespace distpriv
