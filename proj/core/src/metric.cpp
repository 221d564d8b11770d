#include "nnstd/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "nnstd/errors.hpp"
#include "parallel.hpp"

namespace nnstd {

Assignment Assignment::identity(int n) {
  Assignment a;
  a.mapping.resize(n);
  for (int i = 0; i < n; ++i) a.mapping[i] = i;
  a.total_cost = 0.0;
  return a;
}

double ned(std::span<const int> g1, std::span<const int> g2) {
  if (g1.empty() && g2.empty()) return 0.0;
  std::size_t i = 0, j = 0, common = 0;
  while (i < g1.size() && j < g2.size()) {
    if (g1[i] == g2[j]) {
      ++common;
      ++i;
      ++j;
    } else if (g1[i] < g2[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const double uni = static_cast<double>(g1.size() + g2.size() - common);
  return static_cast<double>(g1.size() + g2.size() - 2 * common) / uni;
}

double ned(std::span<const NeuronId> g1, std::span<const NeuronId> g2) {
  std::vector<NeuronId> a(g1.begin(), g1.end()), b(g2.begin(), g2.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const double uni = static_cast<double>(a.size() + b.size() - common);
  return static_cast<double>(a.size() + b.size() - 2 * common) / uni;
}

// Shortest-augmenting-path assignment with dual potentials (the O(n^3)
// Jonker-Volgenant scheme). Columns are scanned in increasing order and a
// strict '<' decides the next pivot, so among equal-cost solutions the one
// reaching the lowest column first wins; that fixes a deterministic matching
// for tied cost matrices.
Assignment solve_assignment(const CostMatrix& c) {
  if (c.rows != c.cols) throw DimensionError("cost matrix must be square");
  const int n = c.rows;
  for (double v : c.data)
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError("cost matrix entries must be finite and non-negative");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);  // p[j]: row matched to column j

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
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

  Assignment a;
  a.mapping.resize(n);
  for (int j = 1; j <= n; ++j) a.mapping[j - 1] = p[j] - 1;
  for (int j = 0; j < n; ++j) a.total_cost += c(a.mapping[j], j);
  return a;
}

namespace {

// Input sets of every target neuron of l2, relabeled into network-1
// coordinates through the previous layer's matching and re-sorted.
std::vector<std::vector<int>> relabeled_inputs(const LayerTopology& l2,
                                               const Assignment& prev) {
  std::vector<std::vector<int>> sets(l2.out_width());
  for (int t = 0; t < l2.out_width(); ++t) {
    auto run = l2.sources_of(t);
    auto& set = sets[t];
    set.reserve(run.size());
    for (int s : run) set.push_back(prev.mapping[s]);
    std::sort(set.begin(), set.end());
  }
  return sets;
}

}  // namespace

CostMatrix cost_matrix(const LayerTopology& l1, const LayerTopology& l2,
                       const Assignment& prev, int workers) {
  if (l1.in_width() != l2.in_width() || l1.out_width() != l2.out_width())
    throw DimensionError("compared layers must have identical widths");
  if (static_cast<int>(prev.mapping.size()) != l1.in_width())
    throw DimensionError("previous assignment does not cover the input layer");

  const auto sets2 = relabeled_inputs(l2, prev);
  CostMatrix c(l1.out_width(), l2.out_width());
  detail::parallel_for(l1.out_width(), workers, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      auto in1 = l1.sources_of(i);
      for (int j = 0; j < c.cols; ++j) c(i, j) = ned(in1, sets2[j]);
    }
  });
  return c;
}

std::pair<Assignment, double> compare_layers(const LayerTopology& l1,
                                             const LayerTopology& l2,
                                             const Assignment& prev, bool labeled_outputs,
                                             int workers) {
  const CostMatrix c = cost_matrix(l1, l2, prev, workers);
  Assignment a;
  if (labeled_outputs) {
    a = Assignment::identity(c.rows);
    for (int j = 0; j < c.cols; ++j) a.total_cost += c(j, j);
  } else {
    a = solve_assignment(c);
  }
  const double normalized = a.total_cost / c.cols;
  return {std::move(a), normalized};
}

DistanceReport compare_networks(const NetworkTopology& n1, const NetworkTopology& n2,
                                int workers) {
  if (n1.layer_widths() != n2.layer_widths())
    throw DimensionError("compared networks must share layer widths");

  DistanceReport r;
  Assignment prev = Assignment::identity(n1.layer_widths()[0]);
  for (int k = 0; k < n1.depth(); ++k) {
    const bool labeled = k == n1.depth() - 1;
    auto [a, cost] = compare_layers(n1.layer(k), n2.layer(k), prev, labeled, workers);
    r.per_layer.push_back(cost);
    r.assignments.push_back(a);
    prev = std::move(a);
  }
  double sum = 0.0;
  for (double v : r.per_layer) sum += v;
  r.nnstd = sum / static_cast<double>(r.per_layer.size());
  return r;
}

Matrix pairwise_matrix(std::span<const NetworkTopology> ts, int layer, int workers) {
  const int n = static_cast<int>(ts.size());
  Matrix m(n, n);
  if (n == 0) return m;
  const int depth = ts[0].depth();
  if (layer < -1 || layer >= depth)
    throw ConfigError("layer index out of range for pairwise matrix");

  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) cells.emplace_back(i, j);

  detail::parallel_for(static_cast<int>(cells.size()), workers, [&](int lo, int hi) {
    for (int c = lo; c < hi; ++c) {
      auto [i, j] = cells[c];
      const DistanceReport r = compare_networks(ts[i], ts[j], 1);
      m(i, j) = layer < 0 ? r.nnstd : r.per_layer[layer];
    }
  });
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

std::string report_to_json(const DistanceReport& r) {
  nlohmann::ordered_json j;
  j["nnstd"] = r.nnstd;
  j["per_layer"] = r.per_layer;
  auto& arr = j["assignments"] = nlohmann::ordered_json::array();
  for (const auto& a : r.assignments) {
    nlohmann::ordered_json ja;
    ja["mapping"] = a.mapping;
    ja["total_cost"] = a.total_cost;
    arr.push_back(std::move(ja));
  }
  return j.dump(2) + "\n";
}

}  // namespace nnstd
