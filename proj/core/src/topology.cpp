#include "nnstd/topology.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "nnstd/errors.hpp"
#include "nnstd/rng.hpp"

namespace nnstd {

LayerTopology::LayerTopology(int in_width, int out_width,
                             std::span<const std::pair<int, int>> edges)
    : in_width_(in_width), out_width_(out_width) {
  if (in_width <= 0 || out_width <= 0)
    throw ConfigError("layer widths must be positive");
  if (static_cast<std::int64_t>(edges.size()) > possible_edges())
    throw ConfigError("more edges than source-target pairs");

  std::vector<std::pair<int, int>> sorted;  // (target, source)
  sorted.reserve(edges.size());
  for (auto [s, t] : edges) {
    if (s < 0 || s >= in_width)
      throw ConfigError("edge source " + std::to_string(s) + " outside [0, " +
                        std::to_string(in_width) + ")");
    if (t < 0 || t >= out_width)
      throw ConfigError("edge target " + std::to_string(t) + " outside [0, " +
                        std::to_string(out_width) + ")");
    sorted.emplace_back(t, s);
  }
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("duplicate edge");

  row_offsets_.assign(out_width_ + 1, 0);
  sources_.resize(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    ++row_offsets_[sorted[i].first + 1];
    sources_[i] = sorted[i].second;
  }
  std::partial_sum(row_offsets_.begin(), row_offsets_.end(), row_offsets_.begin());
}

bool LayerTopology::has_edge(int source, int target) const {
  auto run = sources_of(target);
  return std::binary_search(run.begin(), run.end(), source);
}

std::vector<std::pair<int, int>> LayerTopology::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(sources_.size());
  for_each_edge([&](int s, int t, int) { out.emplace_back(s, t); });
  return out;
}

NetworkTopology::NetworkTopology(std::vector<int> layer_widths,
                                 std::vector<LayerTopology> layers)
    : widths_(std::move(layer_widths)), layers_(std::move(layers)) {
  if (widths_.size() < 2) throw ConfigError("a network needs at least two layers");
  if (layers_.size() + 1 != widths_.size())
    throw ConfigError("layer count does not match widths");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].in_width() != widths_[k] || layers_[k].out_width() != widths_[k + 1])
      throw DimensionError("layer " + std::to_string(k) + " widths disagree with network");
  }
}

std::int64_t NetworkTopology::edge_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) n += l.edge_count();
  return n;
}

std::int64_t NetworkTopology::possible_edges() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) n += l.possible_edges();
  return n;
}

double er_edge_probability(double epsilon, int in_width, int out_width) {
  if (epsilon <= 0) throw ConfigError("epsilon must be positive");
  const double p = epsilon * (in_width + out_width) /
                   (static_cast<double>(in_width) * out_width);
  return std::min(p, 1.0);
}

namespace {

// One Bernoulli draw per potential edge, target-major. Each layer gets its
// own derived stream so layers can be sampled independently.
LayerTopology sample_layer(int in_width, int out_width, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(p * in_width * out_width * 1.05) + 16);
  for (int t = 0; t < out_width; ++t)
    for (int s = 0; s < in_width; ++s)
      if (rng.uniform() < p) edges.emplace_back(s, t);
  return LayerTopology(in_width, out_width, edges);
}

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw ConfigError("need at least input and output widths");
  for (int w : widths)
    if (w <= 0) throw ConfigError("layer widths must be positive");
}

}  // namespace

NetworkTopology er_init(const std::vector<int>& widths, const ErConfig& cfg) {
  check_widths(widths);
  if (cfg.epsilon <= 0) throw ConfigError("epsilon must be positive");
  std::vector<LayerTopology> layers;
  layers.reserve(widths.size() - 1);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const double p = er_edge_probability(cfg.epsilon, widths[k], widths[k + 1]);
    layers.push_back(sample_layer(widths[k], widths[k + 1], p, derive_seed(cfg.seed, k)));
  }
  return NetworkTopology(widths, std::move(layers));
}

NetworkTopology er_init_density(const std::vector<int>& widths, double density,
                                std::uint64_t seed) {
  check_widths(widths);
  if (density <= 0 || density > 1) throw ConfigError("density must be in (0, 1]");
  std::vector<LayerTopology> layers;
  layers.reserve(widths.size() - 1);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k)
    layers.push_back(sample_layer(widths[k], widths[k + 1], density, derive_seed(seed, k)));
  return NetworkTopology(widths, std::move(layers));
}

namespace {

// First m entries of a partial Fisher-Yates shuffle of v.
void take_prefix_sample(std::vector<std::int64_t>& v, std::int64_t m, Rng& rng) {
  const std::int64_t n = static_cast<std::int64_t>(v.size());
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(rng.below(n - i));
    std::swap(v[i], v[j]);
  }
  v.resize(m);
}

}  // namespace

NetworkTopology perturb(const NetworkTopology& t, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("perturbation fraction must be in (0, 1]");
  std::vector<LayerTopology> layers;
  layers.reserve(t.depth());
  for (int k = 0; k < t.depth(); ++k) {
    const LayerTopology& layer = t.layer(k);
    const std::int64_t count = layer.edge_count();
    if (count == 0)
      throw ConfigError("layer " + std::to_string(k) + " has no edges to perturb");
    const std::int64_t m =
        static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(count)));
    const std::int64_t empty = layer.possible_edges() - count;
    if (empty < m)
      throw ConfigError("layer " + std::to_string(k) + " has only " +
                        std::to_string(empty) + " empty positions, need " +
                        std::to_string(m));

    Rng rng(derive_seed(seed, k));

    // Draw order: removals first, then additions from the positions that were
    // empty before any removal. Freshly vacated slots are not refilled, so
    // the symmetric difference is exactly 2m.
    std::vector<std::int64_t> victims(count);
    std::iota(victims.begin(), victims.end(), 0);
    take_prefix_sample(victims, m, rng);

    std::vector<std::int64_t> holes;
    holes.reserve(empty);
    for (int tgt = 0; tgt < layer.out_width(); ++tgt) {
      auto run = layer.sources_of(tgt);
      std::size_t i = 0;
      for (int src = 0; src < layer.in_width(); ++src) {
        if (i < run.size() && run[i] == src) {
          ++i;
          continue;
        }
        holes.push_back(static_cast<std::int64_t>(tgt) * layer.in_width() + src);
      }
    }
    take_prefix_sample(holes, m, rng);

    std::vector<char> removed(count, 0);
    for (auto v : victims) removed[v] = 1;

    std::vector<std::pair<int, int>> edges;
    edges.reserve(count);
    layer.for_each_edge([&](int s, int tgt, int e) {
      if (!removed[e]) edges.emplace_back(s, tgt);
    });
    for (auto h : holes)
      edges.emplace_back(static_cast<int>(h % layer.in_width()),
                         static_cast<int>(h / layer.in_width()));

    layers.emplace_back(layer.in_width(), layer.out_width(), edges);
  }
  return NetworkTopology(t.layer_widths(), std::move(layers));
}

double density(const NetworkTopology& t) {
  const std::int64_t possible = t.possible_edges();
  return possible == 0 ? 0.0 : static_cast<double>(t.edge_count()) / possible;
}

NetworkTopology permute_hidden_layer(const NetworkTopology& t, int width_index,
                                     std::span<const int> perm) {
  if (width_index < 1 || width_index >= static_cast<int>(t.layer_widths().size()) - 1)
    throw ConfigError("width index " + std::to_string(width_index) +
                      " is not a hidden layer");
  const int width = t.layer_widths()[width_index];
  if (static_cast<int>(perm.size()) != width)
    throw DimensionError("permutation size does not match layer width");
  std::vector<char> seen(width, 0);
  for (int p : perm) {
    if (p < 0 || p >= width || seen[p])
      throw ConfigError("not a permutation of the layer positions");
    seen[p] = 1;
  }

  std::vector<LayerTopology> layers(t.layers());
  {
    const LayerTopology& in = t.layer(width_index - 1);
    std::vector<std::pair<int, int>> edges;
    edges.reserve(in.edge_count());
    in.for_each_edge([&](int s, int tgt, int) { edges.emplace_back(s, perm[tgt]); });
    layers[width_index - 1] = LayerTopology(in.in_width(), in.out_width(), edges);
  }
  {
    const LayerTopology& out = t.layer(width_index);
    std::vector<std::pair<int, int>> edges;
    edges.reserve(out.edge_count());
    out.for_each_edge([&](int s, int tgt, int) { edges.emplace_back(perm[s], tgt); });
    layers[width_index] = LayerTopology(out.in_width(), out.out_width(), edges);
  }
  return NetworkTopology(t.layer_widths(), std::move(layers));
}

void save_topology(const NetworkTopology& t, const std::filesystem::path& path,
                   const TopologyMeta& meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "nnstd.topo 1\n";
  out << "widths";
  for (int w : t.layer_widths()) out << ' ' << w;
  out << '\n';
  char eps[64];
  std::snprintf(eps, sizeof(eps), "%.17g", meta.epsilon);
  out << "epsilon " << eps << '\n';
  out << "seed " << meta.seed << '\n';
  out << "edges";
  for (int k = 0; k < t.depth(); ++k) out << ' ' << t.layer(k).edge_count();
  out << '\n';
  for (int k = 0; k < t.depth(); ++k) {
    out << "layer " << k << '\n';
    t.layer(k).for_each_edge([&](int s, int tgt, int) { out << s << ' ' << tgt << '\n'; });
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::string next_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ": unexpected end of file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

NetworkTopology load_topology(const std::filesystem::path& path, TopologyMeta* meta) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());

  if (next_line(in, path) != "nnstd.topo 1")
    throw ParseError(path.string() + ": not a topology file (bad header)");

  auto parse_tail = [&](const std::string& line, const std::string& key) {
    if (line.rfind(key + " ", 0) != 0)
      throw ParseError(path.string() + ": expected '" + key + "' line");
    return line.substr(key.size() + 1);
  };

  std::vector<int> widths;
  {
    std::istringstream ss(parse_tail(next_line(in, path), "widths"));
    int w;
    while (ss >> w) widths.push_back(w);
    if (widths.size() < 2 || !ss.eof())
      throw ParseError(path.string() + ": bad widths line");
    for (int w2 : widths)
      if (w2 <= 0) throw ParseError(path.string() + ": non-positive width");
  }

  TopologyMeta m;
  {
    std::istringstream ss(parse_tail(next_line(in, path), "epsilon"));
    if (!(ss >> m.epsilon)) throw ParseError(path.string() + ": bad epsilon line");
  }
  {
    std::istringstream ss(parse_tail(next_line(in, path), "seed"));
    if (!(ss >> m.seed)) throw ParseError(path.string() + ": bad seed line");
  }

  std::vector<std::int64_t> counts;
  {
    std::istringstream ss(parse_tail(next_line(in, path), "edges"));
    std::int64_t c;
    while (ss >> c) counts.push_back(c);
    if (counts.size() != widths.size() - 1 || !ss.eof())
      throw ParseError(path.string() + ": edge-count list does not match widths");
    for (auto c2 : counts)
      if (c2 < 0) throw ParseError(path.string() + ": negative edge count");
  }

  std::vector<LayerTopology> layers;
  layers.reserve(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const std::string header = next_line(in, path);
    if (header != "layer " + std::to_string(k))
      throw ParseError(path.string() + ": expected 'layer " + std::to_string(k) + "'");
    std::vector<std::pair<int, int>> edges;
    edges.reserve(counts[k]);
    for (std::int64_t i = 0; i < counts[k]; ++i) {
      std::istringstream ss(next_line(in, path));
      int s, t;
      if (!(ss >> s >> t) || !(ss >> std::ws).eof())
        throw ParseError(path.string() + ": layer " + std::to_string(k) +
                         ": malformed edge line");
      edges.emplace_back(s, t);
    }
    try {
      layers.emplace_back(widths[k], widths[k + 1], edges);
    } catch (const ConfigError& e) {
      throw ParseError(path.string() + ": layer " + std::to_string(k) + ": " + e.what());
    }
  }

  std::string trailing;
  while (std::getline(in, trailing)) {
    if (!trailing.empty() && trailing.back() == '\r') trailing.pop_back();
    if (!trailing.empty())
      throw ParseError(path.string() + ": trailing content after last layer");
  }

  if (meta) *meta = m;
  return NetworkTopology(widths, std::move(layers));
}

}  // namespace nnstd
