#pragma once

// Random wireless multi-hop topologies and their conflict graphs.
//
// A NetworkInstance bundles the connectivity graph (nodes within link range
// can talk) with a conflict graph whose vertices are the connectivity links.
// Link ids are the positions of edges in ConnectivityGraph::edges, which are
// kept sorted, so the link <-> conflict-vertex bijection is the identity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bpr/common.hpp"

namespace bpr {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double squared_distance(Point a, Point b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Undirected link, always stored with a < b.
struct Edge {
  NodeId a = 0;
  NodeId b = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Neighbor {
  NodeId node;
  LinkId link;
};

class ConnectivityGraph {
 public:
  ConnectivityGraph() = default;

  ConnectivityGraph(std::vector<Point> positions, std::vector<Edge> edges)
      : positions_(std::move(positions)), edges_(std::move(edges)) {
    const auto n = static_cast<NodeId>(positions_.size());
    for (auto& e : edges_) {
      if (e.a == e.b) throw std::invalid_argument("self-loop in connectivity graph");
      if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n)
        throw std::invalid_argument("edge endpoint out of range");
      if (e.a > e.b) std::swap(e.a, e.b);
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw std::invalid_argument("duplicate edge in connectivity graph");
    adjacency_.assign(positions_.size(), {});
    for (LinkId l = 0; l < num_links(); ++l) {
      adjacency_[edges_[l].a].push_back({edges_[l].b, l});
      adjacency_[edges_[l].b].push_back({edges_[l].a, l});
    }
    for (auto& adj : adjacency_)
      std::sort(adj.begin(), adj.end(),
                [](const Neighbor& x, const Neighbor& y) { return x.node < y.node; });
  }

  NodeId num_nodes() const { return static_cast<NodeId>(positions_.size()); }
  LinkId num_links() const { return static_cast<LinkId>(edges_.size()); }

  const std::vector<Point>& positions() const { return positions_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(LinkId l) const { return edges_.at(l); }
  std::span<const Neighbor> neighbors(NodeId v) const { return adjacency_.at(v); }
  std::size_t degree(NodeId v) const { return adjacency_.at(v).size(); }

  LinkId find_link(NodeId u, NodeId v) const {
    for (const auto& nb : adjacency_.at(u))
      if (nb.node == v) return nb.link;
    return -1;
  }

  std::size_t num_components() const {
    std::vector<char> seen(positions_.size(), 0);
    std::size_t components = 0;
    for (NodeId s = 0; s < num_nodes(); ++s) {
      if (seen[s]) continue;
      ++components;
      std::queue<NodeId> frontier;
      frontier.push(s);
      seen[s] = 1;
      while (!frontier.empty()) {
        const NodeId v = frontier.front();
        frontier.pop();
        for (const auto& nb : adjacency_[v]) {
          if (!seen[nb.node]) {
            seen[nb.node] = 1;
            frontier.push(nb.node);
          }
        }
      }
    }
    return components;
  }

  bool connected() const { return num_nodes() > 0 && num_components() == 1; }

  double mean_degree() const {
    return num_nodes() == 0 ? 0.0 : 2.0 * num_links() / num_nodes();
  }

  friend bool operator==(const ConnectivityGraph& x, const ConnectivityGraph& y) {
    return x.positions_ == y.positions_ && x.edges_ == y.edges_;
  }

 private:
  std::vector<Point> positions_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

// Sparse symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}.
// Off-diagonal entries are stored per row in ascending column order; rows of
// isolated vertices are entirely zero (diagonal included).
class NormalizedLaplacian {
 public:
  struct Entry {
    LinkId col;
    double value;
  };

  NormalizedLaplacian() = default;
  NormalizedLaplacian(std::vector<double> diagonal, std::vector<std::vector<Entry>> off)
      : diagonal_(std::move(diagonal)), off_diagonal_(std::move(off)) {}

  std::size_t size() const { return diagonal_.size(); }
  double diagonal(LinkId e) const { return diagonal_[e]; }
  std::span<const Entry> off_diagonal(LinkId e) const { return off_diagonal_[e]; }

  double at(LinkId r, LinkId c) const {
    if (r == c) return diagonal_.at(r);
    for (const auto& en : off_diagonal_.at(r))
      if (en.col == c) return en.value;
    return 0.0;
  }

  std::vector<double> to_dense() const {
    const std::size_t n = size();
    std::vector<double> m(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      m[r * n + r] = diagonal_[r];
      for (const auto& en : off_diagonal_[r]) m[r * n + en.col] = en.value;
    }
    return m;
  }

  static NormalizedLaplacian zero(std::size_t n) {
    return NormalizedLaplacian(std::vector<double>(n, 0.0),
                               std::vector<std::vector<Entry>>(n));
  }

 private:
  std::vector<double> diagonal_;
  std::vector<std::vector<Entry>> off_diagonal_;
};

// Coefficient 1/sqrt(d(e) d(u)) shared by the matrix and the local form of
// the graph convolution so both produce identical floating-point values.
inline double laplacian_coupling(std::size_t deg_e, std::size_t deg_u) {
  return 1.0 / std::sqrt(static_cast<double>(deg_e) * static_cast<double>(deg_u));
}

class ConflictGraph {
 public:
  ConflictGraph() = default;

  // Builds from an arbitrary list of conflicting link pairs.
  ConflictGraph(LinkId num_links, std::vector<std::pair<LinkId, LinkId>> conflicts)
      : adjacency_(static_cast<std::size_t>(num_links)) {
    for (auto& [u, v] : conflicts) {
      if (u == v) throw std::invalid_argument("self-conflict");
      if (u < 0 || v < 0 || u >= num_links || v >= num_links)
        throw std::invalid_argument("conflict endpoint out of range");
      if (u > v) std::swap(u, v);
    }
    std::sort(conflicts.begin(), conflicts.end());
    conflicts.erase(std::unique(conflicts.begin(), conflicts.end()), conflicts.end());
    conflicts_ = std::move(conflicts);
    for (const auto& [u, v] : conflicts_) {
      adjacency_[u].push_back(v);
      adjacency_[v].push_back(u);
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
    laplacian_ = build_laplacian();
  }

  LinkId num_vertices() const { return static_cast<LinkId>(adjacency_.size()); }
  const std::vector<std::pair<LinkId, LinkId>>& conflicts() const { return conflicts_; }
  std::span<const LinkId> neighbors(LinkId e) const { return adjacency_.at(e); }
  std::size_t degree(LinkId e) const { return adjacency_.at(e).size(); }
  const NormalizedLaplacian& laplacian() const { return laplacian_; }

  bool in_conflict(LinkId u, LinkId v) const {
    const auto& adj = adjacency_.at(u);
    return std::binary_search(adj.begin(), adj.end(), v);
  }

  double mean_degree() const {
    return adjacency_.empty() ? 0.0 : 2.0 * conflicts_.size() / adjacency_.size();
  }

  std::size_t max_degree() const {
    std::size_t m = 0;
    for (const auto& adj : adjacency_) m = std::max(m, adj.size());
    return m;
  }

  friend bool operator==(const ConflictGraph& x, const ConflictGraph& y) {
    return x.adjacency_.size() == y.adjacency_.size() && x.conflicts_ == y.conflicts_;
  }

 private:
  NormalizedLaplacian build_laplacian() const {
    const std::size_t n = adjacency_.size();
    std::vector<double> diag(n, 0.0);
    std::vector<std::vector<NormalizedLaplacian::Entry>> off(n);
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t de = adjacency_[e].size();
      if (de == 0) continue;
      diag[e] = 1.0;
      off[e].reserve(de);
      for (LinkId u : adjacency_[e])
        off[e].push_back({u, -laplacian_coupling(de, adjacency_[u].size())});
    }
    return NormalizedLaplacian(std::move(diag), std::move(off));
  }

  std::vector<std::pair<LinkId, LinkId>> conflicts_;
  std::vector<std::vector<LinkId>> adjacency_;
  NormalizedLaplacian laplacian_;
};

inline const NormalizedLaplacian& normalized_laplacian(const ConflictGraph& cg) {
  return cg.laplacian();
}

enum class ConflictModel { Interface, UnitDisk };

inline std::string to_string(ConflictModel m) {
  return m == ConflictModel::Interface ? "interface" : "unitdisk";
}

inline ConflictModel parse_conflict_model(std::string_view s) {
  if (s == "interface" || s == "line") return ConflictModel::Interface;
  if (s == "unitdisk" || s == "unit-disk" || s == "disk") return ConflictModel::UnitDisk;
  throw std::invalid_argument("unknown conflict model: " + std::string(s));
}

inline constexpr double kDefaultInterferenceRange = 0.67;

struct TopologyConfig {
  int num_nodes = 60;
  double node_density = 8.0 / 3.14159265358979323846;
  double link_range = 1.0;
  ConflictModel conflict_model = ConflictModel::UnitDisk;
  // Endpoint-to-endpoint distance; 0.67 yields a mean conflict degree of
  // about 34.6 at 60 nodes and density 8/pi.
  double interference_range = kDefaultInterferenceRange;
  std::uint64_t rng_seed = 0;
  int max_attempts = 1000;

  void validate() const {
    if (num_nodes < 2) throw std::invalid_argument("num_nodes must be >= 2");
    if (!(node_density > 0)) throw std::invalid_argument("node_density must be > 0");
    if (!(link_range > 0)) throw std::invalid_argument("link_range must be > 0");
    if (conflict_model == ConflictModel::UnitDisk && !(interference_range > 0))
      throw std::invalid_argument("interference_range must be > 0");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  }
};

// Two links conflict iff they share an endpoint.
inline ConflictGraph line_graph_conflicts(const ConnectivityGraph& g) {
  std::vector<std::pair<LinkId, LinkId>> pairs;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto nbs = g.neighbors(v);
    for (std::size_t i = 0; i < nbs.size(); ++i)
      for (std::size_t j = i + 1; j < nbs.size(); ++j)
        pairs.emplace_back(nbs[i].link, nbs[j].link);
  }
  return ConflictGraph(g.num_links(), std::move(pairs));
}

// Two links conflict iff some endpoint of one lies within interference_range
// of some endpoint of the other. Shared endpoints are at distance zero.
inline ConflictGraph unit_disk_conflicts(const ConnectivityGraph& g, double interference_range) {
  if (!(interference_range > 0)) throw std::invalid_argument("interference_range must be > 0");
  const NodeId n = g.num_nodes();
  const double r2 = interference_range * interference_range;
  std::vector<char> near(static_cast<std::size_t>(n) * n, 0);
  const auto& pos = g.positions();
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = 0; v < n; ++v)
      near[static_cast<std::size_t>(u) * n + v] = squared_distance(pos[u], pos[v]) <= r2;
  auto close = [&](NodeId u, NodeId v) { return near[static_cast<std::size_t>(u) * n + v] != 0; };

  std::vector<std::pair<LinkId, LinkId>> pairs;
  const auto& edges = g.edges();
  for (LinkId p = 0; p < g.num_links(); ++p) {
    for (LinkId q = p + 1; q < g.num_links(); ++q) {
      const Edge& e = edges[p];
      const Edge& f = edges[q];
      if (close(e.a, f.a) || close(e.a, f.b) || close(e.b, f.a) || close(e.b, f.b))
        pairs.emplace_back(p, q);
    }
  }
  return ConflictGraph(g.num_links(), std::move(pairs));
}

struct NetworkInstance {
  ConnectivityGraph graph;
  ConflictGraph conflicts;
  ConflictModel conflict_model = ConflictModel::UnitDisk;
  double link_range = 1.0;
  double interference_range = kDefaultInterferenceRange;
  std::uint64_t seed = 0;

  NodeId num_nodes() const { return graph.num_nodes(); }
  LinkId num_links() const { return graph.num_links(); }

  friend bool operator==(const NetworkInstance& x, const NetworkInstance& y) {
    return x.graph == y.graph && x.conflicts == y.conflicts &&
           x.conflict_model == y.conflict_model && x.link_range == y.link_range &&
           x.interference_range == y.interference_range && x.seed == y.seed;
  }
};

inline ConnectivityGraph disk_graph(std::vector<Point> positions, double link_range) {
  const double r2 = link_range * link_range;
  std::vector<Edge> edges;
  const auto n = static_cast<NodeId>(positions.size());
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (squared_distance(positions[u], positions[v]) <= r2) edges.push_back({u, v});
  return ConnectivityGraph(std::move(positions), std::move(edges));
}

inline ConflictGraph build_conflicts(const ConnectivityGraph& g, ConflictModel model,
                                     double interference_range) {
  return model == ConflictModel::Interface ? line_graph_conflicts(g)
                                           : unit_disk_conflicts(g, interference_range);
}

// Instance from explicit positions; edges follow the link-range rule.
inline NetworkInstance make_instance(std::vector<Point> positions, double link_range,
                                     ConflictModel model, double interference_range,
                                     std::uint64_t seed = 0) {
  NetworkInstance inst;
  inst.graph = disk_graph(std::move(positions), link_range);
  inst.conflicts = build_conflicts(inst.graph, model, interference_range);
  inst.conflict_model = model;
  inst.link_range = link_range;
  inst.interference_range = interference_range;
  inst.seed = seed;
  return inst;
}

// Uniform placement in a square of area num_nodes / density, resampled until
// the disk graph is connected.
inline NetworkInstance generate_network(const TopologyConfig& cfg) {
  cfg.validate();
  const double side = std::sqrt(cfg.num_nodes / cfg.node_density);
  Rng rng(cfg.rng_seed);
  std::uniform_real_distribution<double> coord(0.0, side);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::vector<Point> pos(static_cast<std::size_t>(cfg.num_nodes));
    for (auto& p : pos) {
      p.x = coord(rng);
      p.y = coord(rng);
    }
    ConnectivityGraph g = disk_graph(std::move(pos), cfg.link_range);
    if (!g.connected()) continue;
    NetworkInstance inst;
    inst.conflicts = build_conflicts(g, cfg.conflict_model, cfg.interference_range);
    inst.graph = std::move(g);
    inst.conflict_model = cfg.conflict_model;
    inst.link_range = cfg.link_range;
    inst.interference_range = cfg.interference_range;
    inst.seed = cfg.rng_seed;
    return inst;
  }
  throw std::runtime_error("generate_network: no connected instance after " +
                           std::to_string(cfg.max_attempts) + " attempts");
}

// JSON round trip. Doubles are written with 17 significant digits by
// nlohmann::json, so reloads are bit-exact.
inline nlohmann::json to_json(const NetworkInstance& inst) {
  nlohmann::json j;
  j["format"] = "bpr-instance";
  j["version"] = 1;
  j["seed"] = inst.seed;
  j["conflict_model"] = to_string(inst.conflict_model);
  j["link_range"] = inst.link_range;
  j["interference_range"] = inst.interference_range;
  auto& pos = j["positions"] = nlohmann::json::array();
  for (const auto& p : inst.graph.positions()) pos.push_back({p.x, p.y});
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : inst.graph.edges()) edges.push_back({e.a, e.b});
  auto& conf = j["conflicts"] = nlohmann::json::array();
  for (const auto& [u, v] : inst.conflicts.conflicts()) conf.push_back({u, v});
  return j;
}

inline NetworkInstance instance_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "bpr-instance")
    throw std::invalid_argument("not a bpr-instance document");
  NetworkInstance inst;
  std::vector<Point> pos;
  for (const auto& p : j.at("positions")) pos.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
  std::vector<std::pair<LinkId, LinkId>> conf;
  for (const auto& c : j.at("conflicts")) conf.emplace_back(c.at(0).get<LinkId>(), c.at(1).get<LinkId>());
  inst.graph = ConnectivityGraph(std::move(pos), std::move(edges));
  inst.conflicts = ConflictGraph(inst.graph.num_links(), std::move(conf));
  inst.conflict_model = parse_conflict_model(j.at("conflict_model").get<std::string>());
  inst.link_range = j.at("link_range").get<double>();
  inst.interference_range = j.at("interference_range").get<double>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  return inst;
}

}  // namespace bpr
