#include "sag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sag/csv.hpp"
#include "sag/errors.hpp"

namespace sag {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(NodeKind kind) {
    return kind == NodeKind::kSegment ? "segment" : "reservoir";
}

NodeKind node_kind_from_string(const std::string& text) {
    if (text == "segment") return NodeKind::kSegment;
    if (text == "reservoir") return NodeKind::kReservoir;
    throw SchemaError("unknown node kind '" + text + "'");
}

std::string NodeId::str() const {
    return to_string(kind) + " " + std::to_string(index);
}

std::string to_string(EdgeClass ec) {
    switch (ec) {
    case EdgeClass::kSegToSeg: return "seg_to_seg";
    case EdgeClass::kSegToRes: return "seg_to_res";
    case EdgeClass::kResToSeg: return "res_to_seg";
    }
    return "?";
}

EdgeClass edge_class_from_string(const std::string& text) {
    if (text == "seg_to_seg") return EdgeClass::kSegToSeg;
    if (text == "seg_to_res") return EdgeClass::kSegToRes;
    if (text == "res_to_seg") return EdgeClass::kResToSeg;
    throw SchemaError("unknown edge class '" + text + "'");
}

int NetworkTopology::linear_index(NodeId id) const {
    if (id.kind == NodeKind::kSegment) {
        if (id.index < 0 || id.index >= n_segments_) {
            throw UnknownNode("segment index " + std::to_string(id.index) +
                              " outside [0, " + std::to_string(n_segments_) + ")");
        }
        return id.index;
    }
    if (id.index < 0 || id.index >= n_reservoirs_) {
        throw UnknownNode("reservoir index " + std::to_string(id.index) +
                          " outside [0, " + std::to_string(n_reservoirs_) + ")");
    }
    return n_segments_ + id.index;
}

NetworkTopology NetworkTopology::build(int n_segments, int n_reservoirs,
                                       std::vector<DirectEdge> edges) {
    if (n_segments < 0 || n_reservoirs < 0) {
        throw ConfigError("node counts must be non-negative");
    }
    NetworkTopology topo;
    topo.n_segments_ = n_segments;
    topo.n_reservoirs_ = n_reservoirs;

    std::set<std::pair<int, int>> seen;
    for (const DirectEdge& e : edges) {
        const int src = topo.linear_index(e.source);  // throws UnknownNode
        const int dst = topo.linear_index(e.target);

        EdgeClass expected;
        if (e.source.kind == NodeKind::kSegment &&
            e.target.kind == NodeKind::kSegment) {
            expected = EdgeClass::kSegToSeg;
        } else if (e.source.kind == NodeKind::kSegment &&
                   e.target.kind == NodeKind::kReservoir) {
            expected = EdgeClass::kSegToRes;
        } else if (e.source.kind == NodeKind::kReservoir &&
                   e.target.kind == NodeKind::kSegment) {
            expected = EdgeClass::kResToSeg;
        } else {
            throw BadEdgeClass("edge " + e.source.str() + " -> " +
                               e.target.str() +
                               ": reservoir-to-reservoir links are not modeled");
        }
        if (e.edge_class != expected) {
            throw BadEdgeClass("edge " + e.source.str() + " -> " +
                               e.target.str() + " declared as " +
                               to_string(e.edge_class) + ", endpoints imply " +
                               to_string(expected));
        }
        if (!(e.stream_distance_m > 0.0) ||
            !std::isfinite(e.stream_distance_m)) {
            throw DataError("edge " + e.source.str() + " -> " + e.target.str() +
                            ": stream distance must be positive and finite");
        }
        if (!seen.insert({src, dst}).second) {
            throw DataError("duplicate edge " + e.source.str() + " -> " +
                            e.target.str());
        }
    }
    topo.edges_ = std::move(edges);
    topo.compute_reachability();
    return topo;
}

void NetworkTopology::compute_reachability() {
    const int v = node_count();
    out_.assign(v, {});
    std::vector<std::vector<std::pair<int, double>>> out_d(v);
    std::vector<int> indegree(v, 0);
    for (const DirectEdge& e : edges_) {
        const int src = linear_index(e.source);
        const int dst = linear_index(e.target);
        out_[src].push_back(dst);
        out_d[src].push_back({dst, e.stream_distance_m});
        ++indegree[dst];
    }

    // Kahn's algorithm: a topological order exists iff the graph is acyclic.
    std::vector<int> order;
    order.reserve(v);
    std::vector<int> frontier;
    for (int i = 0; i < v; ++i) {
        if (indegree[i] == 0) frontier.push_back(i);
    }
    while (!frontier.empty()) {
        int u = frontier.back();
        frontier.pop_back();
        order.push_back(u);
        for (int w : out_[u]) {
            if (--indegree[w] == 0) frontier.push_back(w);
        }
    }
    if (static_cast<int>(order.size()) != v) {
        throw CycleDetected("routing network contains a directed cycle");
    }

    // reach[u][w]: a directed path u -> ... -> w exists.  Filling in reverse
    // topological order makes each node a union of its successors.
    std::vector<std::vector<char>> reach(v, std::vector<char>(v, 0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int u = *it;
        for (int w : out_[u]) {
            reach[u][w] = 1;
            for (int x = 0; x < v; ++x) {
                if (reach[w][x]) reach[u][x] = 1;
            }
        }
    }

    seg_up_of_res_.assign(std::max(n_reservoirs_, 0), {});
    res_up_of_seg_.assign(std::max(n_segments_, 0), {});
    seg_up_of_seg_.assign(std::max(n_segments_, 0), {});
    seg_down_of_res_.assign(std::max(n_reservoirs_, 0), {});
    for (int s = 0; s < n_segments_; ++s) {
        for (int k = 0; k < n_reservoirs_; ++k) {
            if (reach[s][n_segments_ + k]) seg_up_of_res_[k].push_back(s);
            if (reach[n_segments_ + k][s]) {
                res_up_of_seg_[s].push_back(k);
                seg_down_of_res_[k].push_back(s);
            }
        }
        for (int j = 0; j < n_segments_; ++j) {
            if (reach[j][s]) seg_up_of_seg_[s].push_back(j);
        }
    }

    // Shortest path distances along the flow direction, one relaxation sweep
    // per source in topological order.
    dist_.assign(static_cast<std::size_t>(v) * v, kNan);
    std::vector<int> pos(v);
    for (int i = 0; i < v; ++i) pos[order[i]] = i;
    for (int s = 0; s < v; ++s) {
        double* row = dist_.data() + static_cast<std::size_t>(s) * v;
        row[s] = 0.0;
        for (int oi = pos[s]; oi < v; ++oi) {
            const int u = order[oi];
            if (std::isnan(row[u])) continue;
            for (const auto& [w, d] : out_d[u]) {
                const double cand = row[u] + d;
                if (std::isnan(row[w]) || cand < row[w]) row[w] = cand;
            }
        }
    }
}

const std::vector<int>& NetworkTopology::upstream_segments_of_reservoir(
    int k) const {
    linear_index(NodeId::reservoir(k));
    return seg_up_of_res_[k];
}

const std::vector<int>& NetworkTopology::upstream_reservoirs_of_segment(
    int i) const {
    linear_index(NodeId::segment(i));
    return res_up_of_seg_[i];
}

const std::vector<int>& NetworkTopology::upstream_segments_of_segment(
    int i) const {
    linear_index(NodeId::segment(i));
    return seg_up_of_seg_[i];
}

const std::vector<int>& NetworkTopology::downstream_segments_of_reservoir(
    int k) const {
    linear_index(NodeId::reservoir(k));
    return seg_down_of_res_[k];
}

std::vector<int> NetworkTopology::all_downstream_segments() const {
    std::set<int> joined;
    for (int k = 0; k < n_reservoirs_; ++k) {
        joined.insert(seg_down_of_res_[k].begin(), seg_down_of_res_[k].end());
    }
    return {joined.begin(), joined.end()};
}

double NetworkTopology::stream_distance(NodeId from, NodeId to) const {
    const int a = linear_index(from);
    const int b = linear_index(to);
    return dist_[static_cast<std::size_t>(a) * node_count() + b];
}

AdjacencyMatrix compute_adjacency(const NetworkTopology& topo) {
    struct Pair {
        int src, dst;
        double distance;
    };
    std::vector<Pair> pairs;
    const int n = topo.segment_count();
    const int m = topo.reservoir_count();

    auto path_distance = [&](NodeId from, NodeId to) {
        double d = topo.stream_distance(from, to);
        if (std::isnan(d)) {
            throw DataError("no path for connected pair " + from.str() +
                            " -> " + to.str());
        }
        return d;
    };

    for (int i = 0; i < n; ++i) {
        for (int j : topo.upstream_segments_of_segment(i)) {
            pairs.push_back({topo.linear_index(NodeId::segment(j)),
                             topo.linear_index(NodeId::segment(i)),
                             path_distance(NodeId::segment(j),
                                           NodeId::segment(i))});
        }
        for (int k : topo.upstream_reservoirs_of_segment(i)) {
            pairs.push_back({topo.linear_index(NodeId::reservoir(k)),
                             topo.linear_index(NodeId::segment(i)),
                             path_distance(NodeId::reservoir(k),
                                           NodeId::segment(i))});
        }
    }
    for (int k = 0; k < m; ++k) {
        for (int i : topo.upstream_segments_of_reservoir(k)) {
            pairs.push_back({topo.linear_index(NodeId::segment(i)),
                             topo.linear_index(NodeId::reservoir(k)),
                             path_distance(NodeId::segment(i),
                                           NodeId::reservoir(k))});
        }
    }

    AdjacencyMatrix adj;
    adj.weights = Tensor(topo.node_count(), topo.node_count());
    if (pairs.empty()) return adj;

    double mean = 0.0;
    for (const Pair& p : pairs) mean += p.distance;
    mean /= static_cast<double>(pairs.size());
    double var = 0.0;
    for (const Pair& p : pairs) {
        var += (p.distance - mean) * (p.distance - mean);
    }
    var /= static_cast<double>(pairs.size());
    const double stddev = std::sqrt(var);

    if (stddev == 0.0) {
        // All distances identical: standardization is undefined, so every
        // connected pair gets the midpoint weight.
        adj.degenerate_distances = true;
        for (const Pair& p : pairs) adj.weights(p.src, p.dst) = 0.5;
        return adj;
    }
    for (const Pair& p : pairs) {
        const double z = (p.distance - mean) / stddev;
        adj.weights(p.src, p.dst) = 1.0 / (1.0 + std::exp(z));
    }
    return adj;
}

NetworkTopology load_edges_csv(const std::filesystem::path& path,
                               int n_segments, int n_reservoirs) {
    CsvTable table = read_csv(path);
    const auto c_sk = table.column("source_kind");
    const auto c_si = table.column("source_id");
    const auto c_tk = table.column("target_kind");
    const auto c_ti = table.column("target_id");
    const auto c_ec = table.column("edge_class");
    const auto c_d = table.column("stream_distance_m");

    std::vector<DirectEdge> edges;
    edges.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string ctx = path.string() + " row " + std::to_string(r + 2);
        DirectEdge e;
        e.source.kind = node_kind_from_string(table.cell(r, c_sk));
        e.source.index = cell_to_int(table.cell(r, c_si), ctx);
        e.target.kind = node_kind_from_string(table.cell(r, c_tk));
        e.target.index = cell_to_int(table.cell(r, c_ti), ctx);
        e.edge_class = edge_class_from_string(table.cell(r, c_ec));
        e.stream_distance_m = cell_to_double(table.cell(r, c_d), ctx);
        edges.push_back(e);
    }
    return NetworkTopology::build(n_segments, n_reservoirs, std::move(edges));
}

void save_edges_csv(const std::filesystem::path& path,
                    const NetworkTopology& topo) {
    CsvWriter out(path, {"source_kind", "source_id", "target_kind", "target_id",
                         "edge_class", "stream_distance_m"});
    for (const DirectEdge& e : topo.direct_edges()) {
        out.row({to_string(e.source.kind), std::to_string(e.source.index),
                 to_string(e.target.kind), std::to_string(e.target.index),
                 to_string(e.edge_class), fmt_double(e.stream_distance_m)});
    }
    out.close();
}

}  // namespace sag
