#ifndef SAG_GRAPH_HPP
#define SAG_GRAPH_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sag/tensor.hpp"

namespace sag {

enum class NodeKind : std::uint8_t { kSegment, kReservoir };

std::string to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& text);

/// A stream segment or a reservoir, identified by kind plus dense index.
struct NodeId {
    NodeKind kind = NodeKind::kSegment;
    int index = 0;

    auto operator<=>(const NodeId&) const = default;

    static NodeId segment(int i) { return {NodeKind::kSegment, i}; }
    static NodeId reservoir(int k) { return {NodeKind::kReservoir, k}; }
    std::string str() const;
};

/// What an edge connects.  Reservoir-to-reservoir links are not modeled.
enum class EdgeClass : std::uint8_t { kSegToSeg, kSegToRes, kResToSeg };

std::string to_string(EdgeClass ec);
EdgeClass edge_class_from_string(const std::string& text);

/// One directed hydrologic link, pointing downstream.
struct DirectEdge {
    NodeId source;
    NodeId target;
    EdgeClass edge_class = EdgeClass::kSegToSeg;
    double stream_distance_m = 0.0;
};

/**
 * Validated routing network over N segments and M reservoirs.
 *
 * Edges point downstream.  The four reachability sets the model consumes are
 * all transitive: a node is "upstream of" another if any directed path
 * connects them, no matter how many hops or what kinds lie between.
 */
class NetworkTopology {
public:
    /**
     * Validate and index a network.  Throws UnknownNode for out-of-range
     * endpoints, BadEdgeClass when an edge's class contradicts its endpoint
     * kinds, DataError for non-positive distances or duplicate edges, and
     * CycleDetected if the directed graph is not acyclic.
     */
    static NetworkTopology build(int n_segments, int n_reservoirs,
                                 std::vector<DirectEdge> edges);

    int segment_count() const { return n_segments_; }
    int reservoir_count() const { return n_reservoirs_; }
    const std::vector<DirectEdge>& direct_edges() const { return edges_; }

    /// Segments with a directed path into reservoir k.
    const std::vector<int>& upstream_segments_of_reservoir(int k) const;

    /// Reservoirs with a directed path into segment i.
    const std::vector<int>& upstream_reservoirs_of_segment(int i) const;

    /// Segments with a directed path into segment i.
    const std::vector<int>& upstream_segments_of_segment(int i) const;

    /// Segments reachable downstream from reservoir k.
    const std::vector<int>& downstream_segments_of_reservoir(int k) const;

    /// Union of all reservoirs' downstream segments, sorted.
    std::vector<int> all_downstream_segments() const;

    /**
     * Stream distance from one node to another along the flow direction:
     * the minimum over directed paths of the summed edge distances.
     * Returns a quiet NaN when no path exists.
     */
    double stream_distance(NodeId from, NodeId to) const;

    /// Dense node index: segments first, then reservoirs.
    int linear_index(NodeId id) const;
    int node_count() const { return n_segments_ + n_reservoirs_; }

private:
    NetworkTopology() = default;
    void compute_reachability();

    int n_segments_ = 0;
    int n_reservoirs_ = 0;
    std::vector<DirectEdge> edges_;
    std::vector<std::vector<int>> out_;           // linear adjacency lists
    std::vector<std::vector<int>> seg_up_of_res_;
    std::vector<std::vector<int>> res_up_of_seg_;
    std::vector<std::vector<int>> seg_up_of_seg_;
    std::vector<std::vector<int>> seg_down_of_res_;
    std::vector<double> dist_;                    // node_count^2 path distances
};

/**
 * Distance-derived pairwise weights for the three modeled relations.
 *
 * Weights live on every connected (upstream node, downstream node) pair of
 * the reachability sets above, not only on direct edges.  Raw stream
 * distances are standardized across all such pairs jointly and mapped
 * through w = 1 / (1 + exp(z)), so nearer pairs weigh more and every weight
 * sits strictly inside (0, 1).  Rows are sources, columns are targets; no
 * normalization is applied.
 */
struct AdjacencyMatrix {
    Tensor weights;                    // node_count x node_count
    bool degenerate_distances = false; // all pair distances equal

    double seg_to_seg(int from, int to, const NetworkTopology& t) const {
        return weights(t.linear_index(NodeId::segment(from)),
                       t.linear_index(NodeId::segment(to)));
    }
};

/**
 * Build the weight matrix for a topology.  When every connected pair has the
 * same raw distance the standardization is undefined; all weights become 0.5
 * and `degenerate_distances` is set so callers can warn.
 */
AdjacencyMatrix compute_adjacency(const NetworkTopology& topo);

/**
 * Read a network from `edges.csv` with columns
 * source_kind,source_id,target_kind,target_id,edge_class,stream_distance_m.
 * Node counts are taken from the caller (they come from the dataset shape).
 */
NetworkTopology load_edges_csv(const std::filesystem::path& path,
                               int n_segments, int n_reservoirs);

/// Inverse of load_edges_csv.
void save_edges_csv(const std::filesystem::path& path,
                    const NetworkTopology& topo);

}  // namespace sag

#endif  // SAG_GRAPH_HPP
