#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sflow/functional_family.hpp"

namespace sflow {

/// Signed permutation of window basis vectors, used as a seam cogredience
/// witness on wrapped chart axes.
struct SignedPermutation {
    std::vector<int> image;  // image[i]: target slot of basis vector i
    std::vector<int> sign;   // +-1 per slot

    Eigen::MatrixXd matrix() const;
    SymmetricMatrix conjugate(const SymmetricMatrix& w) const;  // M^T W M
};

struct AxisSpec {
    double lo = 0.0;
    double hi = 1.0;
    int resolution = 8;  // >= 8 nodes
    bool identify = false;
    std::optional<SignedPermutation> seam_witness;
};

/// Gridded parameter chart of dimension <= 3 with optional wrapped axes.
/// Plain axes sample [lo, hi] inclusively; wrapped axes sample the cell
/// centers lo + (i + 1/2) h so that typical seam and symmetry points fall on
/// edges, not nodes.
class ParameterChart {
public:
    explicit ParameterChart(std::vector<AxisSpec> axes);

    int dim() const { return static_cast<int>(axes_.size()); }
    const std::vector<AxisSpec>& axes() const { return axes_; }
    int node_count() const { return node_count_; }

    std::vector<int> node_multi(int id) const;
    int node_id(const std::vector<int>& multi) const;
    double axis_coord(int axis, int index) const;  // index may equal resolution on wrapped axes (unrolled)
    Eigen::VectorXd coords(int id) const;

    /// Neighbor in the +axis direction; -1 at an unwrapped boundary.
    int neighbor_up(int id, int axis, bool* wraps = nullptr) const;
    /// All neighbors (lexicographic: axis 0 +, axis 0 -, axis 1 +, ...).
    std::vector<int> neighbors(int id) const;

    /// Directed grid edge from node towards +axis.
    int edge_id(int node, int axis) const { return node * dim() + axis; }
    int edge_node(int edge) const { return edge / dim(); }
    int edge_axis(int edge) const { return edge % dim(); }
    /// Unrolled coordinates of the edge target (wrap edges extend past hi).
    Eigen::VectorXd edge_target_coords(int edge) const;
    int nearest_node(const Eigen::VectorXd& coords) const;

private:
    std::vector<AxisSpec> axes_;
    int node_count_ = 0;
};

/// Per-node and per-edge scan data, the interface between the scan producers
/// (functional families, geodesic branches) and the labeling machinery.
struct GridData {
    std::vector<double> degeneracy;   // min |eigenvalue| per node
    std::vector<int> kernel_dims;     // eigenvalues within gap per node
    std::vector<int> morse;           // Morse count (families) or spectral index (geodesics)
    std::vector<unsigned char> failed;  // nodes without data (excluded)
    std::map<int, int> edge_sfl;      // computed edges (including zeros)
    std::vector<int> skipped_edges;   // edges with a degenerate or failed endpoint
};

struct LoopDefect {
    int node_u = 0, node_v = 0, axis = 0;
    int defect = 0;
};

struct SubwindowReport {
    std::vector<std::pair<int, int>> index_ranges;  // per-axis [lo, hi) node indices
    int component_count = 0;
};

struct ScanStats {
    int masked_nodes = 0;
    int masked_regions = 0;
    int isolated_masked = 0;
    bool mask_has_interior = false;
    double interface_fraction = 1.0;  // 1 - isolated/masked; codimension-one proxy
    std::vector<SubwindowReport> disconnected_subwindows;
};

struct LabelingResult {
    std::vector<int> components;       // -1 for masked/failed nodes
    int component_count = 0;
    std::map<int, std::optional<int>> component_label;
    std::vector<int> labels;           // BFS-accumulated edge flow from basepoint
    std::vector<unsigned char> labeled;  // reachable flag per node
    std::vector<LoopDefect> defects;   // nonzero label defects on non-tree edges
    int max_defect = 0;
    bool labels_consistent_within_components = true;
    ScanStats stats;
};

enum class MaskMode { fast, confirm };

struct ScanOptions {
    double gap = 1e-8;
    MaskMode mode = MaskMode::fast;
    std::optional<Eigen::VectorXd> basepoint;  // snapped to nearest node; default: first unmasked
    BifurcationScanOptions confirm;
};

struct ScanResult {
    GridData grid;
    std::vector<unsigned char> bif_mask;
    LabelingResult labeling;
    int basepoint_node = -1;
    std::vector<RejectedCandidate> unconfirmed;  // confirm mode only
};

/// Per-node min |eigenvalue| and kernel dimension of the Hessian family.
GridData degeneracy_map(const FunctionalFamily& f, const ParameterChart& chart,
                        double gap = 1e-8);

/// Integer spectral flow per admissible grid edge (in the +axis direction,
/// by the endpoint reduction of the family's path kind); edges with a
/// degenerate endpoint are skipped and listed.  Fills edge data into grid.
void edge_sfl_labels(const FunctionalFamily& f, const ParameterChart& chart, GridData& grid,
                     double gap = 1e-8);

/// Marks the nodes astride edges with nonzero flow plus degenerate nodes.
/// In confirm mode only edges certified by find_bifurcation_on_path keep
/// their mask; failures land in `unconfirmed`.
std::vector<unsigned char> bifurcation_mask(const FunctionalFamily& f,
                                            const ParameterChart& chart, MaskMode mode,
                                            const GridData& grid, const ScanOptions& options,
                                            std::vector<RejectedCandidate>* unconfirmed = nullptr);

/// Union-find components of the unmasked nodes, BFS spanning-tree labels
/// accumulated from the basepoint (deterministic lexicographic order), loop
/// defects on non-tree edges, and the grid-level mask statistics.
LabelingResult components_and_labels(const ParameterChart& chart,
                                     const std::vector<unsigned char>& mask,
                                     const GridData& grid, int basepoint_node);

/// Full scan pipeline for a functional family (seam validation included when
/// a witness is present).
ScanResult run_family_scan(const FunctionalFamily& f, const ParameterChart& chart,
                           const ScanOptions& options = {});

/// Mask/label pipeline over externally produced grid data (geodesic scans).
ScanResult run_grid_analysis(const ParameterChart& chart, GridData grid,
                             const ScanOptions& options);

}  // namespace sflow
