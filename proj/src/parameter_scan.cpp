#include "sflow/parameter_scan.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>

#include "sflow/parallel.hpp"

namespace sflow {

Eigen::MatrixXd SignedPermutation::matrix() const {
    const int n = static_cast<int>(image.size());
    if (static_cast<int>(sign.size()) != n)
        throw DimensionMismatch("SignedPermutation: image/sign size mismatch");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (image[i] < 0 || image[i] >= n) throw ConfigError("SignedPermutation: bad image");
        if (sign[i] != 1 && sign[i] != -1) throw ConfigError("SignedPermutation: bad sign");
        m(image[i], i) = sign[i];
    }
    return m;
}

SymmetricMatrix SignedPermutation::conjugate(const SymmetricMatrix& w) const {
    Eigen::MatrixXd m = matrix();
    if (m.rows() != w.dim()) throw DimensionMismatch("SignedPermutation: dimension mismatch");
    return SymmetricMatrix(m.transpose() * w.entries() * m);
}

ParameterChart::ParameterChart(std::vector<AxisSpec> axes) : axes_(std::move(axes)) {
    if (axes_.empty() || axes_.size() > 3)
        throw ConfigError("ParameterChart: dimension must be 1..3");
    node_count_ = 1;
    for (const AxisSpec& a : axes_) {
        if (a.resolution < 8) throw ConfigError("ParameterChart: resolution must be >= 8");
        if (!(a.lo < a.hi)) throw ConfigError("ParameterChart: lo must be < hi");
        node_count_ *= a.resolution;
    }
}

std::vector<int> ParameterChart::node_multi(int id) const {
    std::vector<int> multi(dim());
    for (int a = dim() - 1; a >= 0; --a) {
        multi[a] = id % axes_[a].resolution;
        id /= axes_[a].resolution;
    }
    return multi;
}

int ParameterChart::node_id(const std::vector<int>& multi) const {
    int id = 0;
    for (int a = 0; a < dim(); ++a) id = id * axes_[a].resolution + multi[a];
    return id;
}

double ParameterChart::axis_coord(int axis, int index) const {
    const AxisSpec& a = axes_[axis];
    const double w = a.hi - a.lo;
    if (a.identify) return a.lo + (index + 0.5) * w / a.resolution;
    return a.lo + index * w / (a.resolution - 1);
}

Eigen::VectorXd ParameterChart::coords(int id) const {
    std::vector<int> multi = node_multi(id);
    Eigen::VectorXd x(dim());
    for (int a = 0; a < dim(); ++a) x[a] = axis_coord(a, multi[a]);
    return x;
}

int ParameterChart::neighbor_up(int id, int axis, bool* wraps) const {
    std::vector<int> multi = node_multi(id);
    if (wraps) *wraps = false;
    if (multi[axis] + 1 < axes_[axis].resolution) {
        ++multi[axis];
        return node_id(multi);
    }
    if (!axes_[axis].identify) return -1;
    if (wraps) *wraps = true;
    multi[axis] = 0;
    return node_id(multi);
}

std::vector<int> ParameterChart::neighbors(int id) const {
    std::vector<int> out;
    std::vector<int> multi = node_multi(id);
    for (int a = 0; a < dim(); ++a) {
        const int res = axes_[a].resolution;
        const int i = multi[a];
        int up = (i + 1 < res) ? i + 1 : (axes_[a].identify ? 0 : -1);
        int down = (i > 0) ? i - 1 : (axes_[a].identify ? res - 1 : -1);
        for (int j : {up, down}) {
            if (j < 0) continue;
            std::vector<int> m = multi;
            m[a] = j;
            out.push_back(node_id(m));
        }
    }
    return out;
}

Eigen::VectorXd ParameterChart::edge_target_coords(int edge) const {
    const int node = edge_node(edge);
    const int axis = edge_axis(edge);
    std::vector<int> multi = node_multi(node);
    Eigen::VectorXd x = coords(node);
    x[axis] = axis_coord(axis, multi[axis] + 1);  // unrolled past hi on wrap edges
    return x;
}

int ParameterChart::nearest_node(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) throw DimensionMismatch("nearest_node: coordinate dimension");
    std::vector<int> multi(dim());
    for (int a = 0; a < dim(); ++a) {
        const AxisSpec& ax = axes_[a];
        const double w = ax.hi - ax.lo;
        if (ax.identify) {
            double cell = (x[a] - ax.lo) / (w / ax.resolution) - 0.5;
            int i = static_cast<int>(std::lround(cell));
            i %= ax.resolution;
            if (i < 0) i += ax.resolution;
            multi[a] = i;
        } else {
            int i = static_cast<int>(std::lround((x[a] - ax.lo) / (w / (ax.resolution - 1))));
            multi[a] = std::clamp(i, 0, ax.resolution - 1);
        }
    }
    return node_id(multi);
}

namespace {

SymmetricMatrix flow_matrix_at(const FunctionalFamily& f, const Eigen::VectorXd& lambda) {
    if (f.hessian_kind == PathKind::sign_compact)
        return window_hessian_at_zero(f, lambda).window_operator();
    return hessian_at_zero(f, lambda);
}

struct NodeSpectral {
    double min_abs;
    int kernel;
    int morse;
};

NodeSpectral node_spectral(const FunctionalFamily& f, const Eigen::VectorXd& lambda, double gap) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(flow_matrix_at(f, lambda).entries(),
                                                          Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = solver.eigenvalues();
    NodeSpectral out{ev.cwiseAbs().minCoeff(), 0, 0};
    for (int i = 0; i < ev.size(); ++i) {
        if (std::abs(ev[i]) <= gap) ++out.kernel;
        if (ev[i] < 0.0) ++out.morse;
    }
    return out;
}

}  // namespace

GridData degeneracy_map(const FunctionalFamily& f, const ParameterChart& chart, double gap) {
    if (f.param_dim != chart.dim())
        throw DimensionMismatch("degeneracy_map: family/chart parameter dimensions differ");
    GridData grid;
    const int n = chart.node_count();
    grid.degeneracy.resize(n);
    grid.kernel_dims.resize(n);
    grid.morse.resize(n);
    grid.failed.assign(n, 0);
    parallel_for(n, [&](int id) {
        NodeSpectral s = node_spectral(f, chart.coords(id), gap);
        grid.degeneracy[id] = s.min_abs;
        grid.kernel_dims[id] = s.kernel;
        grid.morse[id] = s.morse;
    });
    return grid;
}

void edge_sfl_labels(const FunctionalFamily& f, const ParameterChart& chart, GridData& grid,
                     double gap) {
    grid.edge_sfl.clear();
    grid.skipped_edges.clear();
    for (int id = 0; id < chart.node_count(); ++id) {
        for (int a = 0; a < chart.dim(); ++a) {
            bool wraps = false;
            int v = chart.neighbor_up(id, a, &wraps);
            if (v < 0) continue;
            const int e = chart.edge_id(id, a);
            // Seam edges use the unrolled operator past hi, not the node at lo.
            double far_degeneracy = grid.degeneracy[v];
            int far_morse = grid.morse[v];
            if (wraps) {
                NodeSpectral s = node_spectral(f, chart.edge_target_coords(e), gap);
                far_degeneracy = s.min_abs;
                far_morse = s.morse;
            }
            if (grid.degeneracy[id] < gap || far_degeneracy < gap) {
                grid.skipped_edges.push_back(e);
                continue;
            }
            // Endpoint reduction of the straight-edge path, exact per path kind.
            const int sfl = (f.hessian_kind == PathKind::dense)
                                ? grid.morse[id] - far_morse
                                : far_morse - grid.morse[id];
            grid.edge_sfl[e] = sfl;
        }
    }
}

std::vector<unsigned char> bifurcation_mask(const FunctionalFamily& f,
                                            const ParameterChart& chart, MaskMode mode,
                                            const GridData& grid, const ScanOptions& options,
                                            std::vector<RejectedCandidate>* unconfirmed) {
    const int n = chart.node_count();
    std::vector<unsigned char> mask(n, 0);
    for (int id = 0; id < n; ++id)
        if (!grid.failed[id] && grid.degeneracy[id] < options.gap) mask[id] = 1;

    for (const auto& [e, sfl] : grid.edge_sfl) {
        if (sfl == 0) continue;
        const int u = chart.edge_node(e);
        const int v = chart.neighbor_up(u, chart.edge_axis(e));

        bool keep = true;
        if (mode == MaskMode::confirm) {
            const Eigen::VectorXd a = chart.coords(u);
            const Eigen::VectorXd b = chart.edge_target_coords(e);
            BifurcationScanOptions confirm = options.confirm;
            confirm.n_scan = std::max(16, confirm.n_scan / 8);
            auto gamma = [a, b](double t) { return (a + t * (b - a)).eval(); };
            BifurcationScanReport rep = find_bifurcation_on_path(f, gamma, confirm);
            keep = !rep.records.empty();
            if (!keep && unconfirmed)
                for (auto& rc : rep.rejected) unconfirmed->push_back(rc);
        }
        if (keep) {
            mask[u] = 1;
            mask[v] = 1;
        }
    }
    return mask;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

int count_components_in(const ParameterChart& chart, const std::vector<unsigned char>& mask,
                        const GridData& grid,
                        const std::vector<std::pair<int, int>>& ranges, bool respect_wrap) {
    const int n = chart.node_count();
    auto inside = [&](int id) {
        std::vector<int> m = chart.node_multi(id);
        for (int a = 0; a < chart.dim(); ++a)
            if (m[a] < ranges[a].first || m[a] >= ranges[a].second) return false;
        return !mask[id] && !grid.failed[id];
    };
    UnionFind uf(n);
    for (int id = 0; id < n; ++id) {
        if (!inside(id)) continue;
        for (int a = 0; a < chart.dim(); ++a) {
            bool wraps = false;
            int v = chart.neighbor_up(id, a, &wraps);
            if (v < 0 || (wraps && !respect_wrap)) continue;
            if (!inside(v)) continue;
            auto it = grid.edge_sfl.find(chart.edge_id(id, a));
            if (it == grid.edge_sfl.end() || it->second != 0) continue;
            uf.unite(id, v);
        }
    }
    std::set<int> roots;
    for (int id = 0; id < n; ++id)
        if (inside(id)) roots.insert(uf.find(id));
    return static_cast<int>(roots.size());
}

ScanStats mask_statistics(const ParameterChart& chart, const std::vector<unsigned char>& mask,
                          const GridData& grid) {
    ScanStats stats;
    const int n = chart.node_count();
    UnionFind uf(n);
    for (int id = 0; id < n; ++id) {
        if (!mask[id]) continue;
        ++stats.masked_nodes;
        bool any_masked_neighbor = false;
        bool all_masked = true;
        auto nb = chart.neighbors(id);
        for (int v : nb) {
            if (mask[v]) {
                any_masked_neighbor = true;
                uf.unite(id, v);
            } else {
                all_masked = false;
            }
        }
        if (nb.size() < size_t(2 * chart.dim())) all_masked = false;  // chart boundary
        if (!any_masked_neighbor) ++stats.isolated_masked;
        if (all_masked) stats.mask_has_interior = true;
    }
    std::set<int> roots;
    for (int id = 0; id < n; ++id)
        if (mask[id]) roots.insert(uf.find(id));
    stats.masked_regions = static_cast<int>(roots.size());
    stats.interface_fraction =
        stats.masked_nodes == 0
            ? 1.0
            : 1.0 - double(stats.isolated_masked) / double(stats.masked_nodes);

    // Sweep for disconnected axis-aligned subwindows: the full window plus
    // the two halves of every axis.
    std::vector<std::vector<std::pair<int, int>>> windows;
    std::vector<std::pair<int, int>> full;
    for (int a = 0; a < chart.dim(); ++a) full.push_back({0, chart.axes()[a].resolution});
    windows.push_back(full);
    for (int a = 0; a < chart.dim(); ++a) {
        const int res = chart.axes()[a].resolution;
        for (int half = 0; half < 2; ++half) {
            auto w = full;
            w[a] = half == 0 ? std::pair<int, int>{0, res / 2}
                             : std::pair<int, int>{res / 2, res};
            windows.push_back(w);
        }
    }
    for (size_t k = 0; k < windows.size(); ++k) {
        const bool is_full = (k == 0);
        int c = count_components_in(chart, mask, grid, windows[k], is_full);
        if (c >= 2) stats.disconnected_subwindows.push_back(SubwindowReport{windows[k], c});
    }
    return stats;
}

}  // namespace

LabelingResult components_and_labels(const ParameterChart& chart,
                                     const std::vector<unsigned char>& mask,
                                     const GridData& grid, int basepoint_node) {
    const int n = chart.node_count();
    if (basepoint_node < 0 || basepoint_node >= n)
        throw ConfigError("components_and_labels: basepoint out of range");
    if (mask[basepoint_node] || grid.failed[basepoint_node])
        throw MaskedBasepoint("components_and_labels: basepoint is masked");

    LabelingResult out;
    out.labels.assign(n, 0);
    out.labeled.assign(n, 0);
    out.components.assign(n, -1);

    // Directed edge list per node: (neighbor, edge id, sfl sign as traversed).
    auto traversals = [&](int id) {
        std::vector<std::tuple<int, int, int>> list;
        std::vector<int> multi = chart.node_multi(id);
        for (int a = 0; a < chart.dim(); ++a) {
            int up = chart.neighbor_up(id, a);
            if (up >= 0) {
                auto it = grid.edge_sfl.find(chart.edge_id(id, a));
                if (it != grid.edge_sfl.end()) list.emplace_back(up, it->first, it->second);
            }
            // Downward neighbor: traverse its +axis edge backwards.
            const int res = chart.axes()[a].resolution;
            int down = (multi[a] > 0) ? -1 : (chart.axes()[a].identify ? res - 1 : -2);
            std::vector<int> m = multi;
            if (multi[a] > 0) {
                m[a] = multi[a] - 1;
                down = chart.node_id(m);
            } else if (down == res - 1) {
                m[a] = res - 1;
                down = chart.node_id(m);
            }
            if (down >= 0) {
                auto it = grid.edge_sfl.find(chart.edge_id(down, a));
                if (it != grid.edge_sfl.end()) list.emplace_back(down, it->first, -it->second);
            }
        }
        return list;
    };

    // BFS spanning tree from the basepoint, lexicographic neighbor order.
    std::set<int> tree_edges;
    std::deque<int> queue{basepoint_node};
    out.labeled[basepoint_node] = 1;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (auto [v, e, sfl] : traversals(u)) {
            if (out.labeled[v] || grid.failed[v]) continue;
            out.labeled[v] = 1;
            out.labels[v] = out.labels[u] + sfl;
            tree_edges.insert(e);
            queue.push_back(v);
        }
    }

    // Components of the unmasked nodes.
    UnionFind uf(n);
    for (const auto& [e, sfl] : grid.edge_sfl) {
        const int u = chart.edge_node(e);
        const int v = chart.neighbor_up(u, chart.edge_axis(e));
        if (mask[u] || mask[v] || grid.failed[u] || grid.failed[v]) continue;
        if (sfl != 0) continue;
        uf.unite(u, v);
    }
    std::map<int, int> root_to_component;
    for (int id = 0; id < n; ++id) {
        if (mask[id] || grid.failed[id]) continue;
        int root = uf.find(id);
        auto [it, inserted] = root_to_component.try_emplace(root, out.component_count);
        if (inserted) ++out.component_count;
        out.components[id] = it->second;
    }

    for (int id = 0; id < n; ++id) {
        if (out.components[id] < 0) continue;
        const int c = out.components[id];
        auto it = out.component_label.find(c);
        if (it == out.component_label.end()) {
            out.component_label[c] =
                out.labeled[id] ? std::optional<int>(out.labels[id]) : std::nullopt;
        } else if (out.labeled[id] && it->second && *it->second != out.labels[id]) {
            out.labels_consistent_within_components = false;
        }
    }

    for (const auto& [e, sfl] : grid.edge_sfl) {
        if (tree_edges.count(e)) continue;
        const int u = chart.edge_node(e);
        const int v = chart.neighbor_up(u, chart.edge_axis(e));
        if (!out.labeled[u] || !out.labeled[v]) continue;
        const int defect = out.labels[u] + sfl - out.labels[v];
        if (defect != 0) {
            out.defects.push_back(LoopDefect{u, v, chart.edge_axis(e), defect});
            out.max_defect = std::max(out.max_defect, std::abs(defect));
        }
    }

    out.stats = mask_statistics(chart, mask, grid);
    return out;
}

namespace {

void validate_seams(const FunctionalFamily& f, const ParameterChart& chart) {
    for (int a = 0; a < chart.dim(); ++a) {
        const AxisSpec& ax = chart.axes()[a];
        if (!ax.identify || !ax.seam_witness) continue;
        // Check M^T W(hi) M == W(lo) on every node of the orthogonal slice.
        for (int id = 0; id < chart.node_count(); ++id) {
            std::vector<int> multi = chart.node_multi(id);
            if (multi[a] != 0) continue;
            Eigen::VectorXd at_lo = chart.coords(id);
            Eigen::VectorXd at_hi = at_lo;
            at_lo[a] = ax.lo;
            at_hi[a] = ax.hi;
            SymmetricMatrix w_lo = flow_matrix_at(f, at_lo);
            SymmetricMatrix w_hi = flow_matrix_at(f, at_hi);
            SymmetricMatrix conj = ax.seam_witness->conjugate(w_hi);
            double err = (conj.entries() - w_lo.entries()).cwiseAbs().maxCoeff();
            if (err > 1e-8)
                throw SeamMismatch("axis " + std::to_string(a) +
                                   ": seam witness mismatch, error " + std::to_string(err));
        }
    }
}

int pick_basepoint(const ParameterChart& chart, const std::vector<unsigned char>& mask,
                   const GridData& grid, const ScanOptions& options) {
    if (options.basepoint) return chart.nearest_node(*options.basepoint);
    for (int id = 0; id < chart.node_count(); ++id)
        if (!mask[id] && !grid.failed[id]) return id;
    throw MaskedBasepoint("scan: every node is masked");
}

}  // namespace

ScanResult run_family_scan(const FunctionalFamily& f, const ParameterChart& chart,
                           const ScanOptions& options) {
    validate_seams(f, chart);
    ScanResult result;
    result.grid = degeneracy_map(f, chart, options.gap);
    edge_sfl_labels(f, chart, result.grid, options.gap);
    result.bif_mask =
        bifurcation_mask(f, chart, options.mode, result.grid, options, &result.unconfirmed);
    result.basepoint_node = pick_basepoint(chart, result.bif_mask, result.grid, options);
    result.labeling = components_and_labels(chart, result.bif_mask, result.grid,
                                            result.basepoint_node);
    return result;
}

ScanResult run_grid_analysis(const ParameterChart& chart, GridData grid,
                             const ScanOptions& options) {
    ScanResult result;
    result.grid = std::move(grid);
    const int n = chart.node_count();
    result.bif_mask.assign(n, 0);
    for (int id = 0; id < n; ++id)
        if (!result.grid.failed[id] && result.grid.degeneracy[id] < options.gap)
            result.bif_mask[id] = 1;
    for (const auto& [e, sfl] : result.grid.edge_sfl) {
        if (sfl == 0) continue;
        const int u = chart.edge_node(e);
        const int v = chart.neighbor_up(u, chart.edge_axis(e));
        result.bif_mask[u] = 1;
        result.bif_mask[v] = 1;
    }
    result.basepoint_node = pick_basepoint(chart, result.bif_mask, result.grid, options);
    result.labeling = components_and_labels(chart, result.bif_mask, result.grid,
                                            result.basepoint_node);
    return result;
}

}  // namespace sflow
