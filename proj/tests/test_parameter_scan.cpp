#include <doctest.h>

#include <cmath>
#include <deque>
#include <set>

#include "sflow/parameter_scan.hpp"

using namespace sflow;

namespace {

ParameterChart kras_chart(int res) {
    return ParameterChart({AxisSpec{0.5, 4.5, res, false, std::nullopt}});
}

ParameterChart torus_chart(int res) {
    return ParameterChart({AxisSpec{0.0, 1.0, res, true, std::nullopt},
                           AxisSpec{0.0, 1.0, res, true, std::nullopt}});
}

// Window family with seam monodromy zero: W(theta) = diag(2 + cos(pi t), 2 - cos(pi t)),
// closing up at the seam only after swapping the two window slots.
FunctionalFamily swap_seam_family() {
    FunctionalFamily f;
    f.galerkin_dim = 2;
    f.param_dim = 1;
    f.name = "swap_seam";
    auto w = [](double t) {
        return Eigen::Vector2d(2.0 + std::cos(M_PI * t), 2.0 - std::cos(M_PI * t));
    };
    f.eval = [w](const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
        return 0.5 * w(l[0]).cwiseProduct(u).dot(u);
    };
    f.grad = [w](const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
        return w(l[0]).cwiseProduct(u).eval();
    };
    f.hess = [w](const Eigen::VectorXd& l, const Eigen::VectorXd&) {
        return Eigen::MatrixXd(w(l[0]).asDiagonal());
    };
    f.hessian_kind = PathKind::sign_compact;
    f.window_hessian = [w](const Eigen::VectorXd& l) {
        Eigen::MatrixXd k = Eigen::MatrixXd(w(l[0]).asDiagonal()) -
                            Eigen::MatrixXd::Identity(2, 2);
        return SignCompactOperator({1, 1}, SymmetricMatrix(k), true, true);
    };
    return f;
}

}  // namespace

TEST_CASE("chart indexing, wrapping, and nearest node") {
    ParameterChart chart({AxisSpec{0.0, 1.0, 8, true, std::nullopt},
                          AxisSpec{-1.0, 1.0, 10, false, std::nullopt}});
    CHECK(chart.node_count() == 80);
    // Wrapped axes sample cell centers, plain axes include the endpoints.
    CHECK(chart.axis_coord(0, 0) == doctest::Approx(0.0625));
    CHECK(chart.axis_coord(1, 0) == doctest::Approx(-1.0));
    CHECK(chart.axis_coord(1, 9) == doctest::Approx(1.0));

    const int last_row = chart.node_id({7, 3});
    bool wraps = false;
    CHECK(chart.neighbor_up(last_row, 0, &wraps) == chart.node_id({0, 3}));
    CHECK(wraps);
    CHECK(chart.neighbor_up(chart.node_id({3, 9}), 1) == -1);

    Eigen::VectorXd x(2);
    x << 0.95, 0.4;
    const int snapped = chart.nearest_node(x);
    CHECK(chart.node_multi(snapped)[0] == 7);
    // Unrolled target of a wrap edge extends past hi.
    const int e = chart.edge_id(last_row, 0);
    CHECK(chart.edge_target_coords(e)[0] == doctest::Approx(1.0625));

    CHECK_THROWS_AS(ParameterChart({AxisSpec{0.0, 1.0, 4, false, std::nullopt}}), ConfigError);
}

TEST_CASE("krasnoselskii 1-D scan: dips, labels, components") {
    FunctionalFamily f = family_registry("krasnoselskii");
    ParameterChart chart = kras_chart(64);
    ScanResult scan = run_family_scan(f, chart, {});

    // Degeneracy dips within one cell of each characteristic value.
    const double cell = 4.0 / 63.0;
    for (double star : {1.0, 2.0, 3.0, 4.0}) {
        double best = 1e30;
        double best_coord = 0.0;
        for (int id = 0; id < chart.node_count(); ++id) {
            const double d = std::abs(chart.coords(id)[0] - star);
            if (d < 1.5 * cell && scan.grid.degeneracy[id] < best) {
                best = scan.grid.degeneracy[id];
                best_coord = chart.coords(id)[0];
            }
        }
        CHECK(best < 0.5 * cell);  // the dip value scales like slope * distance
        CHECK(std::abs(best_coord - star) <= 1.5 * cell);
    }

    // Exactly four crossing edges, each with flow -1 (Morse index grows).
    int nonzero = 0;
    for (const auto& [e, sfl] : scan.grid.edge_sfl)
        if (sfl != 0) {
            CHECK(sfl == -1);
            ++nonzero;
        }
    CHECK(nonzero == 4);

    CHECK(scan.labeling.component_count == 5);
    std::set<int> labels;
    for (const auto& [comp, label] : scan.labeling.component_label) {
        REQUIRE(label.has_value());
        labels.insert(*label);
    }
    CHECK(labels == std::set<int>{0, -1, -2, -3, -4});
    CHECK(scan.labeling.defects.empty());
    CHECK(scan.labeling.labels_consistent_within_components);

    // Mask statistics: four two-node walls, no isolated cells, no interior.
    CHECK(scan.labeling.stats.masked_regions == 4);
    CHECK(scan.labeling.stats.isolated_masked == 0);
    CHECK_FALSE(scan.labeling.stats.mask_has_interior);
    CHECK(scan.labeling.stats.interface_fraction == doctest::Approx(1.0));

    // Mask sits inside the dilated degeneracy locus.
    for (int id = 0; id < chart.node_count(); ++id) {
        if (!scan.bif_mask[id]) continue;
        double dist = 1e30;
        for (double star : {1.0, 2.0, 3.0, 4.0})
            dist = std::min(dist, std::abs(chart.coords(id)[0] - star));
        CHECK(dist <= 1.5 * cell);
    }

    // The full window is disconnected by the mask and shows up in the sweep.
    bool full_window_listed = false;
    for (const SubwindowReport& w : scan.labeling.stats.disconnected_subwindows)
        if (w.index_ranges[0].first == 0 && w.index_ranges[0].second == 64)
            full_window_listed = w.component_count >= 2;
    CHECK(full_window_listed);
}

TEST_CASE("spanning-tree labels are path independent on simply connected charts") {
    FunctionalFamily f = family_registry("krasnoselskii");
    ParameterChart chart = kras_chart(64);
    ScanResult scan = run_family_scan(f, chart, {});

    // Independent flood fill accumulating edge flow, reversed neighbor order.
    std::vector<int> labels(chart.node_count(), 0);
    std::vector<char> seen(chart.node_count(), 0);
    std::deque<int> queue{scan.basepoint_node};
    seen[scan.basepoint_node] = 1;
    while (!queue.empty()) {
        int u = queue.back();
        queue.pop_back();  // DFS order on purpose
        for (int axis = chart.dim() - 1; axis >= 0; --axis) {
            int up = chart.neighbor_up(u, axis);
            if (up >= 0 && !seen[up]) {
                auto it = scan.grid.edge_sfl.find(chart.edge_id(u, axis));
                if (it != scan.grid.edge_sfl.end()) {
                    seen[up] = 1;
                    labels[up] = labels[u] + it->second;
                    queue.push_back(up);
                }
            }
            std::vector<int> multi = chart.node_multi(u);
            if (multi[axis] > 0) {
                multi[axis] -= 1;
                int down = chart.node_id(multi);
                if (!seen[down]) {
                    auto it = scan.grid.edge_sfl.find(chart.edge_id(down, axis));
                    if (it != scan.grid.edge_sfl.end()) {
                        seen[down] = 1;
                        labels[down] = labels[u] - it->second;
                        queue.push_back(down);
                    }
                }
            }
        }
    }
    for (int id = 0; id < chart.node_count(); ++id) {
        CHECK(bool(seen[id]) == bool(scan.labeling.labeled[id]));
        if (seen[id]) CHECK(labels[id] == scan.labeling.labels[id]);
    }
}

TEST_CASE("positive definite family: empty mask, one component") {
    FunctionalFamily f = family_registry("positive_definite");
    ParameterChart chart({AxisSpec{-1.0, 1.0, 16, false, std::nullopt}});
    ScanResult scan = run_family_scan(f, chart, {});
    CHECK(scan.labeling.stats.masked_nodes == 0);
    CHECK(scan.labeling.component_count == 1);
    CHECK(*scan.labeling.component_label.at(0) == 0);
    CHECK(scan.labeling.stats.disconnected_subwindows.empty());
}

TEST_CASE("torus scan: the mask circle does not disconnect") {
    FunctionalFamily f = family_registry("torus_demo");
    ParameterChart chart = torus_chart(32);
    ScanResult scan = run_family_scan(f, chart, {});

    CHECK(scan.labeling.component_count == 1);
    CHECK(scan.labeling.max_defect == 1);
    CHECK(scan.labeling.stats.masked_regions == 1);
    CHECK(scan.labeling.stats.isolated_masked == 0);

    // The mask is the circle theta_1 ~ 1/2: two node columns, all rows.
    std::set<int> mask_cols;
    std::set<int> mask_rows;
    for (int id = 0; id < chart.node_count(); ++id) {
        if (!scan.bif_mask[id]) continue;
        auto multi = chart.node_multi(id);
        mask_cols.insert(multi[0]);
        mask_rows.insert(multi[1]);
        CHECK(std::abs(chart.coords(id)[0] - 0.5) <= 1.0 / 32.0);
    }
    CHECK(mask_cols.size() == 2);
    CHECK(mask_rows.size() == 32);
}

TEST_CASE("doubling the resolution does not lose labels") {
    FunctionalFamily f = family_registry("krasnoselskii");
    auto distinct = [&](int res) {
        ScanResult scan = run_family_scan(f, kras_chart(res), {});
        std::set<int> labels;
        for (const auto& [comp, label] : scan.labeling.component_label)
            if (label) labels.insert(*label);
        return labels;
    };
    CHECK(distinct(64).size() <= distinct(128).size());

    FunctionalFamily torus = family_registry("torus_demo");
    ScanResult small = run_family_scan(torus, torus_chart(16), {});
    ScanResult big = run_family_scan(torus, torus_chart(32), {});
    CHECK(small.labeling.component_count == big.labeling.component_count);
}

TEST_CASE("masked basepoints are rejected") {
    FunctionalFamily f = family_registry("krasnoselskii");
    ParameterChart chart = kras_chart(64);
    ScanOptions options;
    // Land exactly on a node adjacent to lambda = 1 so the mask covers it.
    ScanResult probe = run_family_scan(f, chart, {});
    int masked_node = -1;
    for (int id = 0; id < chart.node_count(); ++id)
        if (probe.bif_mask[id]) masked_node = id;
    REQUIRE(masked_node >= 0);
    options.basepoint = chart.coords(masked_node);
    CHECK_THROWS_AS(run_family_scan(f, chart, options), MaskedBasepoint);
}

TEST_CASE("seam witnesses are validated on wrapped axes") {
    FunctionalFamily f = swap_seam_family();

    AxisSpec axis{0.0, 1.0, 16, true, std::nullopt};
    SignedPermutation identity{{0, 1}, {1, 1}};
    SignedPermutation swap{{1, 0}, {1, 1}};

    axis.seam_witness = swap;
    ScanResult ok = run_family_scan(f, ParameterChart({axis}), {});
    CHECK(ok.labeling.component_count == 1);  // spectrum never crosses zero

    axis.seam_witness = identity;
    CHECK_THROWS_AS(run_family_scan(f, ParameterChart({axis}), {}), SeamMismatch);
}

TEST_CASE("confirm mode keeps certified walls and drops uncertifiable ones") {
    FunctionalFamily f = family_registry("krasnoselskii");
    ParameterChart chart = kras_chart(32);

    ScanOptions confirm;
    confirm.mode = MaskMode::confirm;
    ScanResult scan = run_family_scan(f, chart, confirm);
    CHECK(scan.labeling.component_count == 5);
    CHECK(scan.unconfirmed.empty());

    ScanOptions hopeless = confirm;
    hopeless.confirm.witness_tol = 1e-30;
    ScanResult dropped = run_family_scan(f, chart, hopeless);
    CHECK(dropped.labeling.component_count == 5);  // labels still split by edge flow
    CHECK(dropped.labeling.stats.masked_nodes == 0);
    CHECK_FALSE(dropped.unconfirmed.empty());
}
