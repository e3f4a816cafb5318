#include "sflow/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace sflow {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string to_csv(const SymmetricMatrix& a) {
    std::string out = "dim=" + std::to_string(a.dim()) + "\n";
    for (int i = 0; i < a.dim(); ++i) {
        for (int j = 0; j < a.dim(); ++j) {
            if (j) out += ',';
            out += format_double(a(i, j));
        }
        out += '\n';
    }
    return out;
}

SymmetricMatrix symmetric_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("dim=", 0) != 0)
        throw ConfigError("symmetric_from_csv: missing dim= header");
    const int n = std::stoi(line.substr(4));
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw ConfigError("symmetric_from_csv: missing row");
        std::istringstream row(line);
        std::string cell;
        for (int j = 0; j < n; ++j) {
            if (!std::getline(row, cell, ',')) throw ConfigError("symmetric_from_csv: short row");
            m(i, j) = std::stod(cell);
        }
    }
    return SymmetricMatrix(std::move(m));
}

json to_json(const SymmetricMatrix& a) {
    json entries = json::array();
    for (int i = 0; i < a.dim(); ++i) {
        json row = json::array();
        for (int j = 0; j < a.dim(); ++j) row.push_back(a(i, j));
        entries.push_back(std::move(row));
    }
    return json{{"dim", a.dim()}, {"entries", std::move(entries)}};
}

SymmetricMatrix symmetric_from_json(const json& j) {
    const int n = j.at("dim").get<int>();
    const json& entries = j.at("entries");
    if (static_cast<int>(entries.size()) != n)
        throw ConfigError("symmetric matrix: entries/dim mismatch");
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) m(i, k) = entries.at(i).at(k).get<double>();
    return SymmetricMatrix(std::move(m));
}

json to_json(const SignCompactOperator& op) {
    json k = json::array();
    for (int i = 0; i < op.window_dim(); ++i) {
        json row = json::array();
        for (int j = 0; j < op.window_dim(); ++j) row.push_back(op.k_window()(i, j));
        k.push_back(std::move(row));
    }
    return json{{"j_window", op.j_window()},
                {"k_window", std::move(k)},
                {"tail_plus", op.tail_plus()},
                {"tail_minus", op.tail_minus()}};
}

SignCompactOperator sign_compact_from_json(const json& j) {
    std::vector<int> jw = j.at("j_window").get<std::vector<int>>();
    const int n = static_cast<int>(jw.size());
    Eigen::MatrixXd k(n, n);
    const json& kw = j.at("k_window");
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < n; ++c) k(i, c) = kw.at(i).at(c).get<double>();
    return SignCompactOperator(std::move(jw), SymmetricMatrix(std::move(k)),
                               j.at("tail_plus").get<bool>(), j.at("tail_minus").get<bool>());
}

OperatorPath path_from_json(const json& j, double endpoint_gap) {
    const std::string kind = j.at("kind").get<std::string>();
    if (j.contains("interpolation") && j.at("interpolation").get<std::string>() != "linear")
        throw ConfigError("path file: only linear interpolation is supported");
    const json& samples = j.at("samples");
    if (kind == "dense") {
        std::vector<std::pair<double, SymmetricMatrix>> s;
        for (const json& item : samples)
            s.emplace_back(item.at("t").get<double>(),
                           symmetric_from_json(item.at("operator")));
        return sampled_dense_path(std::move(s), endpoint_gap);
    }
    if (kind == "sign_compact") {
        std::vector<std::pair<double, SignCompactOperator>> s;
        for (const json& item : samples)
            s.emplace_back(item.at("t").get<double>(),
                           sign_compact_from_json(item.at("operator")));
        return sampled_window_path(std::move(s), endpoint_gap);
    }
    throw ConfigError("path file: kind must be dense or sign_compact");
}

json to_json(const SflResult& r) {
    json crossings = json::array();
    for (const Crossing& c : r.crossings)
        crossings.push_back(json{{"t", c.t},
                                 {"direction", c.direction},
                                 {"multiplicity", c.multiplicity}});
    return json{{"value", r.value},
                {"method", r.method == SflMethod::crossings ? "crossings" : "endpoint"},
                {"crossings", std::move(crossings)},
                {"refinement_depth", r.refinement_depth}};
}

namespace {

std::string grid_header(const ParameterChart& chart) {
    std::string h = "# ";
    for (int a = 0; a < chart.dim(); ++a) {
        const AxisSpec& ax = chart.axes()[a];
        if (a) h += ',';
        h += "axis" + std::to_string(a) + "=" + format_double(ax.lo) + ":" +
             format_double(ax.hi) + ":" + std::to_string(ax.resolution) + ":" +
             (ax.identify ? "1" : "0");
    }
    h += '\n';
    return h;
}

template <typename Get>
std::string grid_csv_impl(const ParameterChart& chart, Get get) {
    std::string out = grid_header(chart);
    const int n = chart.node_count();
    const int cols = chart.axes().back().resolution;
    for (int id = 0; id < n; ++id) {
        out += get(id);
        out += (id % cols == cols - 1) ? '\n' : ',';
    }
    return out;
}

}  // namespace

std::string grid_csv(const ParameterChart& chart, const std::vector<double>& values) {
    return grid_csv_impl(chart, [&](int id) { return format_double(values[id]); });
}

std::string grid_csv_int(const ParameterChart& chart, const std::vector<int>& values) {
    return grid_csv_impl(chart, [&](int id) { return std::to_string(values[id]); });
}

std::string grid_csv_mask(const ParameterChart& chart, const std::vector<unsigned char>& mask) {
    return grid_csv_impl(chart, [&](int id) { return std::string(mask[id] ? "1" : "0"); });
}

json scan_report_json(const ParameterChart& chart, const ScanResult& result) {
    const LabelingResult& lab = result.labeling;
    json labels = json::object();
    std::set<int> distinct;
    for (const auto& [comp, label] : lab.component_label) {
        if (label) {
            labels[std::to_string(comp)] = *label;
            distinct.insert(*label);
        } else {
            labels[std::to_string(comp)] = nullptr;
        }
    }
    json defects = json::array();
    for (const LoopDefect& d : lab.defects)
        defects.push_back(json{{"node_u", d.node_u},
                               {"node_v", d.node_v},
                               {"axis", d.axis},
                               {"defect", d.defect}});
    json subwindows = json::array();
    for (const SubwindowReport& w : lab.stats.disconnected_subwindows) {
        json ranges = json::array();
        for (auto& [lo, hi] : w.index_ranges) ranges.push_back(json::array({lo, hi}));
        subwindows.push_back(json{{"index_ranges", std::move(ranges)},
                                  {"component_count", w.component_count}});
    }

    int failed = 0;
    for (unsigned char f : result.grid.failed) failed += f;

    json axes = json::array();
    for (const AxisSpec& ax : chart.axes())
        axes.push_back(json{{"lo", ax.lo},
                            {"hi", ax.hi},
                            {"resolution", ax.resolution},
                            {"identify", ax.identify}});

    return json{{"component_count", lab.component_count},
                {"component_labels", std::move(labels)},
                {"distinct_labels", json(distinct)},
                {"max_label_defect", lab.max_defect},
                {"label_defects", std::move(defects)},
                {"labels_consistent_within_components",
                 lab.labels_consistent_within_components},
                {"masked_nodes", lab.stats.masked_nodes},
                {"masked_regions", lab.stats.masked_regions},
                {"isolated_mask_cells", lab.stats.isolated_masked},
                {"mask_has_interior", lab.stats.mask_has_interior},
                {"interface_fraction", lab.stats.interface_fraction},
                {"disconnected_subwindows", std::move(subwindows)},
                {"failed_nodes", failed},
                {"skipped_edges", static_cast<int>(result.grid.skipped_edges.size())},
                {"basepoint_node", result.basepoint_node},
                {"axes", std::move(axes)}};
}

ScanConfig scan_config_from_json(const json& j) {
    std::vector<AxisSpec> axes;
    const json& bounds = j.at("bounds");
    const json& resolution = j.at("resolution");
    if (bounds.size() != resolution.size())
        throw ConfigError("scan config: bounds/resolution size mismatch");
    for (size_t a = 0; a < bounds.size(); ++a) {
        AxisSpec ax;
        ax.lo = bounds.at(a).at(0).get<double>();
        ax.hi = bounds.at(a).at(1).get<double>();
        ax.resolution = resolution.at(a).get<int>();
        if (j.contains("identify")) ax.identify = j.at("identify").at(a).get<bool>();
        axes.push_back(ax);
    }
    ScanConfig cfg{j.at("family").get<std::string>(), ParameterChart(std::move(axes)), {}};
    if (j.contains("mode")) {
        const std::string mode = j.at("mode").get<std::string>();
        if (mode == "confirm")
            cfg.options.mode = MaskMode::confirm;
        else if (mode != "fast")
            throw ConfigError("scan config: mode must be fast or confirm");
    }
    if (j.contains("basepoint")) {
        std::vector<double> bp = j.at("basepoint").get<std::vector<double>>();
        cfg.options.basepoint = Eigen::Map<Eigen::VectorXd>(bp.data(), bp.size()).eval();
    }
    if (j.contains("gap")) cfg.options.gap = j.at("gap").get<double>();
    return cfg;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace sflow
