#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sflow/parameter_scan.hpp"
#include "sflow/spectral_flow.hpp"

namespace sflow {

using json = nlohmann::ordered_json;

/// CSV, row-major, first line "dim=N".
std::string to_csv(const SymmetricMatrix& a);
SymmetricMatrix symmetric_from_csv(const std::string& text);

/// {"dim": N, "entries": [[...]]}
json to_json(const SymmetricMatrix& a);
SymmetricMatrix symmetric_from_json(const json& j);

/// {"j_window": [1,-1,...], "k_window": [[...]], "tail_plus": b, "tail_minus": b}
json to_json(const SignCompactOperator& op);
SignCompactOperator sign_compact_from_json(const json& j);

/// {"kind": "dense"|"sign_compact", "samples": [{"t":..., "operator": ...}],
///  "interpolation": "linear"}
OperatorPath path_from_json(const json& j, double endpoint_gap = 1e-8);

json to_json(const SflResult& r);

/// Node grid as CSV: header line "# axis0=lo:hi:res:wrap[,...]", then rows
/// over axis 0 (1-D grids are a single row).
std::string grid_csv(const ParameterChart& chart, const std::vector<double>& values);
std::string grid_csv_int(const ParameterChart& chart, const std::vector<int>& values);
std::string grid_csv_mask(const ParameterChart& chart, const std::vector<unsigned char>& mask);

/// Component count, labels, defects, mask statistics and flags.
json scan_report_json(const ParameterChart& chart, const ScanResult& result);

/// Scan config: {"family": ..., "bounds": [[..],..], "resolution": [..],
///  "identify": [..], "basepoint": [..], "mode": "fast"|"confirm"}.
struct ScanConfig {
    std::string family;
    ParameterChart chart;
    ScanOptions options;
};
ScanConfig scan_config_from_json(const json& j);

/// Deterministic shortest-exact formatting used by all CSV writers.
std::string format_double(double v);

/// Writes content to path via a temp file and atomic rename.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace sflow
