#pragma once

#include <string>

#include "sflow/parameter_scan.hpp"

namespace sflow {

/// Minimal SVG heatmap of a node grid (1-D or 2-D charts) with the mask
/// drawn as hatched cells and a component-label legend.  All coordinates are
/// integers and colors come from a fixed 256-entry table, so output bytes
/// depend only on the inputs.
std::string svg_heatmap(const ParameterChart& chart, const std::vector<double>& values,
                        const std::vector<unsigned char>& mask,
                        const LabelingResult* labeling);

/// The fixed color table (index 0..255) as "#rrggbb".
const char* heatmap_color(int index);

}  // namespace sflow
