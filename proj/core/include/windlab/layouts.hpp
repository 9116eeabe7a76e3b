#pragma once
// Layout registry and on-disk format. Registered layouts resolve to shipped
// data files (or are generated procedurally for the single-row family); any
// other name is treated as a filesystem path.

#include <string>
#include <vector>

#include "windlab/wake.hpp"

namespace windlab {

// All registered layout names (the TurbX_Row1 family plus the named farms).
const std::vector<std::string>& registered_layouts();
bool is_registered_layout(const std::string& name);

// Single row of m turbines along +x, 4 diameters apart, prevailing wind 270.
FarmLayout make_row_layout(int m);

// Load by registered name or by path to a layout file.
FarmLayout load_layout(const std::string& name_or_path);

// Layout file format: optional first header line of space-separated key=value
// pairs (name, diameter, prevailing_u, prevailing_phi, c_load_static,
// c_load_dyn), then one "x_m y_m" pair per line. '#' starts a comment.
FarmLayout load_layout_file(const std::string& path);
void save_layout_file(const std::string& path, const FarmLayout& layout);

// Shipped-data directory: $WINDLAB_DATA_DIR if set, else the build-time
// default. Throws if the resolved directory does not exist.
std::string data_dir();

}  // namespace windlab
