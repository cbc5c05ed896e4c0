#ifndef MVLABEL_CONFIG_HPP
#define MVLABEL_CONFIG_HPP

#include "mvlabel/geometry.hpp"
#include "mvlabel/heatmap.hpp"
#include "mvlabel/util.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace mvlabel {

// Pipeline-wide settings. Built-in defaults reproduce the reference
// protocol with zero flags: 41x41 Gaussian kernel with sigma 5 cells,
// extraction threshold 0.4, 0.5 m NMS radius, 0.5 m match radius, and the
// wildtrack grid preset at 0.1 m/cell. Precedence: defaults < config file
// < command-line flags.
struct GlobalConfig {
    explicit GlobalConfig(GroundGrid g) : grid(g) {}

    GroundGrid grid;
    int kernel_size = 41;
    double sigma = 5.0; // in cells
    KernelNormalization normalization = KernelNormalization::PeakOne;
    double min_prob = 0.4;
    double nms_radius = 0.5;   // meters
    double match_radius = 0.5; // meters
    std::string data_root;     // from MVLABEL_DATA_ROOT unless overridden
    LogLevel log_level = LogLevel::Info;

    static GlobalConfig defaults();

    GaussianKernel kernel() const {
        return GaussianKernel(kernel_size, sigma, normalization);
    }

    std::filesystem::path resolve(const std::string& path) const {
        return resolve_path(path, data_root);
    }
};

// Grid flag syntax: a preset name ("wildtrack", "multiviewx") or
// "ROWSxCOLS@CELL[@OX,OY]", e.g. "120x360@0.1@0,0".
GroundGrid parse_grid_spec(const std::string& spec);

// Applies a JSON config document (see README for the schema) on top of cfg.
void apply_config_file(GlobalConfig& cfg, const std::filesystem::path& path);

} // namespace mvlabel

#endif
