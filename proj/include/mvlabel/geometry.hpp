#ifndef MVLABEL_GEOMETRY_HPP
#define MVLABEL_GEOMETRY_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mvlabel {

// Position on the ground plane in meters (pedestrians stand at z = 0).
struct WorldPoint {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const WorldPoint&) const = default;
};

struct CellIndex {
    int row = 0;
    int col = 0;
    bool operator==(const CellIndex&) const = default;
};

double distance(const WorldPoint& a, const WorldPoint& b);

// Discretized bird's-eye-view area of interest. Rows index the first
// world axis (x), columns the second (y); cells are half-open squares:
// cell (r, c) covers [origin + r*s, origin + (r+1)*s) per axis.
class GroundGrid {
public:
    GroundGrid(WorldPoint origin, double cell_size, int n_rows, int n_cols);

    // Builds a grid covering the given extents; n_rows*cell_size must land
    // within one cell of extent_x (same for y).
    static GroundGrid from_extent(WorldPoint origin, double extent_x, double extent_y,
                                  double cell_size);

    const WorldPoint& origin() const { return origin_; }
    double cell_size() const { return cell_size_; }
    int n_rows() const { return n_rows_; }
    int n_cols() const { return n_cols_; }
    double extent_x() const { return n_rows_ * cell_size_; }
    double extent_y() const { return n_cols_ * cell_size_; }
    std::int64_t cell_count() const {
        return static_cast<std::int64_t>(n_rows_) * n_cols_;
    }

    bool contains(const WorldPoint& p) const;
    bool valid(const CellIndex& c) const;

    bool operator==(const GroundGrid&) const = default;

private:
    WorldPoint origin_;
    double cell_size_;
    int n_rows_;
    int n_cols_;
};

inline constexpr double kDefaultCellSize = 0.1; // meters

// Built-in area-of-interest presets ("wildtrack": 12x36 m, "multiviewx":
// 16x25 m). Dataset world origins are not standardized anywhere we could
// find; both presets put the origin at (0, 0). See README.
GroundGrid preset_grid(std::string_view name, double cell_size = kDefaultCellSize);

CellIndex world_to_cell(const WorldPoint& p, const GroundGrid& grid);
WorldPoint cell_to_world(const CellIndex& c, const GroundGrid& grid);

using Mat3 = std::array<double, 9>; // row-major
using Vec3 = std::array<double, 3>;

struct PixelPoint {
    double u = 0.0;
    double v = 0.0;
};

// Pinhole camera: world -> camera via [R|t], then intrinsics K.
class CameraCalibration {
public:
    CameraCalibration(Mat3 intrinsics, Mat3 rotation, Vec3 translation,
                      int image_width, int image_height);

    static CameraCalibration from_json(const nlohmann::json& doc, const std::string& context);
    static CameraCalibration from_json_file(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;

    const Mat3& intrinsics() const { return intrinsics_; }
    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    int image_width() const { return image_width_; }
    int image_height() const { return image_height_; }

private:
    Mat3 intrinsics_;
    Mat3 rotation_;
    Vec3 translation_;
    int image_width_;
    int image_height_;
};

// Projects a ground point into the image. Throws BehindCameraError when the
// camera-frame depth is <= 0. Coordinates outside the image are returned
// as-is; clipping is the caller's business.
PixelPoint project_to_image(const WorldPoint& p, const CameraCalibration& calib);

nlohmann::ordered_json grid_to_json(const GroundGrid& grid);
GroundGrid grid_from_json(const nlohmann::json& doc, const std::string& context);

} // namespace mvlabel

#endif
