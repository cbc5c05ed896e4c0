#include "mvlabel/geometry.hpp"

#include "mvlabel/errors.hpp"
#include "mvlabel/util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvlabel {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v))
        throw ConfigError(std::string(what) + " must be finite");
}

} // namespace

double distance(const WorldPoint& a, const WorldPoint& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

GroundGrid::GroundGrid(WorldPoint origin, double cell_size, int n_rows, int n_cols)
    : origin_(origin), cell_size_(cell_size), n_rows_(n_rows), n_cols_(n_cols) {
    require_finite(origin.x, "grid origin.x");
    require_finite(origin.y, "grid origin.y");
    if (!(cell_size > 0.0) || !std::isfinite(cell_size))
        throw ConfigError("grid cell_size must be > 0");
    if (n_rows <= 0 || n_cols <= 0)
        throw ConfigError("grid dimensions must be positive");
}

GroundGrid GroundGrid::from_extent(WorldPoint origin, double extent_x, double extent_y,
                                   double cell_size) {
    if (!(cell_size > 0.0))
        throw ConfigError("grid cell_size must be > 0");
    if (cell_size > extent_x || cell_size > extent_y) {
        std::ostringstream msg;
        msg << "cell_size " << cell_size << " exceeds the area extents " << extent_x << "x"
            << extent_y;
        throw ConfigError(msg.str());
    }
    // Rounding keeps n*cell_size within half a cell of each extent.
    const int n_rows = static_cast<int>(std::llround(extent_x / cell_size));
    const int n_cols = static_cast<int>(std::llround(extent_y / cell_size));
    return GroundGrid(origin, cell_size, n_rows, n_cols);
}

bool GroundGrid::contains(const WorldPoint& p) const {
    return p.x >= origin_.x && p.x < origin_.x + extent_x() &&
           p.y >= origin_.y && p.y < origin_.y + extent_y();
}

bool GroundGrid::valid(const CellIndex& c) const {
    return c.row >= 0 && c.row < n_rows_ && c.col >= 0 && c.col < n_cols_;
}

GroundGrid preset_grid(std::string_view name, double cell_size) {
    if (name == "wildtrack")
        return GroundGrid::from_extent({0.0, 0.0}, 12.0, 36.0, cell_size);
    if (name == "multiviewx")
        return GroundGrid::from_extent({0.0, 0.0}, 16.0, 25.0, cell_size);
    throw ConfigError("unknown grid preset \"" + std::string(name) +
                      "\" (expected wildtrack|multiviewx)");
}

CellIndex world_to_cell(const WorldPoint& p, const GroundGrid& grid) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw OutOfBoundsError("point has non-finite coordinates");
    if (!grid.contains(p)) {
        std::ostringstream msg;
        msg << "point (" << p.x << ", " << p.y << ") outside area of interest ["
            << grid.origin().x << ", " << grid.origin().x + grid.extent_x() << ") x ["
            << grid.origin().y << ", " << grid.origin().y + grid.extent_y() << ")";
        throw OutOfBoundsError(msg.str());
    }
    // contains() is the semantic gate; the clamp only absorbs division
    // round-up at the far edge.
    int row = static_cast<int>(std::floor((p.x - grid.origin().x) / grid.cell_size()));
    int col = static_cast<int>(std::floor((p.y - grid.origin().y) / grid.cell_size()));
    row = std::clamp(row, 0, grid.n_rows() - 1);
    col = std::clamp(col, 0, grid.n_cols() - 1);
    return {row, col};
}

WorldPoint cell_to_world(const CellIndex& c, const GroundGrid& grid) {
    if (!grid.valid(c)) {
        std::ostringstream msg;
        msg << "cell (" << c.row << ", " << c.col << ") invalid for " << grid.n_rows() << "x"
            << grid.n_cols() << " grid";
        throw OutOfBoundsError(msg.str());
    }
    return {grid.origin().x + (c.row + 0.5) * grid.cell_size(),
            grid.origin().y + (c.col + 0.5) * grid.cell_size()};
}

namespace {

double dot3(const double* a, const double* b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

void check_rotation(const Mat3& r) {
    // R * R^T must be the identity to 1e-6 per entry.
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double rij = dot3(&r[3 * i], &r[3 * j]);
            const double expect = (i == j) ? 1.0 : 0.0;
            if (std::abs(rij - expect) > 1e-6)
                throw ConfigError("camera rotation is not orthonormal (|R R^T - I| > 1e-6)");
        }
    }
}

std::array<double, 9> mat3_from_json(const nlohmann::json& v, const std::string& context,
                                     const char* key) {
    if (!v.is_array() || v.size() != 9)
        throw ParseError(context, 0, std::string(key) + " must be a row-major array of 9 numbers");
    Mat3 m{};
    for (int i = 0; i < 9; ++i) {
        if (!v[i].is_number())
            throw ParseError(context, 0, std::string(key) + "[" + std::to_string(i) + "] must be a number");
        m[i] = v[i].get<double>();
    }
    return m;
}

} // namespace

CameraCalibration::CameraCalibration(Mat3 intrinsics, Mat3 rotation, Vec3 translation,
                                     int image_width, int image_height)
    : intrinsics_(intrinsics), rotation_(rotation), translation_(translation),
      image_width_(image_width), image_height_(image_height) {
    if (!(intrinsics_[0] > 0.0) || !(intrinsics_[4] > 0.0))
        throw ConfigError("camera focal lengths fx, fy must be > 0");
    if (std::abs(intrinsics_[6]) > 0.0 || std::abs(intrinsics_[7]) > 0.0 ||
        intrinsics_[8] != 1.0)
        throw ConfigError("camera intrinsics bottom row must be [0, 0, 1]");
    if (image_width_ <= 0 || image_height_ <= 0)
        throw ConfigError("camera image dimensions must be positive");
    for (double v : rotation_) require_finite(v, "camera rotation entry");
    for (double v : translation_) require_finite(v, "camera translation entry");
    check_rotation(rotation_);
}

CameraCalibration CameraCalibration::from_json(const nlohmann::json& doc,
                                               const std::string& context) {
    if (!doc.is_object())
        throw ParseError(context, 0, "calibration must be a JSON object");
    for (const char* key : {"intrinsics", "rotation", "translation", "image_size"})
        if (!doc.contains(key))
            throw ParseError(context, 0, std::string("calibration missing key \"") + key + "\"");
    Mat3 k = mat3_from_json(doc["intrinsics"], context, "intrinsics");
    Mat3 r = mat3_from_json(doc["rotation"], context, "rotation");
    const auto& tv = doc["translation"];
    if (!tv.is_array() || tv.size() != 3)
        throw ParseError(context, 0, "translation must be an array of 3 numbers");
    Vec3 t{};
    for (int i = 0; i < 3; ++i) {
        if (!tv[i].is_number())
            throw ParseError(context, 0, "translation entries must be numbers");
        t[i] = tv[i].get<double>();
    }
    const auto& sz = doc["image_size"];
    if (!sz.is_array() || sz.size() != 2 || !sz[0].is_number_integer() || !sz[1].is_number_integer())
        throw ParseError(context, 0, "image_size must be [width, height] integers");
    try {
        return CameraCalibration(k, r, t, sz[0].get<int>(), sz[1].get<int>());
    } catch (const ConfigError& e) {
        throw ParseError(context, 0, e.what());
    }
}

CameraCalibration CameraCalibration::from_json_file(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
    }
    return from_json(doc, path.string());
}

nlohmann::ordered_json CameraCalibration::to_json() const {
    nlohmann::ordered_json doc;
    doc["intrinsics"] = intrinsics_;
    doc["rotation"] = rotation_;
    doc["translation"] = translation_;
    doc["image_size"] = {image_width_, image_height_};
    return doc;
}

PixelPoint project_to_image(const WorldPoint& p, const CameraCalibration& calib) {
    const Mat3& r = calib.rotation();
    const Vec3& t = calib.translation();
    // X_cam = R * (x, y, 0) + t
    const double xc = r[0] * p.x + r[1] * p.y + t[0];
    const double yc = r[3] * p.x + r[4] * p.y + t[1];
    const double zc = r[6] * p.x + r[7] * p.y + t[2];
    if (!(zc > 0.0)) {
        std::ostringstream msg;
        msg << "point (" << p.x << ", " << p.y << ") has non-positive camera depth " << zc;
        throw BehindCameraError(msg.str());
    }
    const Mat3& k = calib.intrinsics();
    return {(k[0] * xc + k[1] * yc + k[2] * zc) / zc,
            (k[3] * xc + k[4] * yc + k[5] * zc) / zc};
}

nlohmann::ordered_json grid_to_json(const GroundGrid& grid) {
    nlohmann::ordered_json doc;
    doc["origin"] = {grid.origin().x, grid.origin().y};
    doc["cell_size"] = grid.cell_size();
    doc["n_rows"] = grid.n_rows();
    doc["n_cols"] = grid.n_cols();
    return doc;
}

GroundGrid grid_from_json(const nlohmann::json& doc, const std::string& context) {
    if (doc.is_string())
        return preset_grid(doc.get<std::string>());
    if (!doc.is_object())
        throw ParseError(context, 0, "grid must be an object or a preset name");
    for (const char* key : {"origin", "cell_size", "n_rows", "n_cols"})
        if (!doc.contains(key))
            throw ParseError(context, 0, std::string("grid missing key \"") + key + "\"");
    const auto& ov = doc["origin"];
    if (!ov.is_array() || ov.size() != 2 || !ov[0].is_number() || !ov[1].is_number())
        throw ParseError(context, 0, "grid origin must be [x, y]");
    if (!doc["cell_size"].is_number() || !doc["n_rows"].is_number_integer() ||
        !doc["n_cols"].is_number_integer())
        throw ParseError(context, 0, "grid cell_size/n_rows/n_cols have wrong types");
    try {
        return GroundGrid({ov[0].get<double>(), ov[1].get<double>()},
                          doc["cell_size"].get<double>(), doc["n_rows"].get<int>(),
                          doc["n_cols"].get<int>());
    } catch (const ConfigError& e) {
        throw ParseError(context, 0, e.what());
    }
}

} // namespace mvlabel
