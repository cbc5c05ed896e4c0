#ifndef MVLABEL_HEATMAP_HPP
#define MVLABEL_HEATMAP_HPP

#include "mvlabel/geometry.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mvlabel {

// Ground-plane pedestrian location with a confidence score in [0, 1].
struct Detection {
    WorldPoint location;
    double score = 1.0;
};

struct DetectionSet {
    std::string frame_id;
    std::vector<Detection> detections;
};

// Dense scalar field over a grid; values are finite and >= 0. Stored as
// doubles in memory, serialized as float32 in the MVHM raster format.
class Heatmap {
public:
    Heatmap(GroundGrid grid, std::string frame_id);
    Heatmap(GroundGrid grid, std::string frame_id, std::vector<double> values);

    const GroundGrid& grid() const { return grid_; }
    const std::string& frame_id() const { return frame_id_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double at(int row, int col) const {
        return values_[static_cast<size_t>(row) * grid_.n_cols() + col];
    }
    double& at(int row, int col) {
        return values_[static_cast<size_t>(row) * grid_.n_cols() + col];
    }

private:
    GroundGrid grid_;
    std::string frame_id_;
    std::vector<double> values_;
};

// PeakOne rescales the kernel so its center is exactly 1.0 (the default:
// labels then live on the same [0, 1] scale as the extraction threshold).
// LiteralPdf keeps the 2D Gaussian density normalization 1/(2*pi*sigma^2).
enum class KernelNormalization { PeakOne, LiteralPdf };

KernelNormalization parse_kernel_normalization(const std::string& name);
const char* kernel_normalization_name(KernelNormalization mode);

class GaussianKernel {
public:
    GaussianKernel(int size, double sigma, KernelNormalization mode);

    int size() const { return size_; }
    int radius() const { return size_ / 2; }
    double sigma() const { return sigma_; }
    KernelNormalization mode() const { return mode_; }
    double at(int i, int j) const {
        return values_[static_cast<size_t>(i) * size_ + j];
    }
    const std::vector<double>& values() const { return values_; }

private:
    int size_;
    double sigma_;
    KernelNormalization mode_;
    std::vector<double> values_;
};

GaussianKernel gaussian_kernel(int size, double sigma, KernelNormalization mode);

enum class OutOfBoundsPolicy { Reject, Drop };

// Binary occupancy: the cell containing each detection becomes 1, all other
// cells stay 0. Detections sharing a cell still yield 1 (indicator, not a
// count). With policy Drop, out-of-area detections are skipped and counted
// into *dropped when given; with Reject they raise OutOfBoundsError listing
// the offenders.
Heatmap rasterize(const DetectionSet& dets, const GroundGrid& grid,
                  OutOfBoundsPolicy policy = OutOfBoundsPolicy::Reject,
                  int* dropped = nullptr);

// Discrete 2D convolution with zero padding; output has the input's
// dimensions. Skips zero input cells, so stamping sparse occupancy maps is
// cheap; the result is identical to the dense sum.
Heatmap make_labels(const Heatmap& occupancy, const GaussianKernel& kernel);

// Thresholds the map at min_prob (inclusive), then greedy world-space NMS
// in descending value order (ties broken by row-major cell index): a
// candidate survives iff its distance to every already-accepted candidate
// exceeds nms_radius_m. Returned locations are cell centers; scores are the
// heatmap values clamped to 1.0 (superposed label peaks can exceed 1).
DetectionSet extract_locations(const Heatmap& h, double min_prob, double nms_radius_m);

// rasterize + make_labels; the occupancy-heatmap label generator.
Heatmap label_pipeline(const DetectionSet& dets, const GroundGrid& grid,
                       const GaussianKernel& kernel,
                       OutOfBoundsPolicy policy = OutOfBoundsPolicy::Reject,
                       int* dropped = nullptr);

// MVHM raster file: "MVHM" magic, version byte 0x01, u32-LE header length,
// JSON header {grid, frame_id, dtype: "f32le"}, then n_rows*n_cols float32
// little-endian row-major payload. Round-trips are bit-exact.
std::string encode_mvhm(const Heatmap& h);
Heatmap decode_mvhm(std::string_view bytes, const std::string& context);
void write_mvhm(const std::filesystem::path& path, const Heatmap& h);
Heatmap read_mvhm(const std::filesystem::path& path);

} // namespace mvlabel

#endif
