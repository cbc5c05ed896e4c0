#include "mvlabel/heatmap.hpp"

#include "mvlabel/errors.hpp"
#include "mvlabel/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace mvlabel {

Heatmap::Heatmap(GroundGrid grid, std::string frame_id)
    : grid_(grid), frame_id_(std::move(frame_id)),
      values_(static_cast<size_t>(grid_.cell_count()), 0.0) {}

Heatmap::Heatmap(GroundGrid grid, std::string frame_id, std::vector<double> values)
    : grid_(grid), frame_id_(std::move(frame_id)), values_(std::move(values)) {
    if (values_.size() != static_cast<size_t>(grid_.cell_count()))
        throw ConfigError("heatmap value count does not match grid dimensions");
}

KernelNormalization parse_kernel_normalization(const std::string& name) {
    if (name == "peak") return KernelNormalization::PeakOne;
    if (name == "pdf") return KernelNormalization::LiteralPdf;
    throw ConfigError("unknown kernel normalization \"" + name + "\" (expected peak|pdf)");
}

const char* kernel_normalization_name(KernelNormalization mode) {
    return mode == KernelNormalization::PeakOne ? "peak" : "pdf";
}

GaussianKernel::GaussianKernel(int size, double sigma, KernelNormalization mode)
    : size_(size), sigma_(sigma), mode_(mode) {
    if (size <= 0 || size % 2 == 0)
        throw InvalidKernelSpecError("kernel size must be an odd positive integer, got " +
                                     std::to_string(size));
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InvalidKernelSpecError("kernel sigma must be > 0");
    values_.resize(static_cast<size_t>(size) * size);
    const int c = size / 2;
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    const double scale =
        mode == KernelNormalization::LiteralPdf ? 1.0 / (2.0 * M_PI * sigma * sigma) : 1.0;
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const double di = i - c;
            const double dj = j - c;
            values_[static_cast<size_t>(i) * size + j] =
                scale * std::exp(-(di * di + dj * dj) * inv_two_sigma_sq);
        }
    }
}

GaussianKernel gaussian_kernel(int size, double sigma, KernelNormalization mode) {
    return GaussianKernel(size, sigma, mode);
}

Heatmap rasterize(const DetectionSet& dets, const GroundGrid& grid, OutOfBoundsPolicy policy,
                  int* dropped) {
    Heatmap out(grid, dets.frame_id);
    int n_dropped = 0;
    std::ostringstream offenders;
    int n_offenders = 0;
    for (size_t i = 0; i < dets.detections.size(); ++i) {
        const WorldPoint& p = dets.detections[i].location;
        if (!grid.contains(p)) {
            if (policy == OutOfBoundsPolicy::Drop) {
                ++n_dropped;
                continue;
            }
            if (n_offenders++ > 0) offenders << ", ";
            offenders << "#" << i << " (" << p.x << ", " << p.y << ")";
            continue;
        }
        const CellIndex c = world_to_cell(p, grid);
        out.at(c.row, c.col) = 1.0;
    }
    if (n_offenders > 0)
        throw OutOfBoundsError("frame \"" + dets.frame_id + "\": " +
                               std::to_string(n_offenders) +
                               " detection(s) outside the area of interest: " + offenders.str());
    if (dropped) *dropped = n_dropped;
    return out;
}

Heatmap make_labels(const Heatmap& occupancy, const GaussianKernel& kernel) {
    const GroundGrid& grid = occupancy.grid();
    Heatmap out(grid, occupancy.frame_id());
    const int n_rows = grid.n_rows();
    const int n_cols = grid.n_cols();
    const int k = kernel.size();
    const int c = kernel.radius();
    for (int r = 0; r < n_rows; ++r) {
        for (int q = 0; q < n_cols; ++q) {
            const double v = occupancy.at(r, q);
            if (v == 0.0) continue;
            const int i_lo = std::max(0, c - r);
            const int i_hi = std::min(k, n_rows + c - r);
            const int j_lo = std::max(0, c - q);
            const int j_hi = std::min(k, n_cols + c - q);
            for (int i = i_lo; i < i_hi; ++i) {
                double* out_row = &out.at(r + i - c, q + j_lo - c);
                for (int j = j_lo; j < j_hi; ++j)
                    *out_row++ += v * kernel.at(i, j);
            }
        }
    }
    return out;
}

DetectionSet extract_locations(const Heatmap& h, double min_prob, double nms_radius_m) {
    if (!(min_prob > 0.0) || min_prob > 1.0)
        throw ConfigError("min_prob must be in (0, 1]");
    if (!(nms_radius_m > 0.0))
        throw ConfigError("nms_radius must be > 0");

    struct Candidate {
        double value;
        int row, col;
    };
    std::vector<Candidate> candidates;
    const GroundGrid& grid = h.grid();
    for (int r = 0; r < grid.n_rows(); ++r)
        for (int c = 0; c < grid.n_cols(); ++c)
            if (h.at(r, c) >= min_prob) candidates.push_back({h.at(r, c), r, c});

    // Descending by value; ties in row-major cell order for determinism.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.value > b.value; });

    DetectionSet out;
    out.frame_id = h.frame_id();
    std::vector<WorldPoint> accepted;
    for (const Candidate& cand : candidates) {
        const WorldPoint p = cell_to_world({cand.row, cand.col}, grid);
        bool keep = true;
        for (const WorldPoint& a : accepted) {
            if (distance(p, a) <= nms_radius_m) {
                keep = false;
                break;
            }
        }
        if (!keep) continue;
        accepted.push_back(p);
        out.detections.push_back({p, std::min(cand.value, 1.0)});
    }
    return out;
}

Heatmap label_pipeline(const DetectionSet& dets, const GroundGrid& grid,
                       const GaussianKernel& kernel, OutOfBoundsPolicy policy, int* dropped) {
    return make_labels(rasterize(dets, grid, policy, dropped), kernel);
}

namespace {

constexpr char kMagic[4] = {'M', 'V', 'H', 'M'};
constexpr unsigned char kVersion = 0x01;

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

std::string encode_mvhm(const Heatmap& h) {
    nlohmann::ordered_json header;
    header["grid"] = grid_to_json(h.grid());
    header["frame_id"] = h.frame_id();
    header["dtype"] = "f32le";
    const std::string header_str = header.dump();

    std::string out;
    out.reserve(9 + header_str.size() + h.values().size() * 4);
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    put_u32le(out, static_cast<std::uint32_t>(header_str.size()));
    out += header_str;
    for (double v : h.values()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32le(out, bits);
    }
    return out;
}

Heatmap decode_mvhm(std::string_view bytes, const std::string& context) {
    auto fail = [&](const std::string& msg) -> ParseError { return ParseError(context, 0, msg); };
    if (bytes.size() < 9) throw fail("truncated MVHM file (shorter than fixed header)");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw fail("bad magic (expected \"MVHM\")");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (p[4] != kVersion)
        throw fail("unsupported MVHM version " + std::to_string(p[4]));
    const std::uint32_t header_len = get_u32le(p + 5);
    if (bytes.size() < 9 + static_cast<size_t>(header_len))
        throw fail("truncated MVHM header (declared " + std::to_string(header_len) + " bytes)");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(9, header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw fail(std::string("MVHM header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || !header.contains("grid") || !header.contains("frame_id") ||
        !header.contains("dtype"))
        throw fail("MVHM header missing grid/frame_id/dtype");
    if (!header["dtype"].is_string() || header["dtype"].get<std::string>() != "f32le")
        throw fail("unsupported MVHM dtype (expected \"f32le\")");
    if (!header["frame_id"].is_string())
        throw fail("MVHM frame_id must be a string");
    GroundGrid grid = grid_from_json(header["grid"], context);

    const size_t payload_off = 9 + header_len;
    const size_t expect = static_cast<size_t>(grid.cell_count()) * 4;
    if (bytes.size() - payload_off != expect)
        throw fail("MVHM payload size mismatch: expected " + std::to_string(expect) +
                   " bytes, found " + std::to_string(bytes.size() - payload_off));

    std::vector<double> values(static_cast<size_t>(grid.cell_count()));
    const auto* q = reinterpret_cast<const unsigned char*>(bytes.data()) + payload_off;
    for (size_t i = 0; i < values.size(); ++i, q += 4) {
        const std::uint32_t bits = get_u32le(q);
        float f;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f) || f < 0.0f)
            throw fail("MVHM payload value at index " + std::to_string(i) +
                       " is negative or non-finite");
        values[i] = static_cast<double>(f);
    }
    return Heatmap(grid, header["frame_id"].get<std::string>(), std::move(values));
}

void write_mvhm(const std::filesystem::path& path, const Heatmap& h) {
    atomic_write_file(path, encode_mvhm(h));
}

Heatmap read_mvhm(const std::filesystem::path& path) {
    return decode_mvhm(read_file(path), path.string());
}

} // namespace mvlabel
