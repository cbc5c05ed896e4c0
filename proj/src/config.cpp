#include "mvlabel/config.hpp"

#include "mvlabel/errors.hpp"

#include <charconv>

#include <json.hpp>

namespace mvlabel {

GlobalConfig GlobalConfig::defaults() {
    GlobalConfig cfg{preset_grid("wildtrack")};
    cfg.data_root = env_or("MVLABEL_DATA_ROOT", "");
    return cfg;
}

GroundGrid parse_grid_spec(const std::string& spec) {
    if (spec == "wildtrack" || spec == "multiviewx") return preset_grid(spec);

    // ROWSxCOLS@CELL[@OX,OY]
    const auto fail = [&]() -> ConfigError {
        return ConfigError("bad grid spec \"" + spec +
                           "\" (expected a preset name or ROWSxCOLS@CELL[@OX,OY])");
    };
    const size_t x_pos = spec.find('x');
    const size_t at1 = spec.find('@');
    if (x_pos == std::string::npos || at1 == std::string::npos || x_pos > at1) throw fail();
    try {
        const int n_rows = std::stoi(spec.substr(0, x_pos));
        const int n_cols = std::stoi(spec.substr(x_pos + 1, at1 - x_pos - 1));
        const size_t at2 = spec.find('@', at1 + 1);
        const double cell = std::stod(spec.substr(at1 + 1, at2 == std::string::npos
                                                               ? std::string::npos
                                                               : at2 - at1 - 1));
        WorldPoint origin{0.0, 0.0};
        if (at2 != std::string::npos) {
            const std::string tail = spec.substr(at2 + 1);
            const size_t comma = tail.find(',');
            if (comma == std::string::npos) throw fail();
            origin.x = std::stod(tail.substr(0, comma));
            origin.y = std::stod(tail.substr(comma + 1));
        }
        return GroundGrid(origin, cell, n_rows, n_cols);
    } catch (const std::invalid_argument&) {
        throw fail();
    } catch (const std::out_of_range&) {
        throw fail();
    }
}

void apply_config_file(GlobalConfig& cfg, const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw ParseError(path.string(), 0, "config must be a JSON object");

    if (doc.contains("grid")) {
        if (doc["grid"].is_string())
            cfg.grid = parse_grid_spec(doc["grid"].get<std::string>());
        else
            cfg.grid = grid_from_json(doc["grid"], path.string());
    }
    if (doc.contains("kernel")) {
        const auto& k = doc["kernel"];
        if (!k.is_object()) throw ParseError(path.string(), 0, "\"kernel\" must be an object");
        cfg.kernel_size = k.value("size", cfg.kernel_size);
        cfg.sigma = k.value("sigma", cfg.sigma);
        if (k.contains("normalization"))
            cfg.normalization = parse_kernel_normalization(k["normalization"].get<std::string>());
    }
    cfg.min_prob = doc.value("min_prob", cfg.min_prob);
    cfg.nms_radius = doc.value("nms_radius", cfg.nms_radius);
    cfg.match_radius = doc.value("match_radius", cfg.match_radius);
    if (doc.contains("data_root")) cfg.data_root = doc["data_root"].get<std::string>();
    if (doc.contains("log_level"))
        cfg.log_level = parse_log_level(doc["log_level"].get<std::string>());
}

} // namespace mvlabel
