#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "saklqr/experiments.hpp"

namespace saklqr {

inline constexpr int kModelFileVersion = 1;

namespace detail {

using nlohmann::json;

inline json matrix_to_json(const MatX& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(row);
    }
    return rows;
}

inline MatX matrix_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
    MatX m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int c = 0; c < cols; ++c) {
            m(i, c) = j.at(i).at(c).get<double>();
        }
    }
    return m;
}

inline json vector_to_json(const VecX& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

inline VecX vector_from_json(const json& j) {
    VecX v(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        v(static_cast<int>(i)) = j.at(i).get<double>();
    }
    return v;
}

inline json dictionary_to_json(const Dictionary& d) {
    json j;
    j["kind"] = to_string(d.kind);
    j["include_raw"] = d.include_raw;
    j["rbf_width"] = d.rbf_width;
    j["scale"] = vector_to_json(d.scale);
    j["rbf_centers"] = json::array();
    for (const auto& c : d.rbf_centers) {
        j["rbf_centers"].push_back(vector_to_json(c));
    }
    j["fourier_freqs"] = json::array();
    for (const auto& f : d.fourier_freqs) {
        j["fourier_freqs"].push_back(vector_to_json(f));
    }
    return j;
}

inline Dictionary dictionary_from_json(const json& j) {
    Dictionary d;
    d.kind = dictionary_kind_from_string(j.at("kind").get<std::string>());
    d.include_raw = j.at("include_raw").get<bool>();
    d.rbf_width = j.at("rbf_width").get<double>();
    d.scale = vector_from_json(j.at("scale"));
    for (const auto& c : j.at("rbf_centers")) {
        d.rbf_centers.push_back(vector_from_json(c));
    }
    for (const auto& f : j.at("fourier_freqs")) {
        d.fourier_freqs.push_back(vector_from_json(f));
    }
    return d;
}

inline json model_to_json(const KoopmanModel& m) {
    json j;
    j["k_d"] = matrix_to_json(m.k_d);
    j["a"] = matrix_to_json(m.a);
    j["b"] = matrix_to_json(m.b);
    j["c"] = vector_to_json(m.c.transpose());
    j["svd_tol"] = m.svd_tol;
    j["region_id"] = m.region_id;
    j["n_pairs"] = m.n_pairs;
    j["residual_lifted_rms"] = m.residual_lifted_rms;
    j["residual_state_max"] = m.residual_state_max;
    j["output_r2"] = m.output_r2;
    j["x_op"] = vector_to_json(m.x_op);
    j["u_op"] = vector_to_json(m.u_op);
    j["y_op"] = m.y_op;
    return j;
}

inline KoopmanModel model_from_json(const json& j, const Dictionary& dict) {
    KoopmanModel m;
    m.dict = dict;
    m.k_d = matrix_from_json(j.at("k_d"));
    m.a = matrix_from_json(j.at("a"));
    m.b = matrix_from_json(j.at("b"));
    m.c = vector_from_json(j.at("c")).transpose();
    m.svd_tol = j.at("svd_tol").get<double>();
    m.region_id = j.at("region_id").get<int>();
    m.n_pairs = j.at("n_pairs").get<int>();
    m.residual_lifted_rms = j.at("residual_lifted_rms").get<double>();
    m.residual_state_max = j.at("residual_state_max").get<double>();
    m.output_r2 = j.at("output_r2").get<double>();
    m.x_op = vector_from_json(j.at("x_op"));
    m.u_op = vector_from_json(j.at("u_op"));
    m.y_op = j.at("y_op").get<double>();
    return m;
}

}  // namespace detail

/// Self-describing model file: dictionary, per-region operators and
/// gains, tolerances, controller settings, and fit metadata.
inline void save_stack(const FittedStack& stack, const std::string& path,
                       const ExperimentConfig* cfg = nullptr) {
    using nlohmann::json;
    json j;
    j["version"] = kModelFileVersion;
    j["dictionary"] = detail::dictionary_to_json(stack.dict);
    j["depth0"] = stack.depth0;
    j["nominal_force"] = stack.nominal_force;
    j["kr_ref"] = stack.kr_ref;
    if (cfg) {
        j["controller"] = {{"q_diag", detail::vector_to_json(cfg->controller.q_diag)},
                           {"r_scale", cfg->controller.r_scale},
                           {"ki_scale", cfg->controller.ki_scale},
                           {"live_gains", cfg->controller.live_gains},
                           {"beta", cfg->controller.options.beta},
                           {"integral_clamp", cfg->controller.options.integral_clamp},
                           {"torque_clamp", cfg->controller.options.torque_clamp}};
    }

    j["path"] = json::array();
    for (const auto& wp : stack.path) {
        j["path"].push_back({{"t", wp.t}, {"x", wp.pos.x()}, {"y", wp.pos.y()}});
    }

    j["regions"] = json::array();
    for (int r = 0; r < stack.regions.size(); ++r) {
        json region;
        region["center"] = detail::vector_to_json(stack.regions.centers[r]);
        region["fallback"] = static_cast<bool>(stack.regions.fallback[r]);
        region["servo_owned"] = stack.servo_owned[r];
        region["model"] = detail::model_to_json(stack.regions.models[r]);
        const RegionGains& g = stack.gains[r];
        region["gains"] = {{"k_fb", detail::matrix_to_json(g.lqr.k_fb)},
                           {"k_r", detail::vector_to_json(g.lqr.k_r)},
                           {"k_i", detail::vector_to_json(g.lqr.k_i)},
                           {"p", detail::matrix_to_json(g.lqr.p)},
                           {"x_op", detail::vector_to_json(g.x_op)},
                           {"y_op", g.y_op}};
        j["regions"].push_back(region);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_stack: cannot open " + path);
    }
    out << j.dump(2) << '\n';
}

inline FittedStack load_stack(const std::string& path) {
    using nlohmann::json;
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_stack: cannot open " + path);
    }
    json j;
    in >> j;
    if (!j.contains("version")) {
        throw std::runtime_error("load_stack: missing version field");
    }
    if (j.at("version").get<int>() != kModelFileVersion) {
        throw std::runtime_error("load_stack: unsupported model file version");
    }

    FittedStack stack;
    stack.dict = detail::dictionary_from_json(j.at("dictionary"));
    stack.depth0 = j.at("depth0").get<double>();
    stack.nominal_force = j.at("nominal_force").get<double>();
    stack.kr_ref = j.at("kr_ref").get<double>();
    for (const auto& wp : j.at("path")) {
        stack.path.push_back({wp.at("t").get<double>(),
                              Eigen::Vector2d(wp.at("x").get<double>(),
                                              wp.at("y").get<double>())});
    }
    for (const auto& region : j.at("regions")) {
        stack.regions.centers.push_back(detail::vector_from_json(region.at("center")));
        stack.regions.fallback.push_back(region.at("fallback").get<bool>());
        stack.servo_owned.push_back(
            region.at("servo_owned").get<std::array<bool, kStateDim>>());
        stack.regions.models.push_back(
            detail::model_from_json(region.at("model"), stack.dict));
        const auto& g = region.at("gains");
        RegionGains rg;
        rg.lqr.k_fb = detail::matrix_from_json(g.at("k_fb"));
        rg.lqr.k_r = detail::vector_from_json(g.at("k_r"));
        rg.lqr.k_i = detail::vector_from_json(g.at("k_i"));
        rg.lqr.p = detail::matrix_from_json(g.at("p"));
        rg.x_op = detail::vector_from_json(g.at("x_op"));
        rg.y_op = g.at("y_op").get<double>();
        stack.gains.push_back(rg);
    }
    return stack;
}

}  // namespace saklqr
