#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "nnpsf/pendulum.hpp"

namespace nnpsf {

namespace detail {

inline nlohmann::json matrixToJson(const Matrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json vectorToJson(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Matrix matrixFromJson(const nlohmann::json& j, const std::string& key)
{
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw FormatError("config: '" + key + "' must be a non-empty array of rows");
    }
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != j[0].size()) {
            throw DimensionError("config: '" + key + "' has ragged rows");
        }
        for (std::size_t c = 0; c < j[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = finiteNumber(j[r][c], key);
        }
    }
    return m;
}

inline Vector vectorFromJson(const nlohmann::json& j, const std::string& key)
{
    if (!j.is_array() || j.empty()) {
        throw FormatError("config: '" + key + "' must be a non-empty array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = finiteNumber(j[i], key);
    }
    return v;
}

template <typename T>
void readOptional(const nlohmann::json& j, const char* key, T& out)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

inline nlohmann::json polytopeToJson(const SoftPolytope& p) { return {{"F", matrixToJson(p.F)}, {"b", vectorToJson(p.b)}}; }

inline SoftPolytope polytopeFromJson(const nlohmann::json& j, const std::string& key)
{
    if (!j.is_object() || !j.contains("F") || !j.contains("b")) {
        throw FormatError("config: '" + key + "' needs 'F' and 'b'");
    }
    return {matrixFromJson(j["F"], key + ".F"), vectorFromJson(j["b"], key + ".b")};
}

} // namespace detail

inline nlohmann::json toJson(const BenchConfig& c)
{
    const auto& f = c.filter;
    const auto& s = c.ilqr;
    nlohmann::json j;
    j["pendulum"] = {{"m", c.pendulum.m}, {"l", c.pendulum.l}, {"g", c.pendulum.g}, {"dt", c.pendulum.dt}};
    j["state_set"] = detail::polytopeToJson(c.stateSet);
    j["input_set"] = detail::polytopeToJson(c.inputSet);
    j["filter"] = {{"horizon", f.horizon},
                   {"iterations", f.iterations},
                   {"initial_radius", f.initialRadius},
                   {"growth", f.growth},
                   {"penalty_eps", f.penaltyEps},
                   {"penalty_sigma", f.penaltySigma},
                   {"psi_min", f.psiMin},
                   {"slack_tolerance", f.slackTolerance},
                   {"stop_on_certificate", f.stopOnCertificate},
                   {"qp",
                    {{"tolerance", f.qp.tolerance},
                     {"acceptable_tolerance", f.qp.acceptableTolerance},
                     {"max_iterations", f.qp.maxIterations}}}};
    j["ilqr"] = {{"horizon", s.horizon},
                 {"Q", detail::matrixToJson(s.Q)},
                 {"R", detail::matrixToJson(s.R)},
                 {"u_min", detail::vectorToJson(s.uMin)},
                 {"u_max", detail::vectorToJson(s.uMax)},
                 {"rho", s.rho},
                 {"tolerance", s.tolerance},
                 {"max_iterations", s.maxIterations},
                 {"reg_min", s.regMin},
                 {"reg_max", s.regMax},
                 {"reg_factor", s.regFactor}};
    if (s.Qf.size()) {
        j["ilqr"]["Qf"] = detail::matrixToJson(s.Qf);
    }
    j["switch_time"] = c.switchTime;
    return j;
}

/// Overlays the keys present in `j` on top of `base`; absent keys keep their values.
inline BenchConfig configFromJson(const nlohmann::json& j, BenchConfig base = {})
{
    if (!j.is_object()) {
        throw FormatError("config: top level must be an object");
    }
    using detail::readOptional;
    if (j.contains("pendulum")) {
        const auto& p = j["pendulum"];
        readOptional(p, "m", base.pendulum.m);
        readOptional(p, "l", base.pendulum.l);
        readOptional(p, "g", base.pendulum.g);
        readOptional(p, "dt", base.pendulum.dt);
    }
    if (j.contains("state_set")) {
        base.stateSet = detail::polytopeFromJson(j["state_set"], "state_set");
    }
    if (j.contains("input_set")) {
        base.inputSet = detail::polytopeFromJson(j["input_set"], "input_set");
    }
    if (j.contains("filter")) {
        const auto& f = j["filter"];
        auto& o = base.filter;
        readOptional(f, "horizon", o.horizon);
        readOptional(f, "iterations", o.iterations);
        readOptional(f, "initial_radius", o.initialRadius);
        readOptional(f, "growth", o.growth);
        readOptional(f, "penalty_eps", o.penaltyEps);
        readOptional(f, "penalty_sigma", o.penaltySigma);
        readOptional(f, "psi_min", o.psiMin);
        readOptional(f, "slack_tolerance", o.slackTolerance);
        readOptional(f, "stop_on_certificate", o.stopOnCertificate);
        if (f.contains("qp")) {
            readOptional(f["qp"], "tolerance", o.qp.tolerance);
            readOptional(f["qp"], "acceptable_tolerance", o.qp.acceptableTolerance);
            readOptional(f["qp"], "max_iterations", o.qp.maxIterations);
        }
    }
    if (j.contains("ilqr")) {
        const auto& s = j["ilqr"];
        auto& o = base.ilqr;
        readOptional(s, "horizon", o.horizon);
        if (s.contains("Q")) o.Q = detail::matrixFromJson(s["Q"], "ilqr.Q");
        if (s.contains("R")) o.R = detail::matrixFromJson(s["R"], "ilqr.R");
        if (s.contains("Qf")) o.Qf = detail::matrixFromJson(s["Qf"], "ilqr.Qf");
        if (s.contains("u_min")) o.uMin = detail::vectorFromJson(s["u_min"], "ilqr.u_min");
        if (s.contains("u_max")) o.uMax = detail::vectorFromJson(s["u_max"], "ilqr.u_max");
        readOptional(s, "rho", o.rho);
        readOptional(s, "tolerance", o.tolerance);
        readOptional(s, "max_iterations", o.maxIterations);
        readOptional(s, "reg_min", o.regMin);
        readOptional(s, "reg_max", o.regMax);
        readOptional(s, "reg_factor", o.regFactor);
    }
    readOptional(j, "switch_time", base.switchTime);
    base.validate();
    return base;
}

inline BenchConfig loadConfig(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config '" + path + "': " + e.what());
    }
    return configFromJson(j);
}

} // namespace nnpsf
