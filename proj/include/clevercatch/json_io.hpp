// clevercatch/json_io.hpp
// JSON encoding of matrices and networks for model files.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "clevercatch/error.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/mlp.hpp"

namespace clevercatch {

using Json = nlohmann::ordered_json;

inline Json to_json(const Matrix& m) {
    Json j = Json::object();
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.data();
    return j;
}

template <class T>
T json_get(const Json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(what + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": bad value for '" + key + "': " + e.what());
    }
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
    const auto rows = json_get<std::size_t>(j, "rows", what);
    const auto cols = json_get<std::size_t>(j, "cols", what);
    auto data = json_get<std::vector<double>>(j, "data", what);
    if (data.size() != rows * cols) throw ParseError(what + ": data length does not match rows x cols");
    return Matrix(rows, cols, std::move(data));
}

inline Json to_json(const Mlp& net) {
    Json layers = Json::array();
    for (const auto& l : net.layers) {
        Json jl = Json::object();
        jl["fan_in"] = l.fan_in();
        jl["fan_out"] = l.fan_out();
        jl["activation"] = std::string(to_string(l.activation));
        jl["weight"] = l.weight.data();
        jl["bias"] = l.bias;
        layers.push_back(std::move(jl));
    }
    return layers;
}

inline Mlp mlp_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ParseError(what + ": expected a non-empty layer array");
    Mlp net;
    for (std::size_t l = 0; l < j.size(); ++l) {
        const std::string lw = what + ".layer" + std::to_string(l);
        DenseLayer layer;
        const auto fan_in = json_get<std::size_t>(j[l], "fan_in", lw);
        const auto fan_out = json_get<std::size_t>(j[l], "fan_out", lw);
        layer.activation = activation_from_string(json_get<std::string>(j[l], "activation", lw));
        auto w = json_get<std::vector<double>>(j[l], "weight", lw);
        if (w.size() != fan_in * fan_out) throw ParseError(lw + ": weight length mismatch");
        layer.weight = Matrix(fan_in, fan_out, std::move(w));
        layer.bias = json_get<std::vector<double>>(j[l], "bias", lw);
        net.layers.push_back(std::move(layer));
    }
    try {
        net.validate();
    } catch (const Error& e) {
        throw ParseError(what + ": " + e.what());
    }
    return net;
}

inline std::string dump_json(const Json& j) { return j.dump(1, '\t') + "\n"; }

inline Json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(source + ": invalid JSON: " + e.what());
    }
}

}  // namespace clevercatch
