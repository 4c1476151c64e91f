#include "carve/serialize.hpp"

#include <fstream>

namespace carve::serialize {

nlohmann::json tensor_to_json(const diff::Tensor& t) {
    return {{"shape", t.shape}, {"values", t.v}};
}

diff::Tensor tensor_from_json(const nlohmann::json& j) {
    return diff::Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("values").get<std::vector<double>>());
}

nlohmann::json mlp_to_json(const nn::Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json e{{"w", tensor_to_json(l.w.value)}, {"has_bias", l.has_bias}};
        if (l.has_bias) e["b"] = tensor_to_json(l.b.value);
        layers.push_back(e);
    }
    return {{"layers", layers}};
}

nn::Mlp mlp_from_json(const nlohmann::json& j) {
    nn::Mlp net;
    for (const auto& e : j.at("layers")) {
        nn::Mlp::Layer l;
        l.w = diff::Parameter(tensor_from_json(e.at("w")), false);
        l.has_bias = e.at("has_bias").get<bool>();
        if (l.has_bias) l.b = diff::Parameter(tensor_from_json(e.at("b")), false);
        net.layers.push_back(std::move(l));
    }
    if (net.layers.empty()) throw ValidationError("mlp_from_json: no layers");
    return net;
}

nlohmann::json standardizer_to_json(const nn::Standardizer& s) {
    return {{"mean", s.mean}, {"std", s.std}};
}

nn::Standardizer standardizer_from_json(const nlohmann::json& j) {
    nn::Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    if (s.mean.size() != s.std.size()) throw ValidationError("standardizer: mean/std size mismatch");
    return s;
}

void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed on " + path.string());
}

nlohmann::json load_json(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifactError("missing artifact: " + path.string());
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": invalid json: " + e.what());
    }
    return j;
}

}  // namespace carve::serialize
