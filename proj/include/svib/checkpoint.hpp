#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "svib/nets.hpp"

namespace svib {

// Checkpoint format: a single JSON object
//   {"format_version": 1, "tensors": {"<name>": {"shape": [...], "data": [...]}}}
// Doubles are serialized with round-trip precision by the JSON writer.

inline nlohmann::json checkpoint_to_json(const NamedParams& params) {
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, t] : params) {
        tensors[name] = {{"shape", t.shape()}, {"data", t.data()}};
    }
    return {{"format_version", 1}, {"tensors", tensors}};
}

inline void save_checkpoint(const NamedParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    out << checkpoint_to_json(params) << "\n";
}

// Loads values into the existing parameter tensors (shapes must match).
inline void load_checkpoint(NamedParams& params, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format_version", 0) != 1)
        throw std::runtime_error("unsupported checkpoint format_version in " + path);
    const auto& tensors = j.at("tensors");
    for (auto& [name, t] : params) {
        if (!tensors.contains(name))
            throw std::runtime_error("checkpoint " + path + " missing tensor " + name);
        const auto& entry = tensors.at(name);
        Shape shape = entry.at("shape").get<Shape>();
        if (shape != t.shape())
            throw DimensionError("checkpoint tensor " + name + " has shape " + shape_str(shape) +
                                 ", expected " + shape_str(t.shape()));
        t.data_mut() = entry.at("data").get<std::vector<double>>();
    }
}

}  // namespace svib
