#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svib/common.hpp"
#include "svib/env.hpp"
#include "svib/mine.hpp"
#include "svib/nets.hpp"
#include "svib/optim.hpp"
#include "svib/rl.hpp"
#include "svib/svgd.hpp"

namespace svib {

using Json = nlohmann::json;

enum class Variant { VanillaA2C, A2CNoise, SvibUniform, SvibGaussian };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::VanillaA2C: return "vanilla_a2c";
        case Variant::A2CNoise: return "a2c_noise";
        case Variant::SvibUniform: return "svib_uniform";
        case Variant::SvibGaussian: return "svib_gaussian";
    }
    throw ContractError("unknown variant");
}

inline Variant parse_variant(const std::string& s) {
    if (s == "vanilla_a2c") return Variant::VanillaA2C;
    if (s == "a2c_noise") return Variant::A2CNoise;
    if (s == "svib_uniform") return Variant::SvibUniform;
    if (s == "svib_gaussian") return Variant::SvibGaussian;
    throw ContractError("variant must be one of vanilla_a2c, a2c_noise, svib_uniform, "
                        "svib_gaussian; got '" + s + "'");
}

struct EnvSpec {
    std::string name = "gridworld";  // gridworld | pole
    std::size_t size = 5;
    std::size_t horizon = 50;
    std::size_t pad_dim = 0;
    double noise_scale = 1.0;
    bool mix = false;
    std::uint64_t mix_seed = 0;
};

struct RunSettings {
    std::size_t total_updates = 100;
    std::size_t k_envs = 8;
    std::size_t rollout_horizon = 5;
    std::size_t checkpoint_every = 0;  // 0: initial + final only
};

struct RunConfig {
    Variant variant = Variant::SvibUniform;
    std::uint64_t seed = 0;
    EnvSpec env;
    EncoderConfig encoder;  // obs_dim filled in from env at build time
    PolicyValueConfig policy_value;
    SVGDConfig svgd;
    RLCoefficients rl;
    ProbeConfig probe;
    OptimConfig optim;
    RunSettings run;
};

namespace config_detail {

// `at` with a dotted-path diagnostic so a bad config names the exact field.
template <typename T>
T require(const Json& j, const std::string& path, const std::string& key) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!j.is_object() || !j.contains(key))
        throw ContractError("config missing required field '" + full + "'");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ContractError("config field '" + full + "' has the wrong type: " + e.what());
    }
}

template <typename T>
void optional(const Json& j, const std::string& path, const std::string& key, T& out) {
    if (!j.is_object() || !j.contains(key)) return;
    const std::string full = path.empty() ? key : path + "." + key;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ContractError("config field '" + full + "' has the wrong type: " + e.what());
    }
}

}  // namespace config_detail

inline RunConfig config_from_json(const Json& j) {
    using namespace config_detail;
    RunConfig c;
    c.variant = parse_variant(require<std::string>(j, "", "variant"));
    c.seed = require<std::uint64_t>(j, "", "seed");

    const Json env = j.value("env", Json::object());
    optional(env, "env", "name", c.env.name);
    if (c.env.name != "gridworld" && c.env.name != "pole")
        throw ContractError("config field 'env.name' must be 'gridworld' or 'pole'");
    optional(env, "env", "size", c.env.size);
    optional(env, "env", "horizon", c.env.horizon);
    optional(env, "env", "pad_dim", c.env.pad_dim);
    optional(env, "env", "noise_scale", c.env.noise_scale);
    optional(env, "env", "mix", c.env.mix);
    optional(env, "env", "mix_seed", c.env.mix_seed);

    const Json enc = j.value("encoder", Json::object());
    optional(enc, "encoder", "noise_dim", c.encoder.noise_dim);
    optional(enc, "encoder", "latent_dim", c.encoder.latent_dim);
    optional(enc, "encoder", "noise_var", c.encoder.noise_var);
    optional(enc, "encoder", "hidden", c.encoder.hidden);

    const Json pv = j.value("policy_value", Json::object());
    optional(pv, "policy_value", "hidden", c.policy_value.hidden);

    if (!j.contains("svgd")) throw ContractError("config missing required field 'svgd.beta'");
    const Json& svgd = j.at("svgd");
    c.svgd.beta = require<double>(svgd, "svgd", "beta");
    if (!(c.svgd.beta > 0.0)) throw ContractError("config field 'svgd.beta' must be positive");
    optional(svgd, "svgd", "zeta_scale", c.svgd.zeta_scale);
    optional(svgd, "svgd", "step_size", c.svgd.step_size);
    optional(svgd, "svgd", "particles", c.svgd.particles);
    if (c.svgd.particles == 0) throw ContractError("config field 'svgd.particles' must be >= 1");

    const Json rl = j.value("rl", Json::object());
    optional(rl, "rl", "gamma", c.rl.gamma);
    optional(rl, "rl", "n_step", c.rl.n_step);
    optional(rl, "rl", "value_coef", c.rl.value_coef);
    optional(rl, "rl", "entropy_coef", c.rl.entropy_coef);

    const Json probe = j.value("probe", Json::object());
    optional(probe, "probe", "interval", c.probe.interval);
    optional(probe, "probe", "batch", c.probe.batch);
    optional(probe, "probe", "steps", c.probe.steps);
    optional(probe, "probe", "lr", c.probe.lr);
    optional(probe, "probe", "reinitialize", c.probe.reinitialize);

    const Json optim = j.value("optim", Json::object());
    optional(optim, "optim", "lr", c.optim.lr);
    optional(optim, "optim", "rmsprop_decay", c.optim.rmsprop_decay);
    optional(optim, "optim", "rmsprop_eps", c.optim.rmsprop_eps);
    optional(optim, "optim", "plain_sgd", c.optim.plain_sgd);

    const Json run = j.value("run", Json::object());
    optional(run, "run", "total_updates", c.run.total_updates);
    optional(run, "run", "k_envs", c.run.k_envs);
    optional(run, "run", "rollout_horizon", c.run.rollout_horizon);
    optional(run, "run", "checkpoint_every", c.run.checkpoint_every);
    if (c.run.k_envs == 0 || c.run.rollout_horizon == 0)
        throw ContractError("config fields 'run.k_envs' and 'run.rollout_horizon' must be >= 1");
    return c;
}

inline Json config_to_json(const RunConfig& c) {
    Json j;
    j["variant"] = variant_name(c.variant);
    j["seed"] = c.seed;
    j["env"] = {{"name", c.env.name},         {"size", c.env.size},
                {"horizon", c.env.horizon},   {"pad_dim", c.env.pad_dim},
                {"noise_scale", c.env.noise_scale}, {"mix", c.env.mix},
                {"mix_seed", c.env.mix_seed}};
    j["encoder"] = {{"noise_dim", c.encoder.noise_dim},
                    {"latent_dim", c.encoder.latent_dim},
                    {"noise_var", c.encoder.noise_var},
                    {"hidden", c.encoder.hidden}};
    j["policy_value"] = {{"hidden", c.policy_value.hidden}};
    j["svgd"] = {{"beta", c.svgd.beta},
                 {"zeta_scale", c.svgd.zeta_scale},
                 {"step_size", c.svgd.step_size},
                 {"particles", c.svgd.particles}};
    j["rl"] = {{"gamma", c.rl.gamma},
               {"n_step", c.rl.n_step},
               {"value_coef", c.rl.value_coef},
               {"entropy_coef", c.rl.entropy_coef}};
    j["probe"] = {{"interval", c.probe.interval},
                  {"batch", c.probe.batch},
                  {"steps", c.probe.steps},
                  {"lr", c.probe.lr},
                  {"reinitialize", c.probe.reinitialize}};
    j["optim"] = {{"lr", c.optim.lr},
                  {"rmsprop_decay", c.optim.rmsprop_decay},
                  {"rmsprop_eps", c.optim.rmsprop_eps},
                  {"plain_sgd", c.optim.plain_sgd}};
    j["run"] = {{"total_updates", c.run.total_updates},
                {"k_envs", c.run.k_envs},
                {"rollout_horizon", c.run.rollout_horizon},
                {"checkpoint_every", c.run.checkpoint_every}};
    return j;
}

// dotted-path --set override; the value is parsed as JSON when possible,
// otherwise taken as a string.
inline void apply_override(Json& j, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ContractError("override must look like key.path=value, got '" + spec + "'");
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    Json* cur = &j;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (key.empty()) throw ContractError("override has an empty path segment: '" + spec + "'");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

inline Json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open config file: " + path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ContractError("config file is not valid JSON: " + path);
    return j;
}

// FNV-1a over the canonical (sorted-key) serialization, seed excluded so all
// seeds of one configuration share a run-group directory.
inline std::string config_hash(const RunConfig& c) {
    Json j = config_to_json(c);
    j.erase("seed");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

}  // namespace svib
