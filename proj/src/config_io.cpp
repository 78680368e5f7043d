#include "uld/config_io.hpp"

#include <fstream>
#include <set>

#include "uld/errors.hpp"

namespace uld {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) throw ConfigError(what + " config has unknown key '" + key + "'");
    }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("bad value for '") + key + "'");
        }
    }
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["input_size"] = {cfg.input_h, cfg.input_w};
    j["num_landmarks"] = cfg.num_landmarks;
    j["encoder_channels"] = cfg.encoder_channels;
    j["decoder_channels"] = cfg.decoder_channels;
    j["msfd_dilations"] = cfg.msfd_dilations;
    j["attention_dim"] = cfg.attention_dim;
    j["pooled_resolution"] = {cfg.pooled_h, cfg.pooled_w};
    j["positivity_mode"] = to_string(cfg.positivity_mode);
    j["seed"] = cfg.seed;
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"input_size", "num_landmarks", "encoder_channels", "decoder_channels",
                "msfd_dilations", "attention_dim", "pooled_resolution", "positivity_mode", "seed"},
               "model");
    ModelConfig cfg;
    if (j.contains("input_size")) {
        const auto v = j.at("input_size").get<std::vector<int>>();
        if (v.size() != 2) throw ConfigError("input_size must be [H, W]");
        cfg.input_h = v[0];
        cfg.input_w = v[1];
    }
    get_if(j, "num_landmarks", cfg.num_landmarks);
    if (j.contains("encoder_channels")) {
        const auto v = j.at("encoder_channels").get<std::vector<int>>();
        if (v.size() != 5) throw ConfigError("encoder_channels must list exactly 5 stages");
        std::copy(v.begin(), v.end(), cfg.encoder_channels.begin());
    }
    if (j.contains("decoder_channels")) {
        const auto v = j.at("decoder_channels").get<std::vector<int>>();
        if (v.size() != 4) throw ConfigError("decoder_channels must list exactly 4 blocks");
        std::copy(v.begin(), v.end(), cfg.decoder_channels.begin());
    }
    get_if(j, "msfd_dilations", cfg.msfd_dilations);
    get_if(j, "attention_dim", cfg.attention_dim);
    if (j.contains("pooled_resolution")) {
        const auto v = j.at("pooled_resolution").get<std::vector<int>>();
        if (v.size() != 2) throw ConfigError("pooled_resolution must be [h, w]");
        cfg.pooled_h = v[0];
        cfg.pooled_w = v[1];
    }
    if (j.contains("positivity_mode")) {
        cfg.positivity_mode = positivity_mode_from_string(j.at("positivity_mode").get<std::string>());
    }
    get_if(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["learning_rate"] = cfg.learning_rate;
    j["weight_decay"] = cfg.weight_decay;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["epsilon"] = cfg.epsilon;
    j["batch_size"] = cfg.batch_size;
    j["steps"] = cfg.steps;
    j["seed"] = cfg.seed;
    j["alpha"] = cfg.alpha;
    j["decode_activation"] = to_string(cfg.decode_activation);
    j["decode_gamma"] = cfg.decode_gamma;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["threads"] = cfg.threads;
    j["objective"] = cfg.objective == TrainObjective::nll ? "nll" : "mse-fixed-sigma";
    j["baseline_sigma"] = cfg.baseline_sigma;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon", "batch_size", "steps",
                "seed", "alpha", "decode_activation", "decode_gamma", "checkpoint_every", "threads",
                "objective", "baseline_sigma"},
               "train");
    TrainConfig cfg;
    get_if(j, "learning_rate", cfg.learning_rate);
    get_if(j, "weight_decay", cfg.weight_decay);
    get_if(j, "beta1", cfg.beta1);
    get_if(j, "beta2", cfg.beta2);
    get_if(j, "epsilon", cfg.epsilon);
    get_if(j, "batch_size", cfg.batch_size);
    get_if(j, "steps", cfg.steps);
    get_if(j, "seed", cfg.seed);
    get_if(j, "alpha", cfg.alpha);
    if (j.contains("decode_activation")) {
        cfg.decode_activation = activation_from_string(j.at("decode_activation").get<std::string>());
    }
    get_if(j, "decode_gamma", cfg.decode_gamma);
    get_if(j, "checkpoint_every", cfg.checkpoint_every);
    get_if(j, "threads", cfg.threads);
    if (j.contains("objective")) {
        const std::string o = j.at("objective").get<std::string>();
        if (o == "nll") {
            cfg.objective = TrainObjective::nll;
        } else if (o == "mse-fixed-sigma") {
            cfg.objective = TrainObjective::mse_fixed_sigma;
        } else {
            throw ConfigError("unknown objective '" + o + "' (expected nll or mse-fixed-sigma)");
        }
    }
    get_if(j, "baseline_sigma", cfg.baseline_sigma);
    cfg.validate();
    return cfg;
}

nlohmann::json scene_config_to_json(const SceneConfig& cfg) {
    nlohmann::json j;
    j["image_size"] = {cfg.image_h, cfg.image_w};
    j["num_landmarks"] = cfg.num_landmarks;
    j["center_jitter_px"] = cfg.center_jitter_px;
    j["semi_axis_x"] = {cfg.semi_axis_x_min, cfg.semi_axis_x_max};
    j["semi_axis_y"] = {cfg.semi_axis_y_min, cfg.semi_axis_y_max};
    j["rotation_max_rad"] = cfg.rotation_max_rad;
    j["arc_start_rad"] = cfg.arc_start_rad;
    j["arc_span_rad"] = cfg.arc_span_rad;
    j["phase_jitter_rad"] = cfg.phase_jitter_rad;
    j["edge_blur_sigma"] = cfg.edge_blur_sigma;
    j["noise_tangent_sigma"] = cfg.noise_tangent_sigma;
    j["noise_normal_sigma"] = cfg.noise_normal_sigma;
    j["background_noise"] = cfg.background_noise;
    j["inside_level"] = cfg.inside_level;
    j["outside_level"] = cfg.outside_level;
    j["margin_px"] = cfg.margin_px;
    j["pixel_spacing_mm"] = cfg.pixel_spacing_mm;
    return j;
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"image_size", "num_landmarks", "center_jitter_px", "semi_axis_x", "semi_axis_y",
                "rotation_max_rad", "arc_start_rad", "arc_span_rad", "phase_jitter_rad",
                "edge_blur_sigma", "noise_tangent_sigma", "noise_normal_sigma", "background_noise",
                "inside_level", "outside_level", "margin_px", "pixel_spacing_mm"},
               "scene");
    SceneConfig cfg;
    if (j.contains("image_size")) {
        const auto v = j.at("image_size").get<std::vector<int>>();
        if (v.size() != 2) throw ConfigError("image_size must be [H, W]");
        cfg.image_h = v[0];
        cfg.image_w = v[1];
    }
    get_if(j, "num_landmarks", cfg.num_landmarks);
    get_if(j, "center_jitter_px", cfg.center_jitter_px);
    if (j.contains("semi_axis_x")) {
        const auto v = j.at("semi_axis_x").get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("semi_axis_x must be [min, max]");
        cfg.semi_axis_x_min = v[0];
        cfg.semi_axis_x_max = v[1];
    }
    if (j.contains("semi_axis_y")) {
        const auto v = j.at("semi_axis_y").get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("semi_axis_y must be [min, max]");
        cfg.semi_axis_y_min = v[0];
        cfg.semi_axis_y_max = v[1];
    }
    get_if(j, "rotation_max_rad", cfg.rotation_max_rad);
    get_if(j, "arc_start_rad", cfg.arc_start_rad);
    get_if(j, "arc_span_rad", cfg.arc_span_rad);
    get_if(j, "phase_jitter_rad", cfg.phase_jitter_rad);
    get_if(j, "edge_blur_sigma", cfg.edge_blur_sigma);
    get_if(j, "noise_tangent_sigma", cfg.noise_tangent_sigma);
    get_if(j, "noise_normal_sigma", cfg.noise_normal_sigma);
    get_if(j, "background_noise", cfg.background_noise);
    get_if(j, "inside_level", cfg.inside_level);
    get_if(j, "outside_level", cfg.outside_level);
    get_if(j, "margin_px", cfg.margin_px);
    get_if(j, "pixel_spacing_mm", cfg.pixel_spacing_mm);
    cfg.validate();
    return cfg;
}

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    try {
        nlohmann::json j;
        f >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
}

TrainFileConfig train_file_from_json(const nlohmann::json& j) {
    check_keys(j, {"model", "train"}, "train file");
    TrainFileConfig out;
    if (j.contains("model")) out.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) out.train = train_config_from_json(j.at("train"));
    return out;
}

}  // namespace uld
