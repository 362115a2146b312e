#include "octlc/config.hpp"

#include <fstream>

#include "octlc/error.hpp"
#include "octlc/sha256.hpp"

using nlohmann::json;

namespace octlc {

namespace {

const char* to_string(NormalizationMode mode) {
  switch (mode) {
    case NormalizationMode::kAuto: return "auto";
    case NormalizationMode::kPretrained: return "pretrained";
    case NormalizationMode::kDataset: return "dataset";
  }
  return "?";
}

NormalizationMode parse_normalization(const std::string& token) {
  if (token == "auto") return NormalizationMode::kAuto;
  if (token == "pretrained") return NormalizationMode::kPretrained;
  if (token == "dataset") return NormalizationMode::kDataset;
  throw ConfigError("config: unknown normalization mode `" + token + "`");
}

}  // namespace

void RunConfig::validate() const {
  if (manifest_path.empty()) throw ConfigError("config: manifest path missing");
  if (output_dir.empty()) throw ConfigError("config: output_dir missing");
  train.validate();
  if (augment.enabled) augment.validate();
  if (split.n_val_common <= 0) {
    throw ConfigError("config: split.n_val_common must be positive");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("config: dropout_p must lie in [0, 1)");
  }
  if (target_height_px <= 0 || target_width_px <= 0) {
    throw ConfigError("config: non-positive target size");
  }
}

PreprocessSpec RunConfig::preprocess_spec() const {
  PreprocessSpec spec;
  spec.target_height_px = target_height_px;
  spec.target_width_px = target_width_px;
  NormalizationMode mode = normalization;
  if (mode == NormalizationMode::kAuto) {
    mode = regime == Regime::kScr ? NormalizationMode::kDataset
                                  : NormalizationMode::kPretrained;
  }
  spec.normalization = mode == NormalizationMode::kDataset
                           ? Normalization::kDatasetStats
                           : Normalization::kPretrainedStats;
  return spec;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["manifest"] = cfg.manifest_path;
  j["output_dir"] = cfg.output_dir;
  j["backbone"] = nn::to_string(cfg.backbone);
  j["regime"] = to_string(cfg.regime);
  j["split"] = json{{"rare_label", octlc::to_string(cfg.split.rare_label)},
                    {"n_val_common", cfg.split.n_val_common},
                    {"seed", cfg.split.seed}};
  if (cfg.split.folds) j["split"]["folds"] = *cfg.split.folds;
  j["train"] = json{{"learning_rate", cfg.train.learning_rate},
                    {"batch_size", cfg.train.batch_size},
                    {"epochs", cfg.train.epochs},
                    {"beta1", cfg.train.beta1},
                    {"beta2", cfg.train.beta2},
                    {"adam_eps", cfg.train.adam_eps},
                    {"seed", cfg.train.seed}};
  if (cfg.train.class_weights_override) {
    j["train"]["class_weights"] = *cfg.train.class_weights_override;
  }
  j["target_size"] = json::array({cfg.target_height_px, cfg.target_width_px});
  j["normalization"] = to_string(cfg.normalization);
  j["augment"] = json{{"enabled", cfg.augment.enabled},
                      {"hflip_prob", cfg.augment.hflip_prob},
                      {"brightness_delta", cfg.augment.brightness_delta},
                      {"contrast_delta", cfg.augment.contrast_delta},
                      {"saturation_delta", cfg.augment.saturation_delta}};
  j["dropout_p"] = cfg.dropout_p;
  j["global_seed"] = cfg.global_seed;
  if (cfg.weights_dir) j["weights_dir"] = *cfg.weights_dir;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  try {
    cfg.manifest_path = j.at("manifest").get<std::string>();
    if (j.contains("output_dir")) {
      cfg.output_dir = j["output_dir"].get<std::string>();
    }

    const auto backbone = nn::parse_backbone(j.at("backbone").get<std::string>());
    if (!backbone) {
      throw ConfigError("config: unknown backbone `" +
                        j.at("backbone").get<std::string>() + "`");
    }
    cfg.backbone = *backbone;
    const auto regime = parse_regime(j.at("regime").get<std::string>());
    if (!regime) {
      throw ConfigError("config: unknown regime `" +
                        j.at("regime").get<std::string>() + "`");
    }
    cfg.regime = *regime;

    if (j.contains("split")) {
      const json& s = j["split"];
      if (s.contains("rare_label")) {
        const auto label = parse_label(s["rare_label"].get<std::string>());
        if (!label) throw ConfigError("config: unknown split.rare_label");
        cfg.split.rare_label = *label;
      }
      if (s.contains("n_val_common")) cfg.split.n_val_common = s["n_val_common"].get<int>();
      if (s.contains("seed")) cfg.split.seed = s["seed"].get<std::uint64_t>();
      if (s.contains("folds")) cfg.split.folds = s["folds"].get<int>();
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
      if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
      if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
      if (t.contains("beta1")) cfg.train.beta1 = t["beta1"].get<double>();
      if (t.contains("beta2")) cfg.train.beta2 = t["beta2"].get<double>();
      if (t.contains("adam_eps")) cfg.train.adam_eps = t["adam_eps"].get<double>();
      if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
      if (t.contains("class_weights")) {
        const auto w = t["class_weights"].get<std::vector<double>>();
        if (w.size() != 2) throw ConfigError("config: class_weights must have 2 entries");
        cfg.train.class_weights_override = std::array<double, 2>{w[0], w[1]};
      }
    }
    if (j.contains("target_size")) {
      const auto ts = j["target_size"].get<std::vector<int>>();
      if (ts.size() != 2) throw ConfigError("config: target_size must be [h, w]");
      cfg.target_height_px = ts[0];
      cfg.target_width_px = ts[1];
    }
    if (j.contains("normalization")) {
      cfg.normalization = parse_normalization(j["normalization"].get<std::string>());
    }
    if (j.contains("augment")) {
      const json& a = j["augment"];
      if (a.contains("enabled")) cfg.augment.enabled = a["enabled"].get<bool>();
      if (a.contains("hflip_prob")) cfg.augment.hflip_prob = a["hflip_prob"].get<double>();
      if (a.contains("brightness_delta")) cfg.augment.brightness_delta = a["brightness_delta"].get<double>();
      if (a.contains("contrast_delta")) cfg.augment.contrast_delta = a["contrast_delta"].get<double>();
      if (a.contains("saturation_delta")) cfg.augment.saturation_delta = a["saturation_delta"].get<double>();
    }
    if (j.contains("dropout_p")) cfg.dropout_p = j["dropout_p"].get<double>();
    if (j.contains("global_seed")) cfg.global_seed = j["global_seed"].get<std::uint64_t>();
    if (j.contains("weights_dir") && !j["weights_dir"].is_null()) {
      cfg.weights_dir = j["weights_dir"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: malformed JSON in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("config: cannot write " + path);
  out << to_json(cfg).dump(2) << "\n";
}

std::string config_digest(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output_dir");
  return Sha256::hex_of_string(j.dump());
}

void MatrixConfig::validate() const {
  if (backbones.empty() || regimes.empty()) {
    throw ConfigError("matrix: backbones x regimes must be non-empty");
  }
  if (output_dir.empty()) throw ConfigError("matrix: output_dir missing");
}

MatrixConfig load_matrix_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("matrix: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("matrix: malformed JSON in " + path + ": " + e.what());
  }
  MatrixConfig cfg;
  try {
    for (const auto& b : j.at("backbones")) {
      const auto id = nn::parse_backbone(b.get<std::string>());
      if (!id) throw ConfigError("matrix: unknown backbone `" + b.get<std::string>() + "`");
      cfg.backbones.push_back(*id);
    }
    for (const auto& r : j.at("regimes")) {
      const auto regime = parse_regime(r.get<std::string>());
      if (!regime) throw ConfigError("matrix: unknown regime `" + r.get<std::string>() + "`");
      cfg.regimes.push_back(*regime);
    }
    json shared = j.at("shared");
    shared["backbone"] = "resnet18";  // placeholder; overwritten per cell
    shared["regime"] = "RC";
    cfg.shared = run_config_from_json(shared);
    cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("include_human_reference")) {
      cfg.include_human_reference = j["include_human_reference"].get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("matrix: malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace octlc
