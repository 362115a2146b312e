#ifndef OCTLC_CONFIG_HPP_
#define OCTLC_CONFIG_HPP_

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octlc/modelkit.hpp"
#include "octlc/pipeline.hpp"
#include "octlc/trainer.hpp"

namespace octlc {

// Config-level normalization choice: auto resolves by regime (pretrained
// statistics for FT/RC, dataset statistics for SCR).
enum class NormalizationMode { kAuto, kPretrained, kDataset };

struct SplitSpec {
  LesionLabel rare_label = LesionLabel::kInvasive;
  int n_val_common = 9;
  std::uint64_t seed = 1;
  std::optional<int> folds;
};

// One experiment: a backbone, a regime, and every knob needed to rerun it
// exactly. Defaults reproduce the published procedure (batch 5, dropout
// 0.2, learning rate 1e-5, 224x224, flip + photometric jitter).
struct RunConfig {
  std::string manifest_path;
  std::string output_dir;
  BackboneId backbone = BackboneId::kResnet18;
  Regime regime = Regime::kRc;
  SplitSpec split;
  TrainConfig train;
  int target_height_px = 224;
  int target_width_px = 224;
  NormalizationMode normalization = NormalizationMode::kAuto;
  AugmentSpec augment;
  double dropout_p = 0.2;
  std::uint64_t global_seed = 17;
  std::optional<std::string> weights_dir;

  void validate() const;
  PreprocessSpec preprocess_spec() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Stable hash of the canonicalized config. output_dir is excluded so a
// relocated run directory still matches its recorded digest.
std::string config_digest(const RunConfig& cfg);

struct MatrixConfig {
  std::vector<BackboneId> backbones;
  std::vector<Regime> regimes;
  RunConfig shared;  // backbone/regime/output_dir fields ignored per cell
  std::string output_dir;
  bool include_human_reference = true;

  void validate() const;
};

MatrixConfig load_matrix_config(const std::string& path);

}  // namespace octlc

#endif  // OCTLC_CONFIG_HPP_
