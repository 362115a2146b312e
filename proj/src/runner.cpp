#include "octlc/runner.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "octlc/error.hpp"
#include "octlc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace octlc {

namespace {

json confusion_to_json(const ConfusionMatrix& cm) {
  return json{{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

ConfusionMatrix confusion_from_json(const json& j) {
  ConfusionMatrix cm;
  cm.tp = j.at("tp").get<long>();
  cm.fp = j.at("fp").get<long>();
  cm.tn = j.at("tn").get<long>();
  cm.fn = j.at("fn").get<long>();
  return cm;
}

json metrics_to_json(const Metrics& m) {
  return json{{"accuracy", m.accuracy},
              {"sensitivity", m.sensitivity},
              {"specificity", m.specificity},
              {"f1_invasive", m.f1_invasive},
              {"f1_macro", m.f1_macro},
              {"degenerate_sensitivity", m.degenerate_sensitivity},
              {"degenerate_specificity", m.degenerate_specificity},
              {"degenerate_f1_invasive", m.degenerate_f1_invasive},
              {"degenerate_f1_benign", m.degenerate_f1_benign}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.accuracy = j.at("accuracy").get<double>();
  m.sensitivity = j.at("sensitivity").get<double>();
  m.specificity = j.at("specificity").get<double>();
  m.f1_invasive = j.at("f1_invasive").get<double>();
  m.f1_macro = j.at("f1_macro").get<double>();
  return m;
}

json fold_result_to_json(const FoldResult& fr, const std::string& digest) {
  json j;
  j["fold_index"] = fr.fold_index;
  j["config_digest"] = digest;
  j["lesion_confusion"] = confusion_to_json(fr.lesion_confusion);
  j["image_confusion"] = confusion_to_json(fr.image_confusion);
  j["per_image_probs"] = fr.per_image_probs;
  j["per_lesion_pred"] = fr.per_lesion_pred;
  j["metrics"] = metrics_to_json(metrics_from_confusion(fr.lesion_confusion));
  return j;
}

FoldResult fold_result_from_json(const json& j) {
  FoldResult fr;
  fr.fold_index = j.at("fold_index").get<int>();
  fr.lesion_confusion = confusion_from_json(j.at("lesion_confusion"));
  fr.image_confusion = confusion_from_json(j.at("image_confusion"));
  fr.per_image_probs =
      j.at("per_image_probs").get<std::map<std::string, double>>();
  fr.per_lesion_pred = j.at("per_lesion_pred").get<std::map<std::string, int>>();
  return fr;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("runner: cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("runner: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("runner: malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

// Trains and evaluates one fold from scratch.
FoldResult execute_fold(const RunConfig& cfg, const DatasetManifest& manifest,
                        const Fold& fold, const std::string& fold_dir,
                        const std::string& digest) {
  fs::create_directories(fold_dir);

  std::optional<std::string> weights_path;
  if (cfg.regime != Regime::kScr) {
    weights_path = pretrained_checkpoint_path(cfg.backbone, cfg.weights_dir);
  }

  auto model = build_model(
      cfg.backbone, cfg.regime, cfg.dropout_p,
      derive_seed(cfg.global_seed, {0xf0, static_cast<std::uint64_t>(fold.fold_index)}),
      weights_path);

  const PreprocessSpec pre =
      resolve_preprocess(cfg.preprocess_spec(), manifest, fold);

  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(cfg.train.seed,
                          {static_cast<std::uint64_t>(fold.fold_index)});

  const TrainHistory history =
      train_fold(*model, manifest, fold, tcfg, pre, cfg.augment, nullptr, fold_dir);

  json hist;
  hist["epoch_mean_loss"] = history.epoch_mean_loss;
  hist["steps"] = history.steps;
  hist["backbone_digest"] = history.backbone_digest;
  hist["head_digest"] = history.head_digest;
  hist["config_digest"] = digest;
  write_json(hist, (fs::path(fold_dir) / "history.json").string());

  save_model(*model, (fs::path(fold_dir) / "model.safetensors").string(),
             {{"config_digest", digest},
              {"fold_index", std::to_string(fold.fold_index)},
              {"global_seed", std::to_string(cfg.global_seed)}});

  FoldResult fr;
  fr.fold_index = fold.fold_index;
  std::vector<std::string> val_ids;
  val_ids.push_back(fold.val_rare);
  val_ids.insert(val_ids.end(), fold.val_common.begin(), fold.val_common.end());
  for (const auto& lesion_id : val_ids) {
    const LesionRecord& rec = manifest.lesion(lesion_id);
    std::map<std::string, double> image_probs;
    const double prob = predict_lesion(*model, manifest, rec, pre, nullptr,
                                       &image_probs);
    const bool pred_invasive = prob >= 0.5;
    const bool truth_invasive = rec.label == LesionLabel::kInvasive;
    fr.per_lesion_pred[lesion_id] = pred_invasive ? 1 : 0;
    if (truth_invasive) {
      (pred_invasive ? fr.lesion_confusion.tp : fr.lesion_confusion.fn) += 1;
    } else {
      (pred_invasive ? fr.lesion_confusion.fp : fr.lesion_confusion.tn) += 1;
    }
    for (const auto& [image_id, p] : image_probs) {
      fr.per_image_probs[image_id] = p;
      const bool img_invasive = p >= 0.5;
      if (truth_invasive) {
        (img_invasive ? fr.image_confusion.tp : fr.image_confusion.fn) += 1;
      } else {
        (img_invasive ? fr.image_confusion.fp : fr.image_confusion.tn) += 1;
      }
    }
  }
  return fr;
}

json report_to_json(const MetricsReport& report,
                    const std::vector<FoldResult>& folds) {
  json j;
  j["backbone"] = report.backbone;
  j["regime"] = report.regime;
  j["config_digest"] = report.config_digest;
  j["global_seed"] = report.global_seed;
  j["mean"] = metrics_to_json(report.mean);
  json per_fold = json::array();
  for (std::size_t i = 0; i < report.per_fold.size(); ++i) {
    json f = metrics_to_json(report.per_fold[i]);
    f["fold_index"] = folds[i].fold_index;
    f["lesion_confusion"] = confusion_to_json(folds[i].lesion_confusion);
    f["image_confusion"] = confusion_to_json(folds[i].image_confusion);
    per_fold.push_back(std::move(f));
  }
  j["per_fold"] = per_fold;
  return j;
}

}  // namespace

RunOutcome run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const std::string digest = config_digest(cfg);
  const DatasetManifest manifest = load_manifest(cfg.manifest_path);
  SplitPlan plan = make_splits(manifest, cfg.split.rare_label,
                               cfg.split.n_val_common, cfg.split.seed,
                               cfg.split.folds);
  const auto violations = verify_plan(plan, manifest);
  if (!violations.empty()) {
    throw ValidationError("runner: generated plan failed verification: " +
                          violations.front());
  }

  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  const std::string config_path = (out / "config.json").string();
  if (fs::exists(config_path)) {
    const RunConfig existing = load_run_config(config_path);
    if (config_digest(existing) != digest) {
      throw ConfigError(
          "runner: run directory " + cfg.output_dir +
          " holds a different config (digest mismatch); refusing to mix runs");
    }
  } else {
    save_run_config(cfg, config_path);
  }
  save_plan(plan, (out / "plan.json").string());

  std::vector<FoldResult> folds;
  for (const Fold& fold : plan.folds) {
    const std::string fold_dir =
        (out / "folds" / ("fold_" + std::to_string(fold.fold_index))).string();
    const std::string result_path = (fs::path(fold_dir) / "result.json").string();
    if (fs::exists(result_path)) {
      const json j = read_json(result_path);
      if (j.value("config_digest", "") == digest) {
        folds.push_back(fold_result_from_json(j));
        continue;
      }
    }
    FoldResult fr = execute_fold(cfg, manifest, fold, fold_dir, digest);
    write_json(fold_result_to_json(fr, digest), result_path);
    folds.push_back(std::move(fr));
  }

  MetricsReport report = aggregate(folds);
  report.backbone = nn::display_name(cfg.backbone);
  report.regime = to_string(cfg.regime);
  report.config_digest = digest;
  report.global_seed = cfg.global_seed;

  RunOutcome outcome;
  outcome.report = report;
  outcome.plan = std::move(plan);
  outcome.results_path = (out / "results.json").string();
  outcome.report_path = (out / "report.txt").string();
  write_json(report_to_json(report, folds), outcome.results_path);
  std::ofstream rep(outcome.report_path, std::ios::trunc);
  rep << render_report({report});
  return outcome;
}

MatrixOutcome run_matrix(const MatrixConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  // Published-table row order within each backbone.
  const Regime canonical[3] = {Regime::kScr, Regime::kFt, Regime::kRc};

  MatrixOutcome outcome;
  json cells = json::array();
  for (const BackboneId backbone : cfg.backbones) {
    for (const Regime regime : canonical) {
      bool wanted = false;
      for (const Regime r : cfg.regimes) wanted |= (r == regime);
      if (!wanted) continue;

      RunConfig cell = cfg.shared;
      cell.backbone = backbone;
      cell.regime = regime;
      cell.output_dir =
          (fs::path(cfg.output_dir) / "cells" /
           (std::string(nn::to_string(backbone)) + "_" + to_string(regime)))
              .string();
      json cell_info;
      cell_info["backbone"] = nn::to_string(backbone);
      cell_info["regime"] = to_string(regime);
      try {
        const RunOutcome run = run_experiment(cell);
        outcome.cell_reports.push_back(run.report);
        cell_info["status"] = "ok";
        cell_info["results"] = run.results_path;
      } catch (const Error& e) {
        const std::string label = std::string(nn::display_name(backbone)) + " " +
                                  to_string(regime);
        outcome.failed_cells.push_back(label + ": " + e.what());
        cell_info["status"] = "failed";
        cell_info["error"] = e.what();
      }
      cells.push_back(std::move(cell_info));
    }
  }

  std::vector<ReferenceRow> refs;
  if (cfg.include_human_reference) refs.push_back(human_rater_reference());
  outcome.table = render_report(outcome.cell_reports, refs);
  for (const auto& failed : outcome.failed_cells) {
    outcome.table += "FAILED  " + failed + "\n";
  }

  outcome.report_path = (fs::path(cfg.output_dir) / "matrix_report.txt").string();
  std::ofstream rep(outcome.report_path, std::ios::trunc);
  rep << outcome.table;
  json summary;
  summary["cells"] = cells;
  write_json(summary, (fs::path(cfg.output_dir) / "matrix_results.json").string());
  return outcome;
}

MetricsReport load_results_file(const std::string& path) {
  const json j = read_json(path);
  MetricsReport report;
  try {
    report.backbone = j.at("backbone").get<std::string>();
    report.regime = j.at("regime").get<std::string>();
    report.config_digest = j.value("config_digest", "");
    report.global_seed = j.value("global_seed", 0);
    report.mean = metrics_from_json(j.at("mean"));
    for (const auto& f : j.at("per_fold")) {
      report.per_fold.push_back(metrics_from_json(f));
    }
  } catch (const json::exception& e) {
    throw ValidationError("runner: malformed results file " + path + ": " +
                          e.what());
  }
  return report;
}

std::string render_results_files(const std::vector<std::string>& result_paths,
                                 bool include_human_reference) {
  std::vector<MetricsReport> reports;
  for (const auto& path : result_paths) reports.push_back(load_results_file(path));
  std::vector<ReferenceRow> refs;
  if (include_human_reference) refs.push_back(human_rater_reference());
  return render_report(reports, refs);
}

}  // namespace octlc
