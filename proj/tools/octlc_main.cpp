// octlc: config-driven OCT lesion-classification experiments.
// Subcommands: phantom, split, run, matrix, report, fetch-weights.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "octlc/config.hpp"
#include "octlc/error.hpp"
#include "octlc/phantom.hpp"
#include "octlc/runner.hpp"
#include "octlc/splits.hpp"

#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#endif

namespace fs = std::filesystem;

namespace {

int exit_code_for(const octlc::Error& e) {
  if (e.category() == "config") return 2;
  if (e.category() == "validation") return 3;
  if (e.category() == "io") return 4;
  if (e.category() == "numeric") return 5;
  return 1;
}

struct PhantomArgs {
  int n_benign = 91;
  int n_invasive = 9;
  std::string out_dir;
  octlc::PhantomParams params;
};

int cmd_phantom(const PhantomArgs& args) {
  const octlc::DatasetManifest manifest = octlc::generate_dataset(
      args.params, args.n_benign, args.n_invasive, args.out_dir);
  std::printf("wrote %s\n", (fs::path(args.out_dir) / "manifest.csv").c_str());
  std::printf("lesions: %d benign, %d invasive; images: %d\n",
              manifest.lesion_count(octlc::LesionLabel::kBenign),
              manifest.lesion_count(octlc::LesionLabel::kInvasive),
              manifest.total_images());
  return 0;
}

struct SplitArgs {
  std::string manifest_path;
  std::string rare = "invasive";
  int n_val_common = 9;
  std::uint64_t seed = 1;
  std::optional<int> folds;
  std::string out_path = "plan.json";
};

int cmd_split(const SplitArgs& args) {
  const auto manifest = octlc::load_manifest(args.manifest_path);
  const auto label = octlc::parse_label(args.rare);
  if (!label) throw octlc::ConfigError("split: unknown label `" + args.rare + "`");
  const auto plan = octlc::make_splits(manifest, *label, args.n_val_common,
                                       args.seed, args.folds);
  const auto violations = octlc::verify_plan(plan, manifest);
  if (!violations.empty()) {
    throw octlc::ValidationError("split: plan failed verification: " +
                                 violations.front());
  }
  octlc::save_plan(plan, args.out_path);
  std::printf("wrote %s (%zu folds, 1 %s + %d %s lesions per validation set)\n",
              args.out_path.c_str(), plan.folds.size(), args.rare.c_str(),
              args.n_val_common,
              octlc::to_string(*label == octlc::LesionLabel::kInvasive
                                   ? octlc::LesionLabel::kBenign
                                   : octlc::LesionLabel::kInvasive));
  return 0;
}

int cmd_run(const std::string& config_path) {
  const octlc::RunConfig cfg = octlc::load_run_config(config_path);
  const octlc::RunOutcome outcome = octlc::run_experiment(cfg);
  std::printf("%s", octlc::render_report({outcome.report}).c_str());
  std::printf("results: %s\n", outcome.results_path.c_str());
  return 0;
}

int cmd_matrix(const std::string& config_path) {
  const octlc::MatrixConfig cfg = octlc::load_matrix_config(config_path);
  const octlc::MatrixOutcome outcome = octlc::run_matrix(cfg);
  std::printf("%s", outcome.table.c_str());
  std::printf("report: %s\n", outcome.report_path.c_str());
  return outcome.failed_cells.empty() ? 0 : 1;
}

struct ReportArgs {
  std::vector<std::string> results;
  bool human_reference = false;
  std::string out_path;
};

int cmd_report(const ReportArgs& args) {
  const std::string table =
      octlc::render_results_files(args.results, args.human_reference);
  std::printf("%s", table.c_str());
  if (!args.out_path.empty()) {
    std::ofstream out(args.out_path, std::ios::trunc);
    if (!out) throw octlc::IoError("report: cannot write " + args.out_path);
    out << table;
  }
  return 0;
}

struct FetchArgs {
  std::string backbone;
  bool synthesize = false;
  std::uint64_t seed = 2024;
  std::string import_file;
  std::string url;
  std::string sha256;
  std::string dir;
};

#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
std::string download_to_temp(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw octlc::ConfigError("fetch: malformed url " + url);
  }
  const std::string scheme = url.substr(0, scheme_end);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string host_port = url.substr(
      scheme_end + 3,
      (path_start == std::string::npos ? url.size() : path_start) - scheme_end - 3);
  const std::string path =
      path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client((scheme + "://" + host_port).c_str());
  client.set_follow_location(true);
  auto res = client.Get(path.c_str());
  if (!res || res->status != 200) {
    throw octlc::IoError("fetch: download failed for " + url +
                         (res ? " (status " + std::to_string(res->status) + ")"
                              : " (no response)"));
  }
  const std::string tmp =
      (fs::temp_directory_path() / "octlc-weights-download.safetensors").string();
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
  if (!out) throw octlc::IoError("fetch: cannot write temporary file " + tmp);
  return tmp;
}
#endif

int cmd_fetch_weights(const FetchArgs& args) {
  const auto id = octlc::nn::parse_backbone(args.backbone);
  if (!id) {
    throw octlc::ConfigError("fetch: unknown backbone `" + args.backbone + "`");
  }
  const std::optional<std::string> dir =
      args.dir.empty() ? std::nullopt : std::optional<std::string>(args.dir);

  if (args.synthesize) {
    const std::string dest = octlc::pretrained_checkpoint_path(*id, dir);
    octlc::synthesize_pretrained(*id, args.seed, dest);
    std::printf("synthesized calibrated stand-in weights: %s\n", dest.c_str());
    return 0;
  }

  std::string source = args.import_file;
  if (!args.url.empty()) {
    if (args.url.rfind("file://", 0) == 0) {
      source = args.url.substr(7);
    } else {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
      source = download_to_temp(args.url);
#else
      throw octlc::ConfigError("fetch: built without download support");
#endif
    }
  }
  if (source.empty()) {
    throw octlc::ConfigError(
        "fetch: choose one of --synthesize, --import FILE, --url URL");
  }
  const std::optional<std::string> digest =
      args.sha256.empty() ? std::nullopt : std::optional<std::string>(args.sha256);
  const std::string dest = octlc::install_weights(*id, source, digest, dir);
  std::printf("installed weights: %s\n", dest.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OCT lesion-classification experiment runner"};
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* sub_phantom =
      app.add_subcommand("phantom", "generate a synthetic layered-tissue dataset");
  sub_phantom->add_option("--benign", phantom.n_benign, "benign lesion count");
  sub_phantom->add_option("--invasive", phantom.n_invasive, "invasive lesion count");
  sub_phantom->add_option("--images-per-lesion", phantom.params.images_per_lesion,
                          "images per lesion");
  sub_phantom->add_option("--seed", phantom.params.seed, "generator seed");
  sub_phantom->add_option("--out", phantom.out_dir, "output directory")->required();
  sub_phantom->add_option("--height", phantom.params.image_height_px, "image rows");
  sub_phantom->add_option("--width", phantom.params.image_width_px, "image columns");
  sub_phantom->add_option("--bm-brightness", phantom.params.bm_brightness,
                          "basement-membrane line contrast in [0,1]");
  sub_phantom->add_option("--bm-disruption", phantom.params.bm_disruption,
                          "disrupted column fraction for invasive lesions");
  sub_phantom->add_option("--hyperkeratosis-prob",
                          phantom.params.hyperkeratosis_prob,
                          "probability of a bright superficial band");
  sub_phantom->add_option("--speckle", phantom.params.speckle_scale,
                          "speckle strength (relative stddev)");
  sub_phantom->add_option("--attenuation", phantom.params.attenuation_per_px,
                          "depth attenuation per pixel");

  SplitArgs split;
  auto* sub_split =
      app.add_subcommand("split", "build a leave-one-rare-lesion-out plan");
  sub_split->add_option("--manifest", split.manifest_path, "manifest CSV")->required();
  sub_split->add_option("--rare", split.rare, "rare label (default invasive)");
  sub_split->add_option("--val-common", split.n_val_common,
                        "common lesions per validation set");
  sub_split->add_option("--seed", split.seed, "plan seed");
  int folds_override = -1;
  sub_split->add_option("--folds", folds_override, "override fold count (<= rare count)");
  sub_split->add_option("--out", split.out_path, "plan file (default plan.json)");

  std::string run_config;
  auto* sub_run = app.add_subcommand("run", "train and evaluate one configuration");
  sub_run->add_option("--config", run_config, "run config JSON")->required();

  std::string matrix_config;
  auto* sub_matrix =
      app.add_subcommand("matrix", "run a backbones x regimes matrix");
  sub_matrix->add_option("--config", matrix_config, "matrix config JSON")->required();

  ReportArgs report;
  auto* sub_report = app.add_subcommand("report", "render a table from results files");
  sub_report->add_option("--results", report.results, "results.json files")
      ->required()
      ->expected(-1);
  sub_report->add_flag("--human-reference", report.human_reference,
                       "append the published human-rater reference row");
  sub_report->add_option("--out", report.out_path, "also write the table here");

  FetchArgs fetch;
  auto* sub_fetch = app.add_subcommand(
      "fetch-weights", "install pretrained backbone weights into the cache");
  sub_fetch->add_option("--backbone", fetch.backbone, "backbone id")->required();
  sub_fetch->add_flag("--synthesize", fetch.synthesize,
                      "write deterministic calibrated stand-in weights");
  sub_fetch->add_option("--seed", fetch.seed, "synthesis seed");
  sub_fetch->add_option("--import", fetch.import_file,
                        "install from a local safetensors file");
  sub_fetch->add_option("--url", fetch.url, "download (https:// or file://)");
  sub_fetch->add_option("--sha256", fetch.sha256, "expected content digest");
  sub_fetch->add_option("--dir", fetch.dir,
                        "cache directory (default $OCTLC_WEIGHTS_DIR)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sub_phantom->parsed()) return cmd_phantom(phantom);
    if (sub_split->parsed()) {
      if (folds_override > 0) split.folds = folds_override;
      return cmd_split(split);
    }
    if (sub_run->parsed()) return cmd_run(run_config);
    if (sub_matrix->parsed()) return cmd_matrix(matrix_config);
    if (sub_report->parsed()) return cmd_report(report);
    if (sub_fetch->parsed()) return cmd_fetch_weights(fetch);
  } catch (const octlc::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.category().c_str(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
