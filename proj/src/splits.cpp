#include "octlc/splits.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "octlc/error.hpp"
#include "octlc/rng.hpp"

using nlohmann::json;

namespace octlc {

SplitPlan make_splits(const DatasetManifest& manifest, LesionLabel rare_label,
                      int n_val_common, std::uint64_t seed,
                      std::optional<int> n_folds) {
  if (n_val_common <= 0) {
    throw ValidationError("splits: n_val_common must be positive");
  }

  std::vector<std::string> rare_ids;
  std::vector<std::string> common_ids;
  for (const auto& lesion : manifest.lesions) {
    (lesion.label == rare_label ? rare_ids : common_ids)
        .push_back(lesion.lesion_id);
  }
  const int rare_count = static_cast<int>(rare_ids.size());
  if (rare_count == 0) {
    throw ValidationError(std::string("splits: no lesions with rare label ") +
                          to_string(rare_label));
  }

  int fold_count = rare_count - 1;
  if (n_folds) {
    if (*n_folds < 1 || *n_folds > rare_count) {
      throw ValidationError(
          "splits: fold override must lie in [1, rare lesion count]");
    }
    fold_count = *n_folds;
  }
  if (fold_count < 1) {
    throw ValidationError(
        "splits: need at least 2 rare lesions to build folds (got " +
        std::to_string(rare_count) + ")");
  }
  const long needed = static_cast<long>(fold_count) * n_val_common;
  if (needed > static_cast<long>(common_ids.size())) {
    throw ValidationError(
        "splits: not enough common lesions for disjoint validation sets: need " +
        std::to_string(needed) + ", have " + std::to_string(common_ids.size()));
  }

  // Ids are sorted before shuffling so the plan depends only on the lesion
  // id set and the seed, not on manifest row order.
  std::sort(rare_ids.begin(), rare_ids.end());
  std::sort(common_ids.begin(), common_ids.end());
  Rng rng(derive_seed(seed, {0x53}));
  rng.shuffle(rare_ids);
  rng.shuffle(common_ids);

  SplitPlan plan;
  plan.seed = seed;
  plan.rare_label = rare_label;
  plan.n_val_common = n_val_common;
  if (n_folds && *n_folds != rare_count - 1) plan.folds_override = fold_count;
  if (fold_count < rare_count) plan.reserved_rare = rare_ids.back();

  std::set<std::string> all_ids;
  for (const auto& lesion : manifest.lesions) all_ids.insert(lesion.lesion_id);

  for (int f = 0; f < fold_count; ++f) {
    Fold fold;
    fold.fold_index = f;
    fold.val_rare = rare_ids[f];
    fold.val_common.assign(common_ids.begin() + static_cast<long>(f) * n_val_common,
                           common_ids.begin() + static_cast<long>(f + 1) * n_val_common);
    std::set<std::string> val(fold.val_common.begin(), fold.val_common.end());
    val.insert(fold.val_rare);
    for (const auto& id : all_ids) {
      if (!val.count(id)) fold.train.push_back(id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

std::vector<std::string> verify_plan(const SplitPlan& plan,
                                     const DatasetManifest& manifest) {
  std::vector<std::string> violations;
  auto flag = [&violations](const std::string& msg) { violations.push_back(msg); };

  std::set<std::string> all_ids;
  std::set<std::string> rare_ids;
  for (const auto& lesion : manifest.lesions) {
    all_ids.insert(lesion.lesion_id);
    if (lesion.label == plan.rare_label) rare_ids.insert(lesion.lesion_id);
  }
  const int rare_count = static_cast<int>(rare_ids.size());

  const int expected_folds =
      plan.folds_override ? *plan.folds_override : rare_count - 1;
  if (static_cast<int>(plan.folds.size()) != expected_folds) {
    flag("plan has " + std::to_string(plan.folds.size()) + " folds, expected " +
         std::to_string(expected_folds));
  }

  std::set<std::string> seen_rares;
  std::set<std::string> seen_commons;
  for (const auto& fold : plan.folds) {
    const std::string where = "fold " + std::to_string(fold.fold_index);

    if (!all_ids.count(fold.val_rare)) {
      flag(where + ": val_rare " + fold.val_rare + " not in manifest");
    } else if (!rare_ids.count(fold.val_rare)) {
      flag(where + ": val_rare " + fold.val_rare + " does not carry the rare label");
    }
    if (!seen_rares.insert(fold.val_rare).second) {
      flag(where + ": rare lesion " + fold.val_rare + " validated in more than one fold");
    }
    if (plan.reserved_rare && fold.val_rare == *plan.reserved_rare) {
      flag(where + ": reserved rare lesion " + fold.val_rare + " used for validation");
    }

    if (static_cast<int>(fold.val_common.size()) != plan.n_val_common) {
      flag(where + ": has " + std::to_string(fold.val_common.size()) +
           " common validation lesions, expected " + std::to_string(plan.n_val_common));
    }
    std::set<std::string> val(fold.val_common.begin(), fold.val_common.end());
    if (val.size() != fold.val_common.size()) {
      flag(where + ": repeated lesion inside val_common");
    }
    for (const auto& id : fold.val_common) {
      if (!all_ids.count(id)) {
        flag(where + ": val_common lesion " + id + " not in manifest");
      } else if (rare_ids.count(id)) {
        flag(where + ": val_common lesion " + id + " carries the rare label");
      }
      if (!seen_commons.insert(id).second) {
        flag(where + ": common lesion " + id + " validated in more than one fold");
      }
    }
    val.insert(fold.val_rare);

    std::set<std::string> train(fold.train.begin(), fold.train.end());
    if (train.size() != fold.train.size()) {
      flag(where + ": repeated lesion inside train");
    }
    for (const auto& id : val) {
      if (train.count(id)) {
        flag(where + ": lesion " + id + " appears in both validation and training");
      }
    }
    for (const auto& id : train) {
      if (!all_ids.count(id)) flag(where + ": train lesion " + id + " not in manifest");
    }
    if (train.size() + val.size() != all_ids.size()) {
      flag(where + ": train and validation do not partition the lesion set");
    }
  }
  return violations;
}

void save_plan(const SplitPlan& plan, const std::string& path) {
  json j;
  j["seed"] = plan.seed;
  j["rare_label"] = to_string(plan.rare_label);
  j["n_val_common"] = plan.n_val_common;
  if (plan.reserved_rare) j["reserved_rare"] = *plan.reserved_rare;
  if (plan.folds_override) j["folds_override"] = *plan.folds_override;
  j["folds"] = json::array();
  for (const auto& fold : plan.folds) {
    j["folds"].push_back(json{{"fold_index", fold.fold_index},
                              {"val_rare", fold.val_rare},
                              {"val_common", fold.val_common},
                              {"train", fold.train}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("splits: cannot write plan file " + path);
  out << j.dump(2) << "\n";
}

SplitPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("splits: cannot open plan file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("splits: malformed plan file " + path + ": " + e.what());
  }
  SplitPlan plan;
  try {
    plan.seed = j.at("seed").get<std::uint64_t>();
    const auto label = parse_label(j.at("rare_label").get<std::string>());
    if (!label) throw ValidationError("splits: unknown rare_label in " + path);
    plan.rare_label = *label;
    plan.n_val_common = j.at("n_val_common").get<int>();
    if (j.contains("reserved_rare")) {
      plan.reserved_rare = j["reserved_rare"].get<std::string>();
    }
    if (j.contains("folds_override")) {
      plan.folds_override = j["folds_override"].get<int>();
    }
    for (const auto& jf : j.at("folds")) {
      Fold fold;
      fold.fold_index = jf.at("fold_index").get<int>();
      fold.val_rare = jf.at("val_rare").get<std::string>();
      fold.val_common = jf.at("val_common").get<std::vector<std::string>>();
      fold.train = jf.at("train").get<std::vector<std::string>>();
      plan.folds.push_back(std::move(fold));
    }
  } catch (const json::exception& e) {
    throw ValidationError("splits: malformed plan file " + path + ": " + e.what());
  }
  return plan;
}

}  // namespace octlc
