#ifndef OCTLC_SPLITS_HPP_
#define OCTLC_SPLITS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "octlc/dataset.hpp"

namespace octlc {

// One cross-validation fold. Validation holds exactly one rare-label
// lesion plus a fixed number of common-label lesions; everything else
// trains. Membership is by lesion, so no image of a validation lesion is
// ever seen in training.
struct Fold {
  int fold_index = 0;
  std::string val_rare;
  std::vector<std::string> val_common;
  std::vector<std::string> train;
};

struct SplitPlan {
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
  LesionLabel rare_label = LesionLabel::kInvasive;
  int n_val_common = 9;
  // The rare lesion kept permanently in training when the fold count is
  // R - 1 (the default); absent when an explicit fold count uses all R.
  std::optional<std::string> reserved_rare;
  // Set when the caller forced a fold count other than R - 1.
  std::optional<int> folds_override;
};

// Builds the leave-one-rare-lesion-out plan: R - 1 folds by default for R
// rare lesions (one seeded reserved rare lesion stays in training), each
// validating 1 rare + n_val_common common lesions, with common validation
// sets disjoint across folds. n_folds overrides the fold count (<= R).
// Deterministic given (manifest, seed).
SplitPlan make_splits(const DatasetManifest& manifest, LesionLabel rare_label,
                      int n_val_common, std::uint64_t seed,
                      std::optional<int> n_folds = std::nullopt);

// Checks every plan invariant against the manifest. Violations are data:
// the list is empty iff the plan is valid.
std::vector<std::string> verify_plan(const SplitPlan& plan,
                                     const DatasetManifest& manifest);

void save_plan(const SplitPlan& plan, const std::string& path);
SplitPlan load_plan(const std::string& path);

}  // namespace octlc

#endif  // OCTLC_SPLITS_HPP_
