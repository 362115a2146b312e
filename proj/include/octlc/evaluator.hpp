#ifndef OCTLC_EVALUATOR_HPP_
#define OCTLC_EVALUATOR_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace octlc {

// Positive class = invasive.
struct ConfusionMatrix {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  long total() const { return tp + fp + tn + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Rates in percent. A rate whose denominator is zero reports 0 and sets
// the matching degenerate flag so cross-fold means stay well defined.
struct Metrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1_invasive = 0.0;
  double f1_macro = 0.0;
  bool degenerate_sensitivity = false;
  bool degenerate_specificity = false;
  bool degenerate_f1_invasive = false;
  bool degenerate_f1_benign = false;
};

Metrics metrics_from_confusion(const ConfusionMatrix& cm);

struct FoldResult {
  int fold_index = 0;
  std::map<std::string, double> per_image_probs;  // image_id -> invasive prob
  std::map<std::string, int> per_lesion_pred;     // lesion_id -> label index
  ConfusionMatrix lesion_confusion;
  ConfusionMatrix image_confusion;  // diagnostic, image-level counts
};

struct MetricsReport {
  std::vector<Metrics> per_fold;
  Metrics mean;
  std::string backbone;
  std::string regime;
  std::string config_digest;
  std::uint64_t global_seed = 0;
};

// Per-fold metrics then the arithmetic mean over folds (macro over folds,
// not pooled confusion). Folds are ordered by fold_index first, so the
// result does not depend on input order.
MetricsReport aggregate(const std::vector<FoldResult>& folds);

// A fixed table row rendered for comparison, e.g. the published human
// rater reference; absent values print as "-".
struct ReferenceRow {
  std::string name;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
};

ReferenceRow human_rater_reference();

// Renders one row per report (mean values, two decimals) plus optional
// static reference rows. The F1 column shows f1_macro; f1_invasive is in
// the machine-readable output.
std::string render_report(const std::vector<MetricsReport>& reports,
                          const std::vector<ReferenceRow>& reference_rows = {});

}  // namespace octlc

#endif  // OCTLC_EVALUATOR_HPP_
