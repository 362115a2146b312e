#include "octlc/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "octlc/error.hpp"

namespace octlc {

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.tn < 0 || cm.fn < 0) {
    throw ValidationError("metrics: negative confusion counts");
  }
  if (cm.total() == 0) {
    throw ValidationError("metrics: empty confusion matrix");
  }
  Metrics m;
  m.accuracy = 100.0 * static_cast<double>(cm.tp + cm.tn) / cm.total();

  if (cm.tp + cm.fn > 0) {
    m.sensitivity = 100.0 * static_cast<double>(cm.tp) / (cm.tp + cm.fn);
  } else {
    m.degenerate_sensitivity = true;
  }
  if (cm.tn + cm.fp > 0) {
    m.specificity = 100.0 * static_cast<double>(cm.tn) / (cm.tn + cm.fp);
  } else {
    m.degenerate_specificity = true;
  }

  // F1 is flagged degenerate when either constituent rate (precision or
  // recall for that class) is 0/0; the reported value stays a defined 0.
  const long f1_inv_denom = 2 * cm.tp + cm.fp + cm.fn;
  if (f1_inv_denom > 0) {
    m.f1_invasive = 100.0 * 2.0 * static_cast<double>(cm.tp) / f1_inv_denom;
  }
  m.degenerate_f1_invasive = (cm.tp + cm.fp == 0) || (cm.tp + cm.fn == 0);

  double f1_benign = 0.0;
  const long f1_ben_denom = 2 * cm.tn + cm.fn + cm.fp;
  if (f1_ben_denom > 0) {
    f1_benign = 100.0 * 2.0 * static_cast<double>(cm.tn) / f1_ben_denom;
  }
  m.degenerate_f1_benign = (cm.tn + cm.fn == 0) || (cm.tn + cm.fp == 0);
  m.f1_macro = 0.5 * (m.f1_invasive + f1_benign);
  return m;
}

MetricsReport aggregate(const std::vector<FoldResult>& folds) {
  if (folds.empty()) {
    throw ValidationError("aggregate: empty fold list");
  }
  std::vector<const FoldResult*> ordered;
  ordered.reserve(folds.size());
  for (const auto& f : folds) ordered.push_back(&f);
  std::sort(ordered.begin(), ordered.end(),
            [](const FoldResult* a, const FoldResult* b) {
              return a->fold_index < b->fold_index;
            });

  MetricsReport report;
  for (const FoldResult* f : ordered) {
    report.per_fold.push_back(metrics_from_confusion(f->lesion_confusion));
  }
  Metrics& mean = report.mean;
  for (const Metrics& m : report.per_fold) {
    mean.accuracy += m.accuracy;
    mean.sensitivity += m.sensitivity;
    mean.specificity += m.specificity;
    mean.f1_invasive += m.f1_invasive;
    mean.f1_macro += m.f1_macro;
    mean.degenerate_sensitivity |= m.degenerate_sensitivity;
    mean.degenerate_specificity |= m.degenerate_specificity;
    mean.degenerate_f1_invasive |= m.degenerate_f1_invasive;
    mean.degenerate_f1_benign |= m.degenerate_f1_benign;
  }
  const double n = static_cast<double>(report.per_fold.size());
  mean.accuracy /= n;
  mean.sensitivity /= n;
  mean.specificity /= n;
  mean.f1_invasive /= n;
  mean.f1_macro /= n;
  return report;
}

ReferenceRow human_rater_reference() {
  ReferenceRow row;
  row.name = "Human Rater";
  row.sensitivity = 81.50;
  row.specificity = 72.50;
  return row;
}

namespace {

std::string fmt_cell(std::optional<double> value) {
  if (!value) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *value);
  return buf;
}

void append_row(std::string& out, const std::string& model,
                const std::string& regime, const std::string& acc,
                const std::string& sens, const std::string& spec,
                const std::string& f1) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %-6s %9s %12s %12s %9s\n",
                model.c_str(), regime.c_str(), acc.c_str(), sens.c_str(),
                spec.c_str(), f1.c_str());
  out += buf;
}

}  // namespace

std::string render_report(const std::vector<MetricsReport>& reports,
                          const std::vector<ReferenceRow>& reference_rows) {
  std::string out;
  append_row(out, "Model", "Regime", "Accuracy", "Sensitivity", "Specificity",
             "F1-Score");
  for (const auto& r : reports) {
    append_row(out, r.backbone, r.regime, fmt_cell(r.mean.accuracy),
               fmt_cell(r.mean.sensitivity), fmt_cell(r.mean.specificity),
               fmt_cell(r.mean.f1_macro));
  }
  for (const auto& row : reference_rows) {
    append_row(out, row.name, "-", fmt_cell(row.accuracy),
               fmt_cell(row.sensitivity), fmt_cell(row.specificity),
               fmt_cell(row.f1));
  }
  return out;
}

}  // namespace octlc
