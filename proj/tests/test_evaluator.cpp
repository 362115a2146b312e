#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "octlc/error.hpp"
#include "octlc/evaluator.hpp"
#include "octlc/rng.hpp"

using namespace octlc;

namespace {

// Independent oracle: expand the matrix into (truth, prediction) pairs and
// count outcomes directly, without reusing the formula code under test.
Metrics brute_force_metrics(const ConfusionMatrix& cm) {
  std::vector<std::pair<int, int>> pairs;  // (truth, pred), 1 = invasive
  for (long i = 0; i < cm.tp; ++i) pairs.emplace_back(1, 1);
  for (long i = 0; i < cm.fn; ++i) pairs.emplace_back(1, 0);
  for (long i = 0; i < cm.tn; ++i) pairs.emplace_back(0, 0);
  for (long i = 0; i < cm.fp; ++i) pairs.emplace_back(0, 1);

  long correct = 0, truth_pos = 0, truth_neg = 0, caught_pos = 0, caught_neg = 0;
  long pred_pos = 0, pred_neg = 0;
  for (const auto& [truth, pred] : pairs) {
    if (truth == pred) ++correct;
    if (truth == 1) {
      ++truth_pos;
      if (pred == 1) ++caught_pos;
    } else {
      ++truth_neg;
      if (pred == 0) ++caught_neg;
    }
    (pred == 1 ? pred_pos : pred_neg) += 1;
  }
  Metrics m;
  m.accuracy = 100.0 * correct / static_cast<double>(pairs.size());
  m.sensitivity = truth_pos > 0 ? 100.0 * caught_pos / truth_pos : 0.0;
  m.specificity = truth_neg > 0 ? 100.0 * caught_neg / truth_neg : 0.0;
  const double precision_pos = pred_pos > 0 ? static_cast<double>(caught_pos) / pred_pos : 0.0;
  const double recall_pos = truth_pos > 0 ? static_cast<double>(caught_pos) / truth_pos : 0.0;
  m.f1_invasive = (precision_pos + recall_pos) > 0.0
                      ? 100.0 * 2.0 * precision_pos * recall_pos /
                            (precision_pos + recall_pos)
                      : 0.0;
  const double precision_neg = pred_neg > 0 ? static_cast<double>(caught_neg) / pred_neg : 0.0;
  const double recall_neg = truth_neg > 0 ? static_cast<double>(caught_neg) / truth_neg : 0.0;
  const double f1_neg = (precision_neg + recall_neg) > 0.0
                            ? 100.0 * 2.0 * precision_neg * recall_neg /
                                  (precision_neg + recall_neg)
                            : 0.0;
  m.f1_macro = 0.5 * (m.f1_invasive + f1_neg);
  return m;
}

FoldResult fold_with(int index, long tp, long fp, long tn, long fn) {
  FoldResult fr;
  fr.fold_index = index;
  fr.lesion_confusion = {tp, fp, tn, fn};
  return fr;
}

}  // namespace

TEST_CASE("metric formulas on the published composition") {
  const Metrics perfect = metrics_from_confusion({9, 0, 91, 0});
  CHECK(perfect.accuracy == doctest::Approx(100.0));
  CHECK(perfect.sensitivity == doctest::Approx(100.0));
  CHECK(perfect.specificity == doctest::Approx(100.0));
  CHECK(perfect.f1_invasive == doctest::Approx(100.0));
  CHECK(perfect.f1_macro == doctest::Approx(100.0));
}

TEST_CASE("metric formulas on a mixed fold") {
  // 1 invasive caught, 7 of 9 benign correct.
  const Metrics m = metrics_from_confusion({1, 2, 7, 0});
  CHECK(m.sensitivity == doctest::Approx(100.0));
  CHECK(m.specificity == doctest::Approx(100.0 * 7.0 / 9.0));
  CHECK(m.accuracy == doctest::Approx(80.0));
  CHECK(m.f1_invasive == doctest::Approx(50.0));
}

TEST_CASE("degenerate rates report zero with a flag") {
  // Missed invasive, no predicted positives.
  const Metrics m = metrics_from_confusion({0, 0, 9, 1});
  CHECK(m.sensitivity == 0.0);
  CHECK(m.specificity == doctest::Approx(100.0));
  CHECK(m.accuracy == doctest::Approx(90.0));
  CHECK(m.f1_invasive == 0.0);
  CHECK(m.degenerate_f1_invasive);
  CHECK(!m.degenerate_sensitivity);

  // No positive-class lesions at all.
  const Metrics none = metrics_from_confusion({0, 1, 5, 0});
  CHECK(none.degenerate_sensitivity);
  CHECK(none.sensitivity == 0.0);

  CHECK_THROWS_AS(metrics_from_confusion({0, 0, 0, 0}), ValidationError);
}

TEST_CASE("metrics match the brute-force counting oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix cm;
    cm.tp = rng.uniform_int(0, 50);
    cm.fp = rng.uniform_int(0, 50);
    cm.tn = rng.uniform_int(0, 50);
    cm.fn = rng.uniform_int(0, 50);
    if (cm.total() == 0) cm.tn = 1;
    const Metrics fast = metrics_from_confusion(cm);
    const Metrics slow = brute_force_metrics(cm);
    CHECK(std::abs(fast.accuracy - slow.accuracy) < 1e-9);
    CHECK(std::abs(fast.sensitivity - slow.sensitivity) < 1e-9);
    CHECK(std::abs(fast.specificity - slow.specificity) < 1e-9);
    CHECK(std::abs(fast.f1_invasive - slow.f1_invasive) < 1e-9);
    CHECK(std::abs(fast.f1_macro - slow.f1_macro) < 1e-9);
  }
}

TEST_CASE("single-invasive folds quantize mean sensitivity") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FoldResult> folds;
    for (int f = 0; f < 8; ++f) {
      const bool caught = rng.bernoulli(0.6);
      folds.push_back(fold_with(f, caught ? 1 : 0, rng.uniform_int(0, 3),
                                rng.uniform_int(5, 9), caught ? 0 : 1));
    }
    const MetricsReport report = aggregate(folds);
    const double quantum = report.mean.sensitivity / 12.5;
    CHECK(std::abs(quantum - std::round(quantum)) < 1e-9);
  }
}

TEST_CASE("aggregate averages per-fold metrics") {
  SUBCASE("six of eight invasive lesions caught") {
    std::vector<FoldResult> folds;
    for (int f = 0; f < 8; ++f) {
      const bool caught = f < 6;
      folds.push_back(fold_with(f, caught ? 1 : 0, 0, 9, caught ? 0 : 1));
    }
    const MetricsReport report = aggregate(folds);
    CHECK(report.mean.sensitivity == doctest::Approx(75.0));
  }
  SUBCASE("a single fold aggregates to itself") {
    const auto fr = fold_with(0, 1, 2, 7, 0);
    const MetricsReport report = aggregate({fr});
    const Metrics direct = metrics_from_confusion(fr.lesion_confusion);
    CHECK(report.mean.accuracy == direct.accuracy);
    CHECK(report.mean.f1_macro == direct.f1_macro);
  }
  SUBCASE("identical folds aggregate to the common value") {
    std::vector<FoldResult> folds;
    for (int f = 0; f < 8; ++f) folds.push_back(fold_with(f, 1, 1, 8, 0));
    const MetricsReport report = aggregate(folds);
    const Metrics direct = metrics_from_confusion({1, 1, 8, 0});
    CHECK(report.mean.accuracy == doctest::Approx(direct.accuracy).epsilon(1e-12));
    CHECK(report.mean.specificity ==
          doctest::Approx(direct.specificity).epsilon(1e-12));
  }
  SUBCASE("aggregation is permutation invariant") {
    std::vector<FoldResult> folds;
    for (int f = 0; f < 6; ++f) {
      folds.push_back(fold_with(f, f % 2, f % 3, 7 - f % 3, 1 - f % 2));
    }
    const MetricsReport forward = aggregate(folds);
    std::vector<FoldResult> shuffled{folds[4], folds[1], folds[5],
                                     folds[0], folds[3], folds[2]};
    const MetricsReport permuted = aggregate(shuffled);
    CHECK(forward.mean.accuracy == permuted.mean.accuracy);
    CHECK(forward.mean.sensitivity == permuted.mean.sensitivity);
    CHECK(forward.mean.specificity == permuted.mean.specificity);
    CHECK(forward.mean.f1_macro == permuted.mean.f1_macro);
    for (std::size_t i = 0; i < forward.per_fold.size(); ++i) {
      CHECK(forward.per_fold[i].accuracy == permuted.per_fold[i].accuracy);
    }
  }
  SUBCASE("empty fold list is rejected") {
    CHECK_THROWS_AS(aggregate({}), ValidationError);
  }
}

TEST_CASE("report rendering reproduces the published rows") {
  MetricsReport report;
  report.backbone = "SE-Resnext50";
  report.regime = "RC";
  report.mean.accuracy = 82.76;
  report.mean.sensitivity = 75.00;
  report.mean.specificity = 84.95;
  report.mean.f1_macro = 81.98;

  const std::string table = render_report({report}, {human_rater_reference()});

  CHECK(table.find("82.76") != std::string::npos);
  const auto row_start = table.find("SE-Resnext50");
  REQUIRE(row_start != std::string::npos);
  const std::string row = table.substr(row_start, table.find('\n', row_start) - row_start);
  // Column order follows the published table: accuracy, sensitivity,
  // specificity, F1.
  CHECK(row.find("82.76") < row.find("75.00"));
  CHECK(row.find("75.00") < row.find("84.95"));
  CHECK(row.find("84.95") < row.find("81.98"));

  const auto human_start = table.find("Human Rater");
  REQUIRE(human_start != std::string::npos);
  const std::string human =
      table.substr(human_start, table.find('\n', human_start) - human_start);
  CHECK(human.find("81.50") != std::string::npos);
  CHECK(human.find("72.50") != std::string::npos);
  CHECK(human.find("81.50") < human.find("72.50"));
}

TEST_CASE("empty report list renders a header-only table") {
  const std::string table = render_report({}, {});
  CHECK(table.find("Model") != std::string::npos);
  CHECK(table.find("F1-Score") != std::string::npos);
  // Header line only.
  CHECK(std::count(table.begin(), table.end(), '\n') == 1);
}
