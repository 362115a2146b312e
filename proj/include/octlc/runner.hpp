#ifndef OCTLC_RUNNER_HPP_
#define OCTLC_RUNNER_HPP_

#include <string>
#include <vector>

#include "octlc/config.hpp"
#include "octlc/evaluator.hpp"
#include "octlc/splits.hpp"

namespace octlc {

struct RunOutcome {
  MetricsReport report;
  SplitPlan plan;
  std::string results_path;  // machine-readable results file
  std::string report_path;   // rendered table
};

// Executes one experiment end to end: split plan, one trained model per
// fold, lesion-level evaluation, aggregated report. Completed folds whose
// recorded config digest matches are skipped; a run directory whose
// stored config has a different digest is refused.
RunOutcome run_experiment(const RunConfig& cfg);

struct MatrixOutcome {
  std::vector<MetricsReport> cell_reports;  // successful cells, table order
  std::vector<std::string> failed_cells;    // "<backbone> <regime>: error"
  std::string table;
  std::string report_path;
};

// Runs every (backbone, regime) cell in published-table row order (per
// backbone: SCR, FT, RC as listed) and renders one combined table. Cell
// failures are recorded and marked; remaining cells still run.
MatrixOutcome run_matrix(const MatrixConfig& cfg);

// Re-renders a combined table from stored results files.
std::string render_results_files(const std::vector<std::string>& result_paths,
                                 bool include_human_reference);

MetricsReport load_results_file(const std::string& path);

}  // namespace octlc

#endif  // OCTLC_RUNNER_HPP_
