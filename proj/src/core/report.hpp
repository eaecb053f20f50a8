#pragma once

#include <string>
#include <vector>

#include "metrics.hpp"

namespace rili {

// Parsed artifacts of one finished grid cell.
struct CellReport {
    std::string dir;
    std::string preset;
    double crop_mm = 0;
    std::string input_mode;
    std::string regime; // "NFT" | "FFT" | "LoRA"
    std::vector<MetricsRecord> folds;
    bool has_aggregate = false;
    int64_t trainable_params = 0;
    double mean_epoch_seconds = 0;
};

// Reads <dir>/metrics.csv (+ timing.json when present). Missing files or rows
// surface as errors naming the directory.
CellReport read_cell(const std::string& dir);

// Writes summary_<preset>.csv per model family (one row per regime x crop x
// input mode, regimes ordered NFT, FFT, LoRA, cells "mean+/-std" to 3
// decimals) and params_time.csv (per preset x regime: trainable parameters
// and mean epoch seconds). Cells without an aggregate row abort with an error
// listing every incomplete run.
void report_tables(const std::vector<std::string>& cell_dirs, const std::string& out_dir);

// Human-readable summary of one finished run: per-fold holdout metrics plus
// the mean+/-std row.
std::string cell_text(const CellReport& cell);

// Summarizes <run_dir>. A non-empty subgroup predicate (see subgroup_filter)
// re-scores the persisted holdout scores on the matching scans only, using
// the manifest recorded in the run's config.json (manifest_path overrides).
std::string eval_run(const std::string& run_dir, const std::string& subgroup = "",
                     const std::string& manifest_path = "");

} // namespace rili
