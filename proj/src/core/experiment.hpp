#pragma once

#include <map>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "lora.hpp"
#include "manifest.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "splits.hpp"
#include "train.hpp"

namespace rili {

// One grid cell: model preset x crop x input mode x tuning regime.
struct ExperimentConfig {
    std::string preset = "toy-vit";
    double crop_mm = 50;                    // 50 or 75
    std::string input_mode = "orthogonal"; // or "axial_repeat"
    Regime regime = Regime::lora;
    LoRAConfig lora;
    TrainConfig train; // learning_rate is overridden by the regime binding
    uint64_t seed = 0;
};

void validate_experiment_config(const ExperimentConfig& cfg);

// Directory-safe cell id, a pure function of the cell coordinates,
// e.g. "toy-vit_crop50mm_orthogonal_lora".
std::string cell_name(const ExperimentConfig& cfg);

// Full 48-cell grid (4 presets x 2 crops x 2 input modes x 3 regimes) sharing
// the base config's train/lora settings and seed.
std::vector<ExperimentConfig> experiment_grid(const ExperimentConfig& base);

// Prep settings implied by a cell (window/spacing defaults, resolution from
// the model preset).
PrepConfig cell_prep_config(const ExperimentConfig& cfg);

struct ExperimentResult {
    ExperimentConfig cfg;
    std::vector<MetricsRecord> fold_holdout; // one per fold, on the holdout
    AggregateRecord aggregate;
    RocBand band;
    std::vector<RunHistory> histories;
    int64_t trainable_params = 0;
    double mean_epoch_seconds = 0;
};

// Runs 5-fold training for one cell and evaluates each fold's best checkpoint
// on the holdout. Writes under out_dir: metrics.csv, roc_band.csv,
// config.json, timing.json, and fold<k>/{best.ckpt,history.jsonl}. Everything
// except wall-time fields is a deterministic function of cfg.seed.
// `prepped` short-circuits volume loading; its settings must match the cell.
ExperimentResult run_experiment(const Manifest& m, const std::string& manifest_path, const SplitSpec& splits,
                                const ExperimentConfig& cfg, const std::string& out_dir,
                                const PreppedDataset* prepped = nullptr);

// ---- INI config ----------------------------------------------------------
// Sections: [model] preset; [prep] crop_mm, input_mode; [train] batch_size,
// max_epochs, patience, weight_decay, seed; [lora] rank, alpha, targets;
// [experiment] regime, manifest, out_dir.

struct IniFile {
    std::map<std::string, std::map<std::string, std::string>> sections;

    const std::string* find(const std::string& section, const std::string& key) const;
};

IniFile parse_ini(const std::string& path);

struct ExperimentSetup {
    std::string manifest_path;
    std::string out_root = "runs";
    ExperimentConfig cell;
};

ExperimentSetup load_experiment_setup(const std::string& ini_path);

} // namespace rili
