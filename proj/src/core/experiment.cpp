#include "experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace rili {

namespace {

std::string format_metric(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string crop_tag(double crop_mm) {
    if (crop_mm == std::floor(crop_mm)) return std::to_string(static_cast<int64_t>(crop_mm));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", crop_mm);
    return buf;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

void metrics_row(std::ofstream& out, const std::string& config, const ExperimentConfig& cfg,
                 const MetricsRecord& r) {
    out << config << ',' << crop_tag(cfg.crop_mm) << ',' << cfg.input_mode << ',' << regime_name(cfg.regime)
        << ',' << format_metric(r.roc_auc) << ',' << format_metric(r.f1) << ',' << format_metric(r.precision)
        << ',' << format_metric(r.recall) << ',' << format_metric(r.specificity) << ','
        << format_metric(r.accuracy) << "\n";
}

uint64_t fold_seed(uint64_t seed, int fold) {
    return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(fold + 1));
}

} // namespace

void validate_experiment_config(const ExperimentConfig& cfg) {
    (void)preset_config(cfg.preset); // throws on unknown preset
    if (cfg.crop_mm != 50 && cfg.crop_mm != 75)
        throw ValidationError("experiment: crop_mm must be 50 or 75, got " + crop_tag(cfg.crop_mm));
    if (cfg.input_mode != "orthogonal" && cfg.input_mode != "axial_repeat")
        throw ValidationError("experiment: input_mode must be 'orthogonal' or 'axial_repeat'");
    if (cfg.regime == Regime::lora) validate_lora_config(cfg.lora);
    validate_train_config(cfg.train);
}

std::string cell_name(const ExperimentConfig& cfg) {
    return cfg.preset + "_crop" + crop_tag(cfg.crop_mm) + "mm_" + cfg.input_mode + "_" +
           lower(regime_name(cfg.regime));
}

std::vector<ExperimentConfig> experiment_grid(const ExperimentConfig& base) {
    static const char* presets[] = {"dinov2-base-shape", "dinov2-small-shape", "swin-base-shape",
                                    "swin-small-shape"};
    static const double crops[] = {50, 75};
    static const char* modes[] = {"axial_repeat", "orthogonal"};
    static const Regime regimes[] = {Regime::nft, Regime::fft, Regime::lora};
    std::vector<ExperimentConfig> grid;
    for (const char* p : presets)
        for (double c : crops)
            for (const char* mode : modes)
                for (Regime r : regimes) {
                    ExperimentConfig cfg = base;
                    cfg.preset = p;
                    cfg.crop_mm = c;
                    cfg.input_mode = mode;
                    cfg.regime = r;
                    grid.push_back(cfg);
                }
    return grid;
}

PrepConfig cell_prep_config(const ExperimentConfig& cfg) {
    PrepConfig prep;
    prep.crop_side_mm = cfg.crop_mm;
    prep.input_mode = cfg.input_mode;
    prep.input_resolution = preset_config(cfg.preset).input_resolution;
    return prep;
}

ExperimentResult run_experiment(const Manifest& m, const std::string& manifest_path, const SplitSpec& splits,
                                const ExperimentConfig& cfg, const std::string& out_dir,
                                const PreppedDataset* prepped) {
    validate_experiment_config(cfg);
    validate_splits(splits, m); // leakage gate in front of every run
    const std::string cell = cell_name(cfg);

    PrepConfig prep = cell_prep_config(cfg);
    PreppedDataset local;
    if (prepped != nullptr) {
        if (prepped->prep.crop_side_mm != prep.crop_side_mm || prepped->prep.input_mode != prep.input_mode ||
            prepped->prep.input_resolution != prep.input_resolution)
            throw ValidationError("run_experiment: prepped dataset settings do not match cell " + cell);
    } else {
        local = prep_dataset(m, manifest_path, prep);
        prepped = &local;
    }

    std::filesystem::path root(out_dir);
    std::filesystem::create_directories(root);

    ModelConfig model_cfg = preset_config(cfg.preset);
    auto holdout_samples = gather_samples(*prepped, splits.holdout);
    std::vector<int> holdout_labels;
    for (const auto& s : holdout_samples) holdout_labels.push_back(s.label);

    ExperimentResult result;
    result.cfg = cfg;
    std::vector<std::vector<RocPoint>> curves;
    std::vector<std::vector<double>> holdout_scores(5);
    double seconds_sum = 0;
    int64_t epochs_total = 0;

    for (int fold = 0; fold < 5; ++fold) {
        const std::string ctx = "cell " + cell + " fold " + std::to_string(fold) + ": ";
        try {
            std::filesystem::path fold_dir = root / ("fold" + std::to_string(fold));
            std::filesystem::create_directories(fold_dir);

            uint64_t fseed = fold_seed(cfg.seed, fold);
            Model model = build_model<float>(model_cfg, fseed);
            double lr = apply_regime(model, cfg.regime, cfg.regime == Regime::lora ? &cfg.lora : nullptr, fseed);
            if (fold == 0) result.trainable_params = count_params(model, /*trainable_only=*/true);

            TrainConfig tc = cfg.train;
            tc.learning_rate = lr;
            tc.seed = fseed;

            auto train_samples = gather_samples(*prepped, splits.folds[fold].train);
            auto val_samples = gather_samples(*prepped, splits.folds[fold].val);
            RunHistory hist =
                train_fold(model, train_samples, val_samples, tc, (fold_dir / "best.ckpt").string());
            write_history(hist, (fold_dir / "history.jsonl").string());
            for (const auto& e : hist.epochs) seconds_sum += e.seconds;
            epochs_total += static_cast<int64_t>(hist.epochs.size());

            auto scores = predict_scores(model, holdout_samples, tc.batch_size);
            result.fold_holdout.push_back(confusion_metrics(scores, holdout_labels, 0.5));
            curves.push_back(roc_curve(scores, holdout_labels));
            holdout_scores[fold] = std::move(scores);
            result.histories.push_back(std::move(hist));
        } catch (const ValidationError& e) {
            throw ValidationError(ctx + e.what());
        } catch (const IoError& e) {
            throw IoError(ctx + e.what());
        } catch (const FormatError& e) {
            throw FormatError(ctx + e.what());
        } catch (const Error& e) {
            throw Error(ctx + e.what());
        }
    }

    result.aggregate = aggregate_folds(result.fold_holdout);
    result.band = roc_band(curves);
    result.mean_epoch_seconds = epochs_total > 0 ? seconds_sum / static_cast<double>(epochs_total) : 0.0;

    {
        std::ofstream out(root / "metrics.csv", std::ios::trunc);
        if (!out) throw IoError("cannot write '" + (root / "metrics.csv").string() + "'");
        out << "config,crop_mm,input_mode,regime,roc_auc,f1,precision,recall,specificity,accuracy\n";
        for (int fold = 0; fold < 5; ++fold)
            metrics_row(out, cfg.preset + "/fold" + std::to_string(fold), cfg, result.fold_holdout[fold]);
        MetricsRecord mean;
        mean.roc_auc = result.aggregate.roc_auc.mean;
        mean.f1 = result.aggregate.f1.mean;
        mean.precision = result.aggregate.precision.mean;
        mean.recall = result.aggregate.recall.mean;
        mean.specificity = result.aggregate.specificity.mean;
        mean.accuracy = result.aggregate.accuracy.mean;
        metrics_row(out, cfg.preset + "/aggregate", cfg, mean);
    }
    {
        // per-scan holdout scores let `eval` re-slice the run into subgroups
        std::ofstream out(root / "holdout_scores.csv", std::ios::trunc);
        if (!out) throw IoError("cannot write '" + (root / "holdout_scores.csv").string() + "'");
        out << "scan_id,label,fold0,fold1,fold2,fold3,fold4\n";
        for (size_t i = 0; i < splits.holdout.size(); ++i) {
            out << splits.holdout[i] << ',' << holdout_labels[i];
            for (int fold = 0; fold < 5; ++fold) out << ',' << format_metric(holdout_scores[fold][i]);
            out << "\n";
        }
    }
    {
        std::ofstream out(root / "roc_band.csv", std::ios::trunc);
        if (!out) throw IoError("cannot write '" + (root / "roc_band.csv").string() + "'");
        out << "fpr,tpr_mean,tpr_std\n";
        for (size_t i = 0; i < result.band.fpr.size(); ++i)
            out << format_metric(result.band.fpr[i]) << ',' << format_metric(result.band.tpr_mean[i]) << ','
                << format_metric(result.band.tpr_std[i]) << "\n";
    }
    {
        nlohmann::ordered_json j;
        j["cell"] = cell;
        j["preset"] = cfg.preset;
        j["crop_mm"] = cfg.crop_mm;
        j["input_mode"] = cfg.input_mode;
        j["regime"] = regime_name(cfg.regime);
        j["seed"] = cfg.seed;
        j["threshold"] = 0.5;
        j["manifest"] = manifest_path;
        if (cfg.regime == Regime::lora)
            j["lora"] = {{"rank", cfg.lora.rank}, {"alpha", cfg.lora.alpha}, {"targets", cfg.lora.targets}};
        j["train"] = {{"batch_size", cfg.train.batch_size},
                      {"learning_rate", regime_learning_rate(cfg.regime)},
                      {"max_epochs", cfg.train.max_epochs},
                      {"early_stop_patience", cfg.train.early_stop_patience},
                      {"weight_decay", cfg.train.weight_decay}};
        j["prep"] = {{"crop_side_mm", prep.crop_side_mm},
                     {"input_mode", prep.input_mode},
                     {"input_resolution", prep.input_resolution},
                     {"window_lo_hu", prep.window_lo_hu},
                     {"window_hi_hu", prep.window_hi_hu},
                     {"target_spacing_mm", prep.target_spacing_mm}};
        std::ofstream out(root / "config.json", std::ios::trunc);
        if (!out) throw IoError("cannot write '" + (root / "config.json").string() + "'");
        out << j.dump(2) << "\n";
    }
    {
        nlohmann::ordered_json j;
        j["trainable_params"] = result.trainable_params;
        j["mean_epoch_seconds"] = result.mean_epoch_seconds;
        j["total_epochs"] = epochs_total;
        std::ofstream out(root / "timing.json", std::ios::trunc);
        if (!out) throw IoError("cannot write '" + (root / "timing.json").string() + "'");
        out << j.dump(2) << "\n";
    }
    return result;
}

// ---- INI config ------------------------------------------------------------

const std::string* IniFile::find(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, const std::string& key) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw FormatError("config: key '" + key + "' has non-numeric value '" + v + "'");
    return out;
}

int64_t to_int(const std::string& v, const std::string& key) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw FormatError("config: key '" + key + "' has non-integer value '" + v + "'");
    return out;
}

} // namespace

IniFile parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    IniFile ini;
    std::string line, section;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw FormatError("config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw FormatError("config line " + std::to_string(line_no) + ": empty section name");
            ini.sections[section]; // section may stay empty
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw FormatError("config line " + std::to_string(line_no) + ": key outside any [section]");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw FormatError("config line " + std::to_string(line_no) + ": empty key");
        ini.sections[section][key] = value;
    }
    return ini;
}

ExperimentSetup load_experiment_setup(const std::string& ini_path) {
    IniFile ini = parse_ini(ini_path);
    ExperimentSetup setup;

    if (const auto* v = ini.find("model", "preset")) setup.cell.preset = *v;
    if (const auto* v = ini.find("prep", "crop_mm")) setup.cell.crop_mm = to_double(*v, "crop_mm");
    if (const auto* v = ini.find("prep", "input_mode")) setup.cell.input_mode = *v;
    if (const auto* v = ini.find("train", "batch_size"))
        setup.cell.train.batch_size = to_int(*v, "batch_size");
    if (const auto* v = ini.find("train", "max_epochs"))
        setup.cell.train.max_epochs = to_int(*v, "max_epochs");
    if (const auto* v = ini.find("train", "patience"))
        setup.cell.train.early_stop_patience = to_int(*v, "patience");
    if (const auto* v = ini.find("train", "weight_decay"))
        setup.cell.train.weight_decay = to_double(*v, "weight_decay");
    if (const auto* v = ini.find("train", "seed")) {
        setup.cell.train.seed = static_cast<uint64_t>(to_int(*v, "seed"));
        setup.cell.seed = setup.cell.train.seed;
    }
    if (const auto* v = ini.find("lora", "rank")) setup.cell.lora.rank = to_int(*v, "rank");
    if (const auto* v = ini.find("lora", "alpha")) setup.cell.lora.alpha = to_double(*v, "alpha");
    if (const auto* v = ini.find("lora", "targets")) {
        setup.cell.lora.targets.clear();
        std::string cur;
        for (char c : *v + ",") {
            if (c == ',' || c == ' ') {
                if (!cur.empty()) setup.cell.lora.targets.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    if (const auto* v = ini.find("experiment", "regime")) setup.cell.regime = parse_regime(*v);
    if (const auto* v = ini.find("experiment", "manifest")) setup.manifest_path = *v;
    if (const auto* v = ini.find("experiment", "out_dir")) setup.out_root = *v;

    validate_experiment_config(setup.cell);
    return setup;
}

} // namespace rili
