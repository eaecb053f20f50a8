#include "report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "manifest.hpp"

namespace rili {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& ctx) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError(ctx + ": bad number '" + s + "'");
    return v;
}

int regime_rank(const std::string& r) {
    if (r == "NFT") return 0;
    if (r == "FFT") return 1;
    if (r == "LoRA") return 2;
    return 3;
}

// sample mean and (n-1) std over one metric
std::pair<double, double> fold_stat(const std::vector<MetricsRecord>& folds, double MetricsRecord::* field) {
    double mean = 0;
    for (const auto& f : folds) mean += f.*field;
    mean /= static_cast<double>(folds.size());
    double var = 0;
    for (const auto& f : folds) var += (f.*field - mean) * (f.*field - mean);
    double sd = folds.size() > 1 ? std::sqrt(var / static_cast<double>(folds.size() - 1)) : 0.0;
    return {mean, sd};
}

std::string pm_cell(const std::vector<MetricsRecord>& folds, double MetricsRecord::* field) {
    auto [mean, sd] = fold_stat(folds, field);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f±%.3f", mean, sd);
    return buf;
}

} // namespace

CellReport read_cell(const std::string& dir) {
    namespace fs = std::filesystem;
    CellReport cell;
    cell.dir = dir;

    fs::path metrics = fs::path(dir) / "metrics.csv";
    std::ifstream in(metrics);
    if (!in) throw IoError("run '" + dir + "' has no metrics.csv");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("'" + metrics.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string header = "config,crop_mm,input_mode,regime,roc_auc,f1,precision,recall,specificity,accuracy";
    if (line != header)
        throw FormatError("'" + metrics.string() + "': unexpected header '" + line + "'");

    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split(line, ',');
        const std::string ctx = metrics.string() + " line " + std::to_string(line_no);
        if (cells.size() != 10) throw FormatError(ctx + ": expected 10 columns");
        std::string config = cells[0];
        size_t slash = config.find('/');
        if (slash == std::string::npos) throw FormatError(ctx + ": config column must be <preset>/<row>");
        std::string preset = config.substr(0, slash);
        std::string kind = config.substr(slash + 1);
        if (cell.preset.empty()) {
            cell.preset = preset;
            cell.crop_mm = parse_num(cells[1], ctx);
            cell.input_mode = cells[2];
            cell.regime = cells[3];
        }
        MetricsRecord r;
        r.roc_auc = parse_num(cells[4], ctx);
        r.f1 = parse_num(cells[5], ctx);
        r.precision = parse_num(cells[6], ctx);
        r.recall = parse_num(cells[7], ctx);
        r.specificity = parse_num(cells[8], ctx);
        r.accuracy = parse_num(cells[9], ctx);
        if (kind == "aggregate")
            cell.has_aggregate = true;
        else
            cell.folds.push_back(r);
    }
    if (cell.folds.empty()) throw FormatError("'" + metrics.string() + "' has no fold rows");

    fs::path timing = fs::path(dir) / "timing.json";
    std::ifstream tin(timing);
    if (tin) {
        nlohmann::json j;
        try {
            tin >> j;
            cell.trainable_params = j.at("trainable_params").get<int64_t>();
            cell.mean_epoch_seconds = j.at("mean_epoch_seconds").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("'" + timing.string() + "': " + e.what());
        }
    }
    return cell;
}

void report_tables(const std::vector<std::string>& cell_dirs, const std::string& out_dir) {
    if (cell_dirs.empty()) throw ValidationError("report: no runs given");

    std::vector<CellReport> cells;
    std::vector<std::string> incomplete;
    for (const auto& dir : cell_dirs) {
        try {
            CellReport c = read_cell(dir);
            if (!c.has_aggregate) {
                incomplete.push_back(dir + " (no aggregate row)");
                continue;
            }
            cells.push_back(std::move(c));
        } catch (const Error& e) {
            incomplete.push_back(dir + " (" + e.what() + ")");
        }
    }
    if (!incomplete.empty()) {
        std::string msg = "report: incomplete runs:";
        for (const auto& s : incomplete) msg += "\n  " + s;
        throw Error(msg);
    }

    std::map<std::string, std::vector<const CellReport*>> by_preset;
    for (const auto& c : cells) by_preset[c.preset].push_back(&c);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    for (auto& [preset, group] : by_preset) {
        std::sort(group.begin(), group.end(), [](const CellReport* a, const CellReport* b) {
            if (regime_rank(a->regime) != regime_rank(b->regime))
                return regime_rank(a->regime) < regime_rank(b->regime);
            if (a->crop_mm != b->crop_mm) return a->crop_mm < b->crop_mm;
            return a->input_mode < b->input_mode;
        });
        fs::path path = fs::path(out_dir) / ("summary_" + preset + ".csv");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
        out << "regime,crop_mm,input_mode,roc_auc,f1,precision,recall,specificity,accuracy\n";
        for (const CellReport* c : group) {
            out << c->regime << ',' << c->crop_mm << ',' << c->input_mode << ','
                << pm_cell(c->folds, &MetricsRecord::roc_auc) << ',' << pm_cell(c->folds, &MetricsRecord::f1)
                << ',' << pm_cell(c->folds, &MetricsRecord::precision) << ','
                << pm_cell(c->folds, &MetricsRecord::recall) << ','
                << pm_cell(c->folds, &MetricsRecord::specificity) << ','
                << pm_cell(c->folds, &MetricsRecord::accuracy) << "\n";
        }
    }

    // one row per preset x regime: parameter budget and epoch wall time
    std::map<std::pair<std::string, int>, std::pair<const CellReport*, std::pair<double, int>>> budget;
    for (const auto& c : cells) {
        auto key = std::make_pair(c.preset, regime_rank(c.regime));
        auto& slot = budget[key];
        if (slot.first == nullptr) slot.first = &c;
        slot.second.first += c.mean_epoch_seconds;
        slot.second.second += 1;
    }
    fs::path pt = fs::path(out_dir) / "params_time.csv";
    std::ofstream out(pt, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + pt.string() + "'");
    out << "preset,regime,trainable_params,mean_epoch_seconds\n";
    for (const auto& [key, slot] : budget) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", slot.second.first / std::max(1, slot.second.second));
        out << key.first << ',' << slot.first->regime << ',' << slot.first->trainable_params << ',' << buf
            << "\n";
    }
}

namespace {

void metric_row(std::string& text, const std::string& tag, const MetricsRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %7.3f %7.3f %9.3f %7.3f %11.3f %8.3f\n", tag.c_str(), r.roc_auc,
                  r.f1, r.precision, r.recall, r.specificity, r.accuracy);
    text += buf;
}

std::string metrics_table(const std::vector<MetricsRecord>& folds) {
    std::string text = "fold       roc_auc      f1 precision  recall specificity accuracy\n";
    for (size_t f = 0; f < folds.size(); ++f) metric_row(text, std::to_string(f), folds[f]);
    auto pm = [&](double MetricsRecord::* field) {
        auto [mean, sd] = fold_stat(folds, field);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f±%.3f", mean, sd);
        return std::string(buf);
    };
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %s %s %s %s %s %s\n", "mean±std",
                  pm(&MetricsRecord::roc_auc).c_str(), pm(&MetricsRecord::f1).c_str(),
                  pm(&MetricsRecord::precision).c_str(), pm(&MetricsRecord::recall).c_str(),
                  pm(&MetricsRecord::specificity).c_str(), pm(&MetricsRecord::accuracy).c_str());
    text += buf;
    return text;
}

} // namespace

std::string cell_text(const CellReport& cell) {
    std::string text = "run: " + cell.dir + "\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "cell: %s, crop %g mm, %s, %s\n", cell.preset.c_str(), cell.crop_mm,
                  cell.input_mode.c_str(), cell.regime.c_str());
    text += buf;
    if (cell.trainable_params > 0) {
        std::snprintf(buf, sizeof(buf), "trainable params: %lld, mean epoch: %.3f s\n",
                      static_cast<long long>(cell.trainable_params), cell.mean_epoch_seconds);
        text += buf;
    }
    text += metrics_table(cell.folds);
    return text;
}

std::string eval_run(const std::string& run_dir, const std::string& subgroup,
                     const std::string& manifest_path) {
    CellReport cell = read_cell(run_dir);
    if (subgroup.empty()) return cell_text(cell);

    namespace fs = std::filesystem;
    // per-scan holdout scores, one column per fold
    fs::path scores_path = fs::path(run_dir) / "holdout_scores.csv";
    std::ifstream in(scores_path);
    if (!in) throw IoError("run '" + run_dir + "' has no holdout_scores.csv");
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "scan_id,label,fold0,fold1,fold2,fold3,fold4")
        throw FormatError("'" + scores_path.string() + "': unexpected header");
    struct ScanScores {
        std::string scan_id;
        int label;
        std::array<double, 5> fold;
    };
    std::vector<ScanScores> scans;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split(line, ',');
        const std::string ctx = scores_path.string() + " line " + std::to_string(line_no);
        if (cells.size() != 7) throw FormatError(ctx + ": expected 7 columns");
        ScanScores s;
        s.scan_id = cells[0];
        s.label = static_cast<int>(parse_num(cells[1], ctx));
        for (int f = 0; f < 5; ++f) s.fold[f] = parse_num(cells[2 + f], ctx);
        scans.push_back(std::move(s));
    }

    std::string mpath = manifest_path;
    if (mpath.empty()) {
        std::ifstream cin(fs::path(run_dir) / "config.json");
        if (!cin) throw IoError("run '" + run_dir + "' has no config.json; pass the manifest explicitly");
        nlohmann::json j;
        try {
            cin >> j;
            mpath = j.at("manifest").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("config.json: " + std::string(e.what()));
        }
    }
    Manifest m = load_manifest(mpath);
    auto subset = subgroup_filter(m.rows, subgroup);
    std::unordered_set<std::string> keep;
    for (const auto& r : subset) keep.insert(r.scan_id);

    std::vector<int> labels;
    std::vector<std::vector<double>> fold_scores(5);
    for (const auto& s : scans) {
        if (!keep.count(s.scan_id)) continue;
        labels.push_back(s.label);
        for (int f = 0; f < 5; ++f) fold_scores[f].push_back(s.fold[f]);
    }
    if (labels.empty()) throw ValidationError("no samples in subgroup '" + subgroup + "' within the holdout");

    std::vector<MetricsRecord> folds;
    for (int f = 0; f < 5; ++f) folds.push_back(confusion_metrics(fold_scores[f], labels, 0.5));

    std::string text = cell_text(cell);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "\nsubgroup %s: %zu of %zu holdout scans\n", subgroup.c_str(),
                  labels.size(), scans.size());
    text += buf;
    text += metrics_table(folds);
    return text;
}

} // namespace rili
