#include "splits.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace rili {

namespace {

// Holdout target share. The comparison uses the smallest share that rounds to
// 37.6% at one decimal so a 221-sample cohort stops at exactly 83 scans.
bool holdout_reached(int64_t holdout_samples, int64_t total_samples) {
    return 2000 * holdout_samples >= 751 * total_samples;
}

struct PatientInfo {
    std::vector<size_t> row_idx; // into manifest rows
    bool has_pos = false;
    bool has_neg = false;
};

bool both_classes(const std::vector<ManifestRow>& rows, const std::vector<std::string>& ids,
                  const std::unordered_map<std::string, size_t>& scan_to_row) {
    bool pos = false, neg = false;
    for (const auto& id : ids) {
        int label = rows[scan_to_row.at(id)].label;
        (label == 1 ? pos : neg) = true;
    }
    return pos && neg;
}

} // namespace

SplitSpec make_splits(const Manifest& m, uint64_t seed) {
    validate_manifest(m);
    std::vector<std::string> patients = patient_ids(m);
    if (patients.size() < 10)
        throw ValidationError("make_splits: need at least 10 patients, got " + std::to_string(patients.size()));

    std::unordered_map<std::string, PatientInfo> by_patient;
    bool any_pos = false, any_neg = false;
    for (size_t i = 0; i < m.rows.size(); ++i) {
        auto& info = by_patient[m.rows[i].patient_id];
        info.row_idx.push_back(i);
        (m.rows[i].label == 1 ? info.has_pos : info.has_neg) = true;
        (m.rows[i].label == 1 ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg) throw ValidationError("make_splits: manifest must contain both classes");

    const int64_t total = static_cast<int64_t>(m.rows.size());
    std::unordered_map<std::string, size_t> scan_to_row;
    for (size_t i = 0; i < m.rows.size(); ++i) scan_to_row[m.rows[i].scan_id] = i;

    for (uint64_t attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::string> order = patients;
        Rng rng = Rng::derive(seed, "splits", attempt);
        rng.shuffle(order);

        std::unordered_set<std::string> holdout_set;
        size_t next = 0;
        int64_t holdout_samples = 0;
        while (next < order.size() && !holdout_reached(holdout_samples, total)) {
            holdout_samples += static_cast<int64_t>(by_patient[order[next]].row_idx.size());
            holdout_set.insert(order[next]);
            ++next;
        }
        std::array<std::unordered_set<std::string>, 5> fold_patients;
        for (size_t i = next; i < order.size(); ++i) fold_patients[(i - next) % 5].insert(order[i]);

        SplitSpec spec;
        spec.seed = seed;
        // Scan ids in manifest order keeps the result independent of hash
        // iteration and stable across runs.
        for (const auto& r : m.rows)
            if (holdout_set.count(r.patient_id)) spec.holdout.push_back(r.scan_id);
        for (int f = 0; f < 5; ++f) {
            for (const auto& r : m.rows) {
                if (holdout_set.count(r.patient_id)) continue;
                if (fold_patients[f].count(r.patient_id))
                    spec.folds[f].val.push_back(r.scan_id);
                else
                    spec.folds[f].train.push_back(r.scan_id);
            }
        }

        bool ok = both_classes(m.rows, spec.holdout, scan_to_row);
        for (int f = 0; f < 5 && ok; ++f)
            ok = both_classes(m.rows, spec.folds[f].train, scan_to_row) &&
                 both_classes(m.rows, spec.folds[f].val, scan_to_row);
        if (!ok) continue;

        validate_splits(spec, m);
        return spec;
    }
    throw Error("make_splits: no class-balanced patient split found after 100 reshuffles; "
                "the cohort is too small or too skewed");
}

void validate_splits(const SplitSpec& s, const Manifest& m) {
    std::unordered_map<std::string, size_t> scan_to_row;
    for (size_t i = 0; i < m.rows.size(); ++i) scan_to_row[m.rows[i].scan_id] = i;

    auto patients_of = [&](const std::vector<std::string>& ids) {
        std::unordered_set<std::string> out;
        for (const auto& id : ids) {
            auto it = scan_to_row.find(id);
            if (it == scan_to_row.end()) throw ValidationError("splits: unknown scan_id '" + id + "'");
            out.insert(m.rows[it->second].patient_id);
        }
        return out;
    };
    auto check_unique = [](const std::vector<std::string>& ids, const std::string& where) {
        std::unordered_set<std::string> seen;
        for (const auto& id : ids)
            if (!seen.insert(id).second)
                throw ValidationError("splits: scan '" + id + "' appears twice in " + where);
    };

    check_unique(s.holdout, "holdout");
    auto holdout_patients = patients_of(s.holdout);

    std::unordered_set<std::string> pool_union;
    for (int f = 0; f < 5; ++f) {
        const auto& fold = s.folds[f];
        const std::string tag = "fold " + std::to_string(f);
        if (fold.train.empty() || fold.val.empty())
            throw ValidationError("splits: " + tag + " has an empty train or val set");
        check_unique(fold.train, tag + " train");
        check_unique(fold.val, tag + " val");

        auto train_patients = patients_of(fold.train);
        auto val_patients = patients_of(fold.val);
        for (const auto& p : val_patients)
            if (train_patients.count(p))
                throw ValidationError("splits: patient '" + p + "' leaks between train and val of " + tag);
        for (const auto& id : fold.train)
            if (holdout_patients.count(m.rows[scan_to_row.at(id)].patient_id))
                throw ValidationError("splits: holdout patient leaks into " + tag + " train via scan '" + id + "'");
        for (const auto& id : fold.val)
            if (holdout_patients.count(m.rows[scan_to_row.at(id)].patient_id))
                throw ValidationError("splits: holdout patient leaks into " + tag + " val via scan '" + id + "'");

        std::unordered_set<std::string> val_set(fold.val.begin(), fold.val.end());
        for (const auto& id : fold.val)
            if (!pool_union.insert(id).second)
                throw ValidationError("splits: scan '" + id + "' is val in more than one fold");
        // train must be exactly pool minus val
        std::unordered_set<std::string> fold_scans(fold.train.begin(), fold.train.end());
        for (const auto& id : fold.val) fold_scans.insert(id);
        if (fold_scans.size() + s.holdout.size() != m.rows.size())
            throw ValidationError("splits: " + tag + " train+val does not cover the non-holdout pool");
        for (const auto& id : fold.train)
            if (val_set.count(id))
                throw ValidationError("splits: scan '" + id + "' is both train and val in " + tag);
    }
    std::unordered_set<std::string> holdout_set(s.holdout.begin(), s.holdout.end());
    if (pool_union.size() + holdout_set.size() != m.rows.size())
        throw ValidationError("splits: fold val sets do not partition the non-holdout pool");
    for (const auto& id : pool_union)
        if (holdout_set.count(id))
            throw ValidationError("splits: scan '" + id + "' is in both holdout and a fold");

    auto require_both = [&](const std::vector<std::string>& ids, const std::string& where) {
        bool pos = false, neg = false;
        for (const auto& id : ids) {
            int label = m.rows[scan_to_row.at(id)].label;
            (label == 1 ? pos : neg) = true;
        }
        if (!pos || !neg) throw ValidationError("splits: " + where + " is missing a class");
    };
    require_both(s.holdout, "holdout");
    for (int f = 0; f < 5; ++f) {
        require_both(s.folds[f].train, "fold " + std::to_string(f) + " train");
        require_both(s.folds[f].val, "fold " + std::to_string(f) + " val");
    }
}

void save_splits(const SplitSpec& s, const std::string& path) {
    nlohmann::ordered_json j;
    j["seed"] = s.seed;
    j["holdout"] = s.holdout;
    j["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : s.folds) j["folds"].push_back({{"train", f.train}, {"val", f.val}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write splits '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing splits '" + path + "'");
}

SplitSpec load_splits(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open splits '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("splits '" + path + "': " + e.what());
    }
    try {
        SplitSpec s;
        s.seed = j.at("seed").get<uint64_t>();
        s.holdout = j.at("holdout").get<std::vector<std::string>>();
        const auto& folds = j.at("folds");
        if (folds.size() != 5)
            throw FormatError("splits '" + path + "': expected 5 folds, got " + std::to_string(folds.size()));
        for (size_t f = 0; f < 5; ++f) {
            s.folds[f].train = folds[f].at("train").get<std::vector<std::string>>();
            s.folds[f].val = folds[f].at("val").get<std::vector<std::string>>();
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("splits '" + path + "': " + e.what());
    }
}

} // namespace rili
