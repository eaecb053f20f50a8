// Command-line front end. Everything goes through the C interface in rili.h,
// so this binary exercises exactly the surface other language bindings get.
#include <rili.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

// 0 success, 2 validation, 3 anything that smells of I/O or worse.
int exit_code(rili_status s) {
    if (s == RILI_OK) return 0;
    std::fprintf(stderr, "error: %s\n", rili_last_error());
    return s == RILI_ERR_VALIDATION ? 2 : 3;
}

// '*' and '?' wildcards, no character classes.
bool glob_match(const std::string& pat, const std::string& name) {
    size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pat.size() && (pat[p] == '?' || pat[p] == name[n])) {
            ++p, ++n;
        } else if (p < pat.size() && pat[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pat.size() && pat[p] == '*') ++p;
    return p == pat.size();
}

// Expands a path pattern component by component, sorted for determinism.
std::vector<std::string> expand_glob(const std::string& pattern) {
    std::vector<std::string> comps;
    std::string cur;
    for (char c : pattern + "/") {
        if (c == '/') {
            if (!cur.empty()) comps.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    std::vector<fs::path> frontier{pattern.starts_with('/') ? fs::path("/") : fs::path(".")};
    for (const std::string& comp : comps) {
        std::vector<fs::path> next;
        bool wild = comp.find_first_of("*?") != std::string::npos;
        for (const fs::path& base : frontier) {
            std::error_code ec;
            if (!wild) {
                if (fs::exists(base / comp, ec)) next.push_back(base / comp);
            } else if (fs::is_directory(base, ec)) {
                for (const auto& entry : fs::directory_iterator(base, ec))
                    if (glob_match(comp, entry.path().filename().string()))
                        next.push_back(entry.path());
            }
        }
        frontier = std::move(next);
    }
    std::vector<std::string> out;
    out.reserve(frontier.size());
    for (const fs::path& p : frontier) out.push_back(p.lexically_normal().string());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lung-injury classification pipeline for post-SBRT CT follow-ups"};
    app.set_version_flag("--version", rili_version());
    app.require_subcommand(1);
    int rc = 0;

    // ---- synth -------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic CT cohort");
    rili_synth_params sp{40, 4, 7, 0.5, 0, 0};
    std::string synth_out;
    bool off_axial = false;
    synth->add_option("--patients", sp.n_patients, "Number of patients")->capture_default_str();
    synth->add_option("--prevalence", sp.prevalence, "Fraction of positive scans")
        ->capture_default_str();
    synth->add_option("--seed", sp.seed, "RNG seed")->capture_default_str();
    synth->add_option("--min-scans", sp.min_scans_per_patient, "Fewest follow-up scans per patient")
        ->capture_default_str();
    synth->add_option("--max-scans", sp.max_scans_per_patient, "Most follow-up scans per patient")
        ->capture_default_str();
    synth->add_flag("--off-axial", off_axial, "Place lesions off the mid-axial plane");
    synth->add_option("--out", synth_out, "Output directory (volumes/ + manifest.csv)")->required();
    synth->callback([&] {
        sp.off_axial = off_axial ? 1 : 0;
        int64_t n = 0;
        rili_status s = rili_synth_dataset(&sp, synth_out.c_str(), &n);
        if (s == RILI_OK)
            std::printf("wrote %lld scans under %s\n", static_cast<long long>(n), synth_out.c_str());
        rc = exit_code(s);
    });

    // ---- prep --------------------------------------------------------------
    auto* prep = app.add_subcommand("prep", "Resample, crop, window and cache model inputs");
    std::string prep_manifest, prep_mode = "ortho", prep_out;
    int64_t crop_mm = 50, resolution = 224;
    prep->add_option("--manifest", prep_manifest, "Dataset manifest CSV")->required();
    prep->add_option("--crop", crop_mm, "Isocenter crop side in mm")
        ->capture_default_str()
        ->check(CLI::IsMember({50, 75}));
    prep->add_option("--mode", prep_mode, "Slice layout fed to the model")
        ->capture_default_str()
        ->check(CLI::IsMember({"axial", "ortho", "axial_repeat", "orthogonal"}));
    prep->add_option("--resolution", resolution, "Square input resolution")->capture_default_str();
    prep->add_option("--out", prep_out, "Cache directory")->required();
    prep->callback([&] {
        std::string mode = prep_mode == "ortho"    ? "orthogonal"
                           : prep_mode == "axial"  ? "axial_repeat"
                                                   : prep_mode;
        rili_status s = rili_prep_dataset(prep_manifest.c_str(), static_cast<double>(crop_mm),
                                          mode.c_str(), resolution, prep_out.c_str());
        if (s == RILI_OK) std::printf("cached %s inputs under %s\n", mode.c_str(), prep_out.c_str());
        rc = exit_code(s);
    });

    // ---- split -------------------------------------------------------------
    auto* split = app.add_subcommand("split", "Patient-level holdout + 5-fold assignment");
    std::string split_manifest, split_out = "splits.json";
    uint64_t split_seed = 0;
    split->add_option("--manifest", split_manifest, "Dataset manifest CSV")->required();
    split->add_option("--seed", split_seed, "RNG seed")->capture_default_str();
    split->add_option("--out", split_out, "Where to write the split JSON")->capture_default_str();
    split->callback([&] {
        rili_status s = rili_make_splits(split_manifest.c_str(), split_seed, split_out.c_str());
        if (s == RILI_OK) std::printf("wrote %s\n", split_out.c_str());
        rc = exit_code(s);
    });

    // ---- train -------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train one grid cell from an INI config");
    train->footer("Config sections and defaults:\n"
                  "  [model]       preset = toy-vit\n"
                  "  [prep]        crop_mm = 50, input_mode = orthogonal\n"
                  "  [train]       batch_size = 8, max_epochs = 100, patience = 10,\n"
                  "                weight_decay = 0.01, seed = 0\n"
                  "  [lora]        rank = 32, alpha = 32, targets = q,v\n"
                  "  [experiment]  regime = lora, manifest (required), out_dir = runs\n"
                  "Learning rates are bound to the regime: nft 1e-3, lora 1e-4, fft 1e-6.");
    std::string train_config, train_splits;
    train->add_option("--config", train_config, "INI config (see footer for keys)")->required();
    train->add_option("--splits", train_splits, "Split JSON from `split`")->required();
    train->callback([&] {
        char run_dir[4096];
        rili_status s = rili_train_cell(train_config.c_str(), train_splits.c_str(), run_dir,
                                        sizeof run_dir);
        if (s == RILI_OK) std::printf("run directory: %s\n", run_dir);
        rc = exit_code(s);
    });

    // ---- eval --------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Summarize a finished run");
    std::string eval_run, eval_subgroup, eval_manifest;
    eval->add_option("--run", eval_run, "Run directory (one grid cell)")->required();
    eval->add_option("--subgroup", eval_subgroup,
                     "Re-score holdout scans matching a predicate, e.g. nodule_size_cm<=2.5");
    eval->add_option("--manifest", eval_manifest, "Override the manifest recorded in the run");
    eval->callback([&] {
        char* text = nullptr;
        rili_status s = rili_eval_run(eval_run.c_str(),
                                      eval_subgroup.empty() ? nullptr : eval_subgroup.c_str(),
                                      eval_manifest.empty() ? nullptr : eval_manifest.c_str(), &text);
        if (s == RILI_OK) std::fputs(text, stdout);
        rili_free_text(text);
        rc = exit_code(s);
    });

    // ---- report ------------------------------------------------------------
    auto* report = app.add_subcommand("report", "Aggregate finished runs into summary tables");
    std::string report_glob, report_out;
    report->add_option("--runs", report_glob, "Glob over run directories, e.g. 'runs/*'")
        ->required();
    report->add_option("--out", report_out, "Directory for the CSV tables")->required();
    report->callback([&] {
        std::vector<std::string> dirs = expand_glob(report_glob);
        std::erase_if(dirs, [](const std::string& d) {
            std::error_code ec;
            return !fs::is_directory(d, ec);
        });
        if (dirs.empty()) {
            std::fprintf(stderr, "error: no run directories match '%s'\n", report_glob.c_str());
            rc = 2;
            return;
        }
        std::vector<const char*> ptrs;
        ptrs.reserve(dirs.size());
        for (const std::string& d : dirs) ptrs.push_back(d.c_str());
        rili_status s = rili_report(ptrs.data(), ptrs.size(), report_out.c_str());
        if (s == RILI_OK)
            std::printf("wrote tables for %zu runs under %s\n", dirs.size(), report_out.c_str());
        rc = exit_code(s);
    });

    // ---- count-params ------------------------------------------------------
    auto* cp = app.add_subcommand("count-params", "Parameter budget for a preset under a regime");
    std::string cp_preset, cp_regime, cp_targets;
    int64_t cp_rank = 0;
    cp->add_option("--preset", cp_preset, "Preset name (see `presets`)")->required();
    cp->add_option("--regime", cp_regime, "Tuning regime")
        ->required()
        ->check(CLI::IsMember({"nft", "fft", "lora"}));
    cp->add_option("--rank", cp_rank, "Adapter rank; 0 keeps the default 32")->capture_default_str();
    cp->add_option("--targets", cp_targets, "Attention projections to adapt: q,v or qv (default q,v)");
    cp->callback([&] {
        int64_t total = 0, trainable = 0;
        rili_status s = rili_count_params(cp_preset.c_str(), cp_regime.c_str(), cp_rank,
                                          cp_targets.empty() ? nullptr : cp_targets.c_str(), &total,
                                          &trainable);
        if (s == RILI_OK)
            std::printf("preset     %s\nregime     %s\ntotal      %lld\ntrainable  %lld\n",
                        cp_preset.c_str(), cp_regime.c_str(), static_cast<long long>(total),
                        static_cast<long long>(trainable));
        rc = exit_code(s);
    });

    // ---- presets -----------------------------------------------------------
    auto* presets = app.add_subcommand("presets", "List model presets and their sizes");
    presets->callback([&] {
        char* text = nullptr;
        rili_status s = rili_presets_text(&text);
        if (s == RILI_OK) std::fputs(text, stdout);
        rili_free_text(text);
        rc = exit_code(s);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // bad usage is a validation error
    }
    return rc;
}
