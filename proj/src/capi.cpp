#include "rili.h"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "core/autodiff.hpp"
#include "core/checkpoint.hpp"
#include "core/dataset.hpp"
#include "core/error.hpp"
#include "core/experiment.hpp"
#include "core/lora.hpp"
#include "core/manifest.hpp"
#include "core/model.hpp"
#include "core/model_forward.hpp"
#include "core/report.hpp"
#include "core/splits.hpp"
#include "core/synth.hpp"

namespace {

thread_local std::string g_last_error;

template <typename F>
rili_status guard(F&& f) {
    try {
        f();
        g_last_error.clear();
        return RILI_OK;
    } catch (const rili::ValidationError& e) {
        g_last_error = e.what();
        return RILI_ERR_VALIDATION;
    } catch (const rili::IoError& e) {
        g_last_error = e.what();
        return RILI_ERR_IO;
    } catch (const rili::FormatError& e) {
        g_last_error = e.what();
        return RILI_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return RILI_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return RILI_ERR_RUNTIME;
    }
}

void require(bool ok, const char* msg) {
    if (!ok) throw rili::ValidationError(msg);
}

rili::LoRAConfig lora_config_from(int64_t rank, const char* targets_csv) {
    rili::LoRAConfig cfg; // defaults: rank 32, alpha 32, targets q,v
    if (rank > 0) {
        cfg.rank = rank;
        cfg.alpha = static_cast<double>(rank);
    }
    if (targets_csv != nullptr && *targets_csv != '\0') {
        cfg.targets.clear();
        std::string s(targets_csv);
        if (s.find(',') != std::string::npos) {
            std::string cur;
            for (char c : s + ",") {
                if (c == ',' || c == ' ') {
                    if (!cur.empty()) cfg.targets.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
        } else {
            for (char c : s)
                if (!std::isspace(static_cast<unsigned char>(c))) cfg.targets.push_back(std::string(1, c));
        }
    }
    return cfg;
}

char* dup_text(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

struct rili_model {
    rili::Model model;
};

extern "C" {

const char* rili_last_error(void) { return g_last_error.c_str(); }

const char* rili_version(void) { return "0.1.0"; }

void rili_free_text(char* text) { std::free(text); }

rili_status rili_synth_dataset(const rili_synth_params* params, const char* out_dir, int64_t* n_scans_out) {
    return guard([&] {
        require(params != nullptr, "synth: params is NULL");
        require(out_dir != nullptr, "synth: out_dir is NULL");
        rili::SynthConfig cfg;
        cfg.n_patients = params->n_patients;
        cfg.min_scans_per_patient = params->min_scans_per_patient;
        cfg.max_scans_per_patient = params->max_scans_per_patient;
        cfg.prevalence = params->prevalence;
        cfg.seed = params->seed;
        cfg.off_axial = params->off_axial != 0;
        rili::Manifest m = rili::synth_dataset(cfg, out_dir);
        if (n_scans_out != nullptr) *n_scans_out = static_cast<int64_t>(m.rows.size());
    });
}

rili_status rili_prep_dataset(const char* manifest_path, double crop_mm, const char* input_mode,
                              int64_t resolution, const char* out_dir) {
    return guard([&] {
        require(manifest_path != nullptr, "prep: manifest_path is NULL");
        require(input_mode != nullptr, "prep: input_mode is NULL");
        require(out_dir != nullptr, "prep: out_dir is NULL");
        rili::Manifest m = rili::load_manifest(manifest_path);
        rili::PrepConfig prep;
        prep.crop_side_mm = crop_mm;
        prep.input_mode = input_mode;
        prep.input_resolution = resolution;
        rili::PreppedDataset d = rili::prep_dataset(m, manifest_path, prep);
        rili::save_prepped(d, out_dir);
    });
}

rili_status rili_make_splits(const char* manifest_path, uint64_t seed, const char* out_path) {
    return guard([&] {
        require(manifest_path != nullptr, "split: manifest_path is NULL");
        require(out_path != nullptr, "split: out_path is NULL");
        rili::Manifest m = rili::load_manifest(manifest_path);
        rili::SplitSpec s = rili::make_splits(m, seed);
        rili::save_splits(s, out_path);
    });
}

rili_status rili_train_cell(const char* config_path, const char* splits_path, char* run_dir_out,
                            size_t run_dir_cap) {
    return guard([&] {
        require(config_path != nullptr, "train: config_path is NULL");
        require(splits_path != nullptr, "train: splits_path is NULL");
        rili::ExperimentSetup setup = rili::load_experiment_setup(config_path);
        require(!setup.manifest_path.empty(), "train: config is missing [experiment] manifest");
        rili::Manifest m = rili::load_manifest(setup.manifest_path);
        rili::SplitSpec splits = rili::load_splits(splits_path);
        std::filesystem::path run_dir =
            std::filesystem::path(setup.out_root) / rili::cell_name(setup.cell);
        (void)rili::run_experiment(m, setup.manifest_path, splits, setup.cell, run_dir.string());
        if (run_dir_out != nullptr && run_dir_cap > 0) {
            std::string s = run_dir.string();
            require(s.size() + 1 <= run_dir_cap, "train: run_dir buffer is too small");
            std::memcpy(run_dir_out, s.c_str(), s.size() + 1);
        }
    });
}

rili_status rili_eval_run(const char* run_dir, const char* subgroup, const char* manifest_path,
                          char** text_out) {
    return guard([&] {
        require(run_dir != nullptr, "eval: run_dir is NULL");
        require(text_out != nullptr, "eval: text_out is NULL");
        std::string text = rili::eval_run(run_dir, subgroup != nullptr ? subgroup : "",
                                          manifest_path != nullptr ? manifest_path : "");
        *text_out = dup_text(text);
    });
}

rili_status rili_report(const char* const* run_dirs, size_t n_dirs, const char* out_dir) {
    return guard([&] {
        require(run_dirs != nullptr, "report: run_dirs is NULL");
        require(out_dir != nullptr, "report: out_dir is NULL");
        std::vector<std::string> dirs;
        for (size_t i = 0; i < n_dirs; ++i) {
            require(run_dirs[i] != nullptr, "report: run_dirs entry is NULL");
            dirs.push_back(run_dirs[i]);
        }
        rili::report_tables(dirs, out_dir);
    });
}

rili_status rili_count_params(const char* preset, const char* regime, int64_t rank, const char* targets_csv,
                              int64_t* total_out, int64_t* trainable_out) {
    return guard([&] {
        require(preset != nullptr, "count-params: preset is NULL");
        require(regime != nullptr, "count-params: regime is NULL");
        rili::ModelConfig cfg = rili::preset_config(preset);
        rili::Regime r = rili::parse_regime(regime);
        rili::LoRAConfig lora = lora_config_from(rank, targets_csv);
        int64_t total = rili::plan_total(rili::plan_params(cfg));
        int64_t trainable = rili::trainable_under_regime(cfg, r, &lora);
        if (total_out != nullptr) *total_out = total;
        if (trainable_out != nullptr) *trainable_out = trainable;
    });
}

rili_status rili_presets_text(char** text_out) {
    return guard([&] {
        require(text_out != nullptr, "presets: text_out is NULL");
        static const char* names[] = {"dinov2-base-shape", "dinov2-small-shape", "toy-vit",
                                      "swin-base-shape",   "swin-small-shape",   "toy-swin"};
        std::string text = "preset              family  params\n";
        for (const char* name : names) {
            rili::ModelConfig cfg = rili::preset_config(name);
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%-19s %-7s %lld\n", name,
                          cfg.family == rili::Family::vit ? "vit" : "swin",
                          static_cast<long long>(rili::plan_total(rili::plan_params(cfg))));
            text += buf;
        }
        *text_out = dup_text(text);
    });
}

rili_status rili_model_create(const char* preset, uint64_t seed, rili_model** model_out) {
    return guard([&] {
        require(preset != nullptr, "model: preset is NULL");
        require(model_out != nullptr, "model: model_out is NULL");
        rili::ModelConfig cfg = rili::preset_config(preset);
        auto* m = new rili_model{rili::build_model<float>(cfg, seed)};
        *model_out = m;
    });
}

void rili_model_destroy(rili_model* model) { delete model; }

rili_status rili_model_param_count(const rili_model* model, int32_t trainable_only, int64_t* count_out) {
    return guard([&] {
        require(model != nullptr, "model: handle is NULL");
        require(count_out != nullptr, "model: count_out is NULL");
        *count_out = rili::count_params(model->model, trainable_only != 0);
    });
}

rili_status rili_model_apply_regime(rili_model* model, const char* regime, int64_t rank,
                                    const char* targets_csv, uint64_t seed, double* lr_out) {
    return guard([&] {
        require(model != nullptr, "model: handle is NULL");
        require(regime != nullptr, "model: regime is NULL");
        rili::Regime r = rili::parse_regime(regime);
        rili::LoRAConfig lora = lora_config_from(rank, targets_csv);
        double lr = rili::apply_regime(model->model, r, r == rili::Regime::lora ? &lora : nullptr, seed);
        if (lr_out != nullptr) *lr_out = lr;
    });
}

rili_status rili_model_merge_adapters(rili_model* model) {
    return guard([&] {
        require(model != nullptr, "model: handle is NULL");
        rili::merge_lora(model->model);
    });
}

rili_status rili_model_forward(rili_model* model, const float* input, int64_t batch, int64_t resolution,
                               float* logits_out) {
    return guard([&] {
        require(model != nullptr, "model: handle is NULL");
        require(input != nullptr, "model: input is NULL");
        require(logits_out != nullptr, "model: logits_out is NULL");
        require(batch > 0, "model: batch must be positive");
        require(resolution == model->model.cfg.input_resolution,
                "model: input resolution does not match the preset");
        rili::Tensor x({batch, 3, resolution, resolution});
        std::memcpy(x.data.data(), input, x.data.size() * sizeof(float));
        rili::VarT<float> logits = rili::forward_classify(model->model, rili::make_const(std::move(x)));
        std::memcpy(logits_out, logits->value.data.data(), logits->value.data.size() * sizeof(float));
    });
}

rili_status rili_model_save(const rili_model* model, const char* path) {
    return guard([&] {
        require(model != nullptr, "model: handle is NULL");
        require(path != nullptr, "model: path is NULL");
        rili::save_checkpoint(model->model, path);
    });
}

rili_status rili_model_load(rili_model* model, const char* path) {
    return guard([&] {
        require(model != nullptr, "model: handle is NULL");
        require(path != nullptr, "model: path is NULL");
        rili::load_checkpoint(model->model, path);
    });
}

} // extern "C"
