#include "core/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/model_forward.hpp"
#include "core/rng.hpp"

namespace rili {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (cfg.max_epochs < 1) throw ValidationError("train: max_epochs must be >= 1");
    if (cfg.early_stop_patience < 1 || cfg.early_stop_patience >= cfg.max_epochs)
        throw ValidationError("train: early_stop_patience must be in [1, max_epochs)");
    if (cfg.learning_rate < 0 || cfg.weight_decay < 0) throw ValidationError("train: negative rate");
    if (cfg.adam_beta1 < 0 || cfg.adam_beta1 >= 1 || cfg.adam_beta2 < 0 || cfg.adam_beta2 >= 1)
        throw ValidationError("train: betas must lie in [0, 1)");
    if (cfg.adam_eps <= 0) throw ValidationError("train: adam_eps must be positive");
}

std::array<double, 2> class_weights(const std::vector<int>& labels) {
    int64_t counts[2] = {0, 0};
    for (const int y : labels) {
        if (y != 0 && y != 1) throw ValidationError("class_weights: labels must be 0 or 1");
        ++counts[y];
    }
    if (counts[0] == 0 || counts[1] == 0) throw Error("class_weights: a class is absent from the labels");
    const double n = static_cast<double>(labels.size());
    return {n / (2.0 * static_cast<double>(counts[0])), n / (2.0 * static_cast<double>(counts[1]))};
}

void AdamW::init(const Model& m) {
    slots_.clear();
    decay_.clear();
    step_count_ = 0;
    const auto plan = plan_params(m.cfg);
    for (const auto& name : m.order) {
        const auto& p = m.params.at(name);
        if (!p->requires_grad) continue;
        slots_.emplace(name, Slot{TensorT<double>::zeros(p->value.shape), TensorT<double>::zeros(p->value.shape)});
        if (param_kind(plan, name) == ParamKind::weight_matrix) decay_.insert(name);
    }
}

void AdamW::step(Model& m, const TrainConfig& cfg) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step_count_));
    for (auto& [name, slot] : slots_) {
        auto& p = m.params.at(name);
        if (!p->grad_ready) continue; // no gradient reached this parameter
        if (p->grad.shape != p->value.shape)
            throw Error("adamw: gradient shape mismatch for '" + name + "'");
        const bool decay = decay_.count(name) != 0;
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = static_cast<double>(p->grad.data[i]);
            double& m1 = slot.m1.data[i];
            double& m2 = slot.m2.data[i];
            m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * g;
            m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * g * g;
            const double w = static_cast<double>(p->value.data[i]);
            double next = w - cfg.learning_rate * (m1 / bc1) / (std::sqrt(m2 / bc2) + cfg.adam_eps);
            if (decay) next -= cfg.learning_rate * cfg.weight_decay * w;
            p->value.data[i] = static_cast<float>(next);
        }
    }
}

uint64_t frozen_checksum(const Model& m) {
    uint64_t sum = 0;
    for (const auto& name : m.order) {
        const auto& p = m.params.at(name);
        if (p->requires_grad) continue;
        uint64_t h = 1469598103934665603ull;
        auto mix = [&h](uint64_t v) {
            for (int b = 0; b < 8; ++b) {
                h ^= (v >> (8 * b)) & 0xff;
                h *= 1099511628211ull;
            }
        };
        for (const char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        for (const float f : p->value.data) mix(std::bit_cast<uint32_t>(f));
        sum += h;
    }
    return sum;
}

namespace {

Tensor stack_inputs(const std::vector<Sample>& samples, const std::vector<size_t>& order, size_t begin,
                    size_t end) {
    const Shape& one = samples[order[begin]].input.shape;
    Shape batched = one;
    batched.insert(batched.begin(), static_cast<int64_t>(end - begin));
    Tensor t = Tensor::zeros(batched);
    const size_t stride = samples[order[begin]].input.data.size();
    for (size_t i = begin; i < end; ++i) {
        const Tensor& in = samples[order[i]].input;
        if (in.shape != one) throw ValidationError("train: inconsistent sample shapes in one batch");
        std::copy(in.data.begin(), in.data.end(), t.data.begin() + static_cast<int64_t>((i - begin) * stride));
    }
    return t;
}

std::vector<size_t> identity_order(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

} // namespace

std::vector<double> predict_scores(const Model& m, const std::vector<Sample>& samples, int64_t batch_size) {
    if (samples.empty()) return {};
    const auto order = identity_order(samples.size());
    std::vector<double> scores;
    scores.reserve(samples.size());
    for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(samples.size(), begin + static_cast<size_t>(batch_size));
        auto logits = forward_classify(m, make_const(stack_inputs(samples, order, begin, end)));
        const Tensor& v = logits->value;
        if (v.shape.back() != 2) throw ValidationError("predict_scores: binary heads only");
        for (size_t r = 0; r < end - begin; ++r) {
            const double l0 = v.data[r * 2], l1 = v.data[r * 2 + 1];
            scores.push_back(1.0 / (1.0 + std::exp(l0 - l1)));
        }
    }
    return scores;
}

RunHistory train_fold(Model& m, const std::vector<Sample>& train, const std::vector<Sample>& val,
                      const TrainConfig& cfg, const std::string& checkpoint_path) {
    validate_train_config(cfg);
    if (train.empty() || val.empty()) throw Error("train_fold: empty split");
    std::vector<int> train_labels, val_labels;
    for (const auto& s : train) train_labels.push_back(s.label);
    for (const auto& s : val) val_labels.push_back(s.label);
    const auto w = class_weights(train_labels);
    const std::vector<double> weights{w[0], w[1]};

    AdamW opt;
    opt.init(m);
    zero_grads(m);

    RunHistory hist;
    EarlyStopper stopper;
    stopper.patience = cfg.early_stop_patience;

    for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        auto order = identity_order(train.size());
        Rng rng = Rng::derive(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
        rng.shuffle(order);

        double loss_sum = 0;
        for (size_t begin = 0; begin < train.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(train.size(), begin + static_cast<size_t>(cfg.batch_size));
            std::vector<int> labels;
            for (size_t i = begin; i < end; ++i) labels.push_back(train[order[i]].label);

            auto logits = forward_classify(m, make_const(stack_inputs(train, order, begin, end)));
            auto loss = softmax_ce_loss(logits, labels, weights);
            const double value = static_cast<double>(loss->value.data[0]);
            if (!std::isfinite(value))
                throw Error("train_fold: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                            std::to_string(begin));
            backward(loss);
            opt.step(m, cfg);
            zero_grads(m);
            loss_sum += value * static_cast<double>(end - begin);
        }

        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.val = confusion_metrics(predict_scores(m, val, cfg.batch_size), val_labels, 0.5);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(rec);

        if (stopper.improved(epoch, rec.val.roc_auc)) {
            hist.best_epoch = epoch;
            hist.best_val_auc = stopper.best;
            save_checkpoint(m, checkpoint_path);
        } else if (stopper.exhausted()) {
            break;
        }
    }

    if (hist.best_epoch > 0) {
        hist.checkpoint_path = checkpoint_path;
        load_checkpoint(m, checkpoint_path);
    }
    return hist;
}

void write_history(const RunHistory& h, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("history: cannot write '" + path + "'");
    for (size_t i = 0; i < h.epochs.size(); ++i) {
        const auto& e = h.epochs[i];
        nlohmann::ordered_json j;
        j["epoch"] = i + 1;
        j["train_loss"] = e.train_loss;
        j["val_roc_auc"] = e.val.roc_auc;
        j["val_f1"] = e.val.f1;
        j["val_accuracy"] = e.val.accuracy;
        j["seconds"] = e.seconds;
        os << j.dump() << "\n";
    }
    nlohmann::ordered_json tail;
    tail["best_epoch"] = h.best_epoch;
    tail["best_val_auc"] = h.best_val_auc;
    tail["checkpoint"] = h.checkpoint_path;
    os << tail.dump() << "\n";
}

BenchmarkReport benchmark_regimes(const ModelConfig& model_cfg, const LoRAConfig& lora_cfg,
                                  const std::vector<Regime>& regimes, const std::vector<Sample>& data,
                                  TrainConfig cfg, int64_t epochs) {
    if (data.empty()) throw Error("benchmark: no data");
    std::vector<int> labels;
    for (const auto& s : data) labels.push_back(s.label);
    const std::vector<double> weights{1.0, 1.0}; // timing does not depend on balance

    BenchmarkReport report;
    for (const Regime regime : regimes) {
        Model m = build_model<float>(model_cfg, cfg.seed);
        cfg.learning_rate = apply_regime(m, regime, &lora_cfg, cfg.seed);
        AdamW opt;
        opt.init(m);
        zero_grads(m);

        double total = 0;
        for (int64_t epoch = 1; epoch <= epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            auto order = identity_order(data.size());
            Rng rng = Rng::derive(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
            rng.shuffle(order);
            for (size_t begin = 0; begin < data.size(); begin += static_cast<size_t>(cfg.batch_size)) {
                const size_t end = std::min(data.size(), begin + static_cast<size_t>(cfg.batch_size));
                std::vector<int> batch_labels;
                for (size_t i = begin; i < end; ++i) batch_labels.push_back(data[order[i]].label);
                auto loss = softmax_ce_loss(forward_classify(m, make_const(stack_inputs(data, order, begin, end))),
                                            batch_labels, weights);
                backward(loss);
                opt.step(m, cfg);
                zero_grads(m);
            }
            total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        report.rows.push_back({regime, total / static_cast<double>(epochs), count_params(m, true)});
    }

    if (report.rows.size() == 3) {
        double t[3] = {-1, -1, -1};
        for (const auto& r : report.rows) t[static_cast<int>(r.regime)] = r.mean_epoch_seconds;
        if (t[0] > 0 && t[1] > 0 && t[2] > 0)
            report.ordering_holds = t[static_cast<int>(Regime::nft)] < t[static_cast<int>(Regime::lora)] &&
                                    t[static_cast<int>(Regime::lora)] < t[static_cast<int>(Regime::fft)];
    }
    return report;
}

} // namespace rili
