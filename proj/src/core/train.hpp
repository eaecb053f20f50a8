#pragma once

// AdamW training loop with weighted cross-entropy, per-epoch validation
// ROC-AUC, early stopping, and best-checkpoint selection.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core/lora.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"

namespace rili {

struct TrainConfig {
    int64_t batch_size = 8;
    double learning_rate = 1e-4;
    int64_t max_epochs = 100;
    int64_t early_stop_patience = 10;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

// Inverse-frequency weights w_c = N / (2 N_c); mean weight 1 when balanced.
std::array<double, 2> class_weights(const std::vector<int>& labels);

struct Sample {
    Tensor input; // (channels, res, res)
    int label = 0;
};

// Decoupled-decay Adam. Moments exist for parameters trainable at init;
// decay touches weight matrices only (never biases, norms, or tables).
class AdamW {
  public:
    void init(const Model& m);
    void step(Model& m, const TrainConfig& cfg);
    int64_t steps_taken() const { return step_count_; }

  private:
    struct Slot {
        TensorT<double> m1, m2;
    };
    std::unordered_map<std::string, Slot> slots_;
    std::unordered_set<std::string> decay_;
    int64_t step_count_ = 0;
};

template <class T>
void zero_grads(ModelT<T>& m) {
    for (const auto& name : m.order) m.params.at(name)->grad_ready = false;
}

// Order-insensitive fingerprint of every frozen parameter's bytes; training
// must never change it under NFT or LoRA.
uint64_t frozen_checksum(const Model& m);

// Class-1 probabilities in sample order (batched eval-mode forwards).
std::vector<double> predict_scores(const Model& m, const std::vector<Sample>& samples, int64_t batch_size);

// Improvement means beating the best monitored value by more than min_delta;
// ties keep the earlier epoch. Stop once `patience` epochs pass without one.
struct EarlyStopper {
    int64_t patience = 10;
    double min_delta = 1e-4;
    double best = -1e300;
    int64_t best_epoch = 0; // 1-based
    int64_t since = 0;

    bool improved(int64_t epoch, double value) {
        if (value > best + min_delta) {
            best = value;
            best_epoch = epoch;
            since = 0;
            return true;
        }
        ++since;
        return false;
    }
    bool exhausted() const { return since >= patience; }
};

struct EpochRecord {
    double train_loss = 0;
    MetricsRecord val;
    double seconds = 0;
};

struct RunHistory {
    std::vector<EpochRecord> epochs;
    int64_t best_epoch = 0; // 1-based; 0 = never improved over -inf (empty run)
    double best_val_auc = 0;
    std::string checkpoint_path;
};

// Epoch loop with seeded shuffles: improvement = val AUC gain > 1e-4 over the
// best so far; stops after `early_stop_patience` epochs without one. The best
// checkpoint is written to `checkpoint_path` and reloaded before returning.
RunHistory train_fold(Model& m, const std::vector<Sample>& train, const std::vector<Sample>& val,
                      const TrainConfig& cfg, const std::string& checkpoint_path);

void write_history(const RunHistory& h, const std::string& path); // one JSON object per epoch line

struct RegimeTiming {
    Regime regime = Regime::nft;
    double mean_epoch_seconds = 0;
    int64_t trainable = 0;
};

struct BenchmarkReport {
    std::vector<RegimeTiming> rows;
    std::optional<bool> ordering_holds; // set only when all three regimes ran
};

// Times `epochs` training epochs per requested regime on identical data and
// asserts nothing itself; ordering_holds compares NFT < LoRA < FFT.
BenchmarkReport benchmark_regimes(const ModelConfig& model_cfg, const LoRAConfig& lora_cfg,
                                  const std::vector<Regime>& regimes, const std::vector<Sample>& data,
                                  TrainConfig cfg, int64_t epochs);

} // namespace rili
