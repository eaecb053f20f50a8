#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "manifest.hpp"

namespace rili {

struct FoldSplit {
    std::vector<std::string> train; // scan ids
    std::vector<std::string> val;
};

struct SplitSpec {
    uint64_t seed = 0;
    std::vector<std::string> holdout; // scan ids, never used for training
    std::array<FoldSplit, 5> folds;
};

// Patient-level split: all scans of a patient land on the same side of every
// boundary. Patients are shuffled by seed and assigned greedily to the holdout
// until its sample share first reaches the target (~37.6%); the rest are dealt
// round-robin into 5 folds. Each fold's val is its own scans, train the other
// four folds'. Reshuffles (up to 100) until the holdout and every fold's train
// and val contain both classes; throws if that never happens.
SplitSpec make_splits(const Manifest& m, uint64_t seed);

// Enforces: ids resolve and appear exactly once per region, holdout is
// patient-disjoint from the pool, fold vals partition the pool, train = pool
// minus val, per-fold patient disjointness, class presence everywhere.
void validate_splits(const SplitSpec& s, const Manifest& m);

void save_splits(const SplitSpec& s, const std::string& path);
SplitSpec load_splits(const std::string& path);

} // namespace rili
