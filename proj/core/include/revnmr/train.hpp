#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "revnmr/dataset.hpp"
#include "revnmr/loss.hpp"
#include "revnmr/net.hpp"

namespace revnmr {

/// The single-precision engine used for training and evaluation; gradient
/// checks run the same code instantiated in double precision.
using Net = InvertibleNet<float>;

struct TrainConfig {
    int epochs = 5;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double split_fraction = 0.8;
    uint64_t seed = 0;
    LossWeights weights;
};

struct EpochLog {
    int epoch = 0;
    double f1_val = 0;
    double loss_y_train = 0;
    double loss_x_train = 0;
    double loss_y_val = 0;
    double loss_x_val = 0;
};

struct FitResult {
    std::vector<EpochLog> logs;
    bool aborted = false;
    std::string abort_reason;
};

// Substream tags deriving every random decision from the one run seed.
constexpr uint64_t kTagSplit = 0x51;
constexpr uint64_t kTagInit = 0x52;
constexpr uint64_t kTagShuffle = 0x53;
constexpr uint64_t kTagTrainZ = 0x54;
constexpr uint64_t kTagValZ = 0x55;

inline uint64_t derive_seed(uint64_t base, uint64_t tag) { return RngStream::mix(base, tag); }

/// Seeded uniform shuffle; the first ceil(fraction * n) rows become the
/// training set, the rest validation. Disjoint covering partition.
std::pair<DatasetRows, DatasetRows> split_dataset(const DatasetRows& rows, double fraction, uint64_t seed);

/// Mini-batch training on the given net: shuffled batches, Adam updates, one
/// EpochLog per epoch. Deterministic for a fixed (rows, config). A non-finite
/// loss aborts the run and restores the last completed epoch's parameters.
FitResult fit(const DatasetRows& rows, const TrainConfig& cfg, Net& net);

/// Epoch logs as CSV with header epoch,f1,loss_y_train,loss_x_train,loss_y_val,loss_x_val.
std::string epoch_log_csv(const std::vector<EpochLog>& logs);

}  // namespace revnmr
