#include "revnmr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "revnmr/eval.hpp"

namespace revnmr {

std::pair<DatasetRows, DatasetRows> split_dataset(const DatasetRows& rows, double fraction, uint64_t seed) {
    if (rows.size() < 2)
        throw std::invalid_argument("split_dataset: need at least 2 rows, got " + std::to_string(rows.size()));
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split_dataset: fraction must be in (0,1)");

    std::vector<size_t> order(rows.size());
    std::iota(order.begin(), order.end(), size_t{0});
    RngStream rng(seed);
    for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<size_t>(rng.below(i + 1))]);

    const size_t n_train = static_cast<size_t>(
        std::ceil(fraction * static_cast<double>(rows.size())));
    DatasetRows train, val;
    train.reserve(n_train);
    val.reserve(rows.size() - n_train);
    for (size_t k = 0; k < order.size(); ++k)
        (k < n_train ? train : val).push_back(rows[order[k]]);
    return {std::move(train), std::move(val)};
}

namespace {

std::vector<Tensor<float>> snapshot_values(const std::vector<Parameter<float>*>& params) {
    std::vector<Tensor<float>> out;
    out.reserve(params.size());
    for (const Parameter<float>* p : params) out.push_back(p->value());
    return out;
}

void restore_values(std::vector<Parameter<float>*>& params, const std::vector<Tensor<float>>& snap) {
    for (size_t k = 0; k < params.size(); ++k) params[k]->value() = snap[k];
}

double validation_f1(const Net& net, const DatasetRows& val_rows) {
    std::vector<Tensor<float>> logits;
    std::vector<SpectrumCode> targets;
    logits.reserve(val_rows.size());
    targets.reserve(val_rows.size());
    for (const DatasetRow& row : val_rows) {
        const Tensor<float> x = bonds_to_channels<float>(code_to_bonds(row.bond_code));
        logits.push_back(split_latent(net.forward_value(x)).y_latent);
        targets.push_back(compress_code(row.bins));
    }
    return f1_bits(logits, targets);
}

}  // namespace

FitResult fit(const DatasetRows& rows, const TrainConfig& cfg, Net& net) {
    if (cfg.epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch size must be >= 1");

    auto [train_rows, val_rows] = split_dataset(rows, cfg.split_fraction, derive_seed(cfg.seed, kTagSplit));

    net.init_params(RngStream(derive_seed(cfg.seed, kTagInit)));
    std::vector<Parameter<float>*> params = net.parameters();
    zero_grads(params);

    AdamConfig adam;
    adam.lr = cfg.learning_rate;

    FitResult result;
    std::vector<Tensor<float>> last_good = snapshot_values(params);

    const RngStream shuffle_base(derive_seed(cfg.seed, kTagShuffle));
    const RngStream train_z_base(derive_seed(cfg.seed, kTagTrainZ));
    const RngStream val_z_base(derive_seed(cfg.seed, kTagValZ));

    std::vector<size_t> order(train_rows.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RngStream shuffle_rng = shuffle_base.substream(static_cast<uint64_t>(epoch));
        for (size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<size_t>(shuffle_rng.below(i + 1))]);

        const RngStream epoch_z = train_z_base.substream(static_cast<uint64_t>(epoch));
        double sum_bce = 0.0, sum_x = 0.0;
        size_t seen = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const float inv_batch = 1.0f / static_cast<float>(stop - start);
            const RngStream batch_z = epoch_z.substream(start);

            for (size_t k = start; k < stop; ++k) {
                SampleLoss<float> sl =
                    sample_loss(train_rows[order[k]], net, cfg.weights, batch_z.substream(k - start));
                if (!std::isfinite(sl.values.total)) {
                    restore_values(params, last_good);
                    zero_grads(params);
                    result.aborted = true;
                    result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                                          ", sample index " + std::to_string(order[k]);
                    return result;
                }
                backward(sl.total, Tensor<float>(Shape{1}, inv_batch));
                sum_bce += sl.values.bce;
                sum_x += sl.values.inverse_direction(cfg.weights);
                ++seen;
            }
            adam_step(params, adam);
        }

        const LossBreakdown val = total_loss(val_rows, net, cfg.weights,
                                             val_z_base.substream(static_cast<uint64_t>(epoch)));
        EpochLog log;
        log.epoch = epoch;
        log.f1_val = validation_f1(net, val_rows);
        log.loss_y_train = sum_bce / static_cast<double>(seen);
        log.loss_x_train = sum_x / static_cast<double>(seen);
        log.loss_y_val = val.bce;
        log.loss_x_val = val.inverse_direction(cfg.weights);
        result.logs.push_back(log);

        last_good = snapshot_values(params);
    }
    return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& logs) {
    std::string out = "epoch,f1,loss_y_train,loss_x_train,loss_y_val,loss_x_val\n";
    char buf[256];
    for (const EpochLog& l : logs) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", l.epoch, l.f1_val, l.loss_y_train,
                      l.loss_x_train, l.loss_y_val, l.loss_x_val);
        out += buf;
    }
    return out;
}

}  // namespace revnmr
