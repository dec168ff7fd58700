#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "revnmr/dataset.hpp"
#include "revnmr/net.hpp"
#include "revnmr/train.hpp"

namespace revnmr {

/// Monte-Carlo setup for the conditional-deviation metrics: noise scale,
/// draws per sample and the stream seed. The perturbation lives on the
/// 896-dimensional Z_free part only.
struct PerturbationConfig {
    double epsilon = 0.1;
    int n_noise = 8;
    int n_prior = 8;
    uint64_t seed = 0;
};

struct MetricReport {
    double f1 = 0;
    double recon_mean = 0;
    double recon_max = 0;
    double zfree_mean_of_means = 0;
    double zfree_std_of_means = 0;
    double zfree_mean_of_stds = 0;
    double zfree_std_of_stds = 0;
    double cd_local = 0;
    double cd_prior = 0;
    double rcd_local = 0;
    double rcd_prior = 0;
    double corr_total = 0;
    double corr_aromatic = 0;
};

/// Micro-averaged F1 over all bits of all samples; logits are binarized at
/// sigmoid(logit) > threshold (strict). Returns 0 when no positives exist on
/// either side.
double f1_bits(const std::vector<Tensor<float>>& pred_logits, const std::vector<SpectrumCode>& targets,
               double threshold = 0.5);

/// (mean, max) absolute round-trip error of inverse(forward(x)) over rows.
std::pair<double, double> reconstruction_error(const Net& net, const DatasetRows& rows);

/// Per-sample mean and std of Z_free from the forward pass, summarized as
/// {mean of means, std of means, mean of stds, std of stds}.
std::array<double, 4> zfree_stats(const Net& net, const DatasetRows& rows);

/// E over rows and noise draws of the l1 change of the reconstruction when
/// the sample's own Z_free is perturbed by epsilon * xi.
double cd_local(const Net& net, const DatasetRows& rows, const PerturbationConfig& cfg);

/// Same, but around fresh prior draws of Z_free instead of the sample's own.
double cd_prior(const Net& net, const DatasetRows& rows, const PerturbationConfig& cfg);

/// Normalizes a CD value by the mean l1 magnitude of the unperturbed
/// reconstructions.
double rcd(double cd_value, const Net& net, const DatasetRows& rows);

/// Pearson correlation between 1-counts of real inputs and of reconstructions
/// from (target code, prior Z_free); `channel` restricts the count to one
/// channel (3 = aromatic), empty counts all four.
double count_correlation(const DatasetRows& rows, const Net& net, RngStream rng,
                         std::optional<int> channel = std::nullopt);

/// Aligned text table of 1-positions in real vs predicted codes for the
/// first k rows.
std::string code_report(const Net& net, const DatasetRows& rows, int k);

MetricReport compute_metrics(const Net& net, const DatasetRows& rows, const PerturbationConfig& cfg);

std::string metric_report_text(const MetricReport& r);
std::string metric_report_csv(const MetricReport& r);

}  // namespace revnmr
