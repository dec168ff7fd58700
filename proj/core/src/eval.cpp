#include "revnmr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace revnmr {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

Tensor<float> row_input(const DatasetRow& row) { return bonds_to_channels<float>(code_to_bonds(row.bond_code)); }

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double m = 0;
    for (double x : xs) m += x;
    m /= n;
    double var = 0;
    for (double x : xs) var += (x - m) * (x - m);
    return {m, std::sqrt(var / n)};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto [ma, sa] = mean_std(a);
    const auto [mb, sb] = mean_std(b);
    if (sa == 0.0 || sb == 0.0)
        throw std::invalid_argument("count_correlation: zero variance on one side (all counts equal)");
    double cov = 0;
    for (size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma) * (b[i] - mb);
    cov /= static_cast<double>(a.size());
    return cov / (sa * sb);
}

double count_ones(const Tensor<float>& x, std::optional<int> channel, double threshold) {
    int64_t lo = 0, hi = x.size();
    if (channel) {
        const int64_t plane = static_cast<int64_t>(kGrid) * kGrid;
        lo = *channel * plane;
        hi = lo + plane;
    }
    int64_t n = 0;
    for (int64_t i = lo; i < hi; ++i)
        if (static_cast<double>(x[i]) > threshold) ++n;
    return static_cast<double>(n);
}

std::string positions_of(const SpectrumCode& code) {
    std::string out;
    for (int i = 0; i < kCodeBits; ++i) {
        if (!code[static_cast<size_t>(i)]) continue;
        if (!out.empty()) out += ", ";
        out += std::to_string(i);
    }
    return out;
}

}  // namespace

double f1_bits(const std::vector<Tensor<float>>& pred_logits, const std::vector<SpectrumCode>& targets,
               double threshold) {
    if (pred_logits.size() != targets.size())
        throw std::invalid_argument("f1_bits: " + std::to_string(pred_logits.size()) + " predictions vs " +
                                    std::to_string(targets.size()) + " targets");
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t s = 0; s < pred_logits.size(); ++s) {
        const Tensor<float>& p = pred_logits[s];
        if (p.shape() != Shape{kCodeBits})
            throw std::invalid_argument("f1_bits: prediction " + std::to_string(s) + " has shape " +
                                        p.shape().str() + ", expected [128]");
        for (int i = 0; i < kCodeBits; ++i) {
            const bool pred = sigmoid(static_cast<double>(p[i])) > threshold;
            const bool real = targets[s][static_cast<size_t>(i)];
            if (pred && real) ++tp;
            else if (pred) ++fp;
            else if (real) ++fn;
        }
    }
    if (2 * tp + fp + fn == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::pair<double, double> reconstruction_error(const Net& net, const DatasetRows& rows) {
    double mean_acc = 0, max_err = 0;
    for (const DatasetRow& row : rows) {
        const Tensor<float> x = row_input(row);
        const Tensor<float> back = net.inverse_value(net.forward_value(x));
        mean_acc += mean_abs_diff(back, x);
        max_err = std::max(max_err, max_abs_diff(back, x));
    }
    return {rows.empty() ? 0.0 : mean_acc / static_cast<double>(rows.size()), max_err};
}

std::array<double, 4> zfree_stats(const Net& net, const DatasetRows& rows) {
    if (rows.size() < 2) throw std::invalid_argument("zfree_stats: need at least 2 rows");
    std::vector<double> means, stds;
    for (const DatasetRow& row : rows) {
        const Tensor<float> z = split_latent(net.forward_value(row_input(row))).z_free;
        std::vector<double> zv(static_cast<size_t>(z.size()));
        for (int64_t i = 0; i < z.size(); ++i) zv[static_cast<size_t>(i)] = static_cast<double>(z[i]);
        const auto [m, s] = mean_std(zv);
        means.push_back(m);
        stds.push_back(s);
    }
    const auto [mm, sm] = mean_std(means);
    const auto [ms, ss] = mean_std(stds);
    return {mm, sm, ms, ss};
}

double cd_local(const Net& net, const DatasetRows& rows, const PerturbationConfig& cfg) {
    if (rows.empty()) throw std::invalid_argument("cd_local: empty row set");
    if (cfg.n_noise < 1) throw std::invalid_argument("cd_local: n_noise must be >= 1");
    const RngStream base(cfg.seed);
    double acc = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
        const LatentSplit<float> split = split_latent(net.forward_value(row_input(rows[i])));
        const Tensor<float> baseline = net.inverse_value(merge_latent(split.y_latent, split.z_free));
        const RngStream row_stream = base.substream(i);
        for (int k = 0; k < cfg.n_noise; ++k) {
            RngStream draw = row_stream.substream(static_cast<uint64_t>(k));
            Tensor<float> z = split.z_free;
            for (int64_t d = 0; d < z.size(); ++d)
                z[d] += static_cast<float>(cfg.epsilon * draw.normal());
            const Tensor<float> pert = net.inverse_value(merge_latent(split.y_latent, z));
            double l1 = 0;
            for (int64_t d = 0; d < pert.size(); ++d)
                l1 += std::abs(static_cast<double>(pert[d]) - static_cast<double>(baseline[d]));
            acc += l1;
        }
    }
    return acc / (static_cast<double>(rows.size()) * cfg.n_noise);
}

double cd_prior(const Net& net, const DatasetRows& rows, const PerturbationConfig& cfg) {
    if (rows.empty()) throw std::invalid_argument("cd_prior: empty row set");
    if (cfg.n_noise < 1 || cfg.n_prior < 1)
        throw std::invalid_argument("cd_prior: draw counts must be >= 1");
    const RngStream base(cfg.seed);
    double acc = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
        const Tensor<float> y = split_latent(net.forward_value(row_input(rows[i]))).y_latent;
        const RngStream row_stream = base.substream(i);
        for (int p = 0; p < cfg.n_prior; ++p) {
            const RngStream prior_stream = row_stream.substream(static_cast<uint64_t>(p));
            RngStream zdraw = prior_stream.substream(0);
            Tensor<float> z(Shape{kZFreeDim});
            zdraw.fill_normal(z);
            const Tensor<float> baseline = net.inverse_value(merge_latent(y, z));
            for (int k = 0; k < cfg.n_noise; ++k) {
                RngStream draw = prior_stream.substream(static_cast<uint64_t>(k) + 1);
                Tensor<float> zp = z;
                for (int64_t d = 0; d < zp.size(); ++d)
                    zp[d] += static_cast<float>(cfg.epsilon * draw.normal());
                const Tensor<float> pert = net.inverse_value(merge_latent(y, zp));
                double l1 = 0;
                for (int64_t d = 0; d < pert.size(); ++d)
                    l1 += std::abs(static_cast<double>(pert[d]) - static_cast<double>(baseline[d]));
                acc += l1;
            }
        }
    }
    return acc / (static_cast<double>(rows.size()) * cfg.n_prior * cfg.n_noise);
}

double rcd(double cd_value, const Net& net, const DatasetRows& rows) {
    if (rows.empty()) throw std::invalid_argument("rcd: empty row set");
    double denom = 0;
    for (const DatasetRow& row : rows) {
        const LatentSplit<float> split = split_latent(net.forward_value(row_input(row)));
        denom += net.inverse_value(merge_latent(split.y_latent, split.z_free)).l1();
    }
    denom /= static_cast<double>(rows.size());
    if (denom <= 0.0) throw std::invalid_argument("rcd: zero reconstruction magnitude");
    return cd_value / denom;
}

double count_correlation(const DatasetRows& rows, const Net& net, RngStream rng, std::optional<int> channel) {
    if (rows.size() < 3) throw std::invalid_argument("count_correlation: need at least 3 rows");
    if (channel && (*channel < 0 || *channel >= kBondChannels))
        throw std::invalid_argument("count_correlation: channel out of range");
    std::vector<double> real_counts, recon_counts;
    for (const DatasetRow& row : rows) {
        real_counts.push_back(count_ones(row_input(row), channel, 0.5));
        // draws keyed by row identity, so the estimate does not depend on
        // the ordering of the validation rows
        RngStream draw = rng.substream(
            RngStream::mix(static_cast<uint64_t>(row.molecule_id), static_cast<uint64_t>(row.spectrum_id)));
        Tensor<float> z(Shape{kZFreeDim});
        draw.fill_normal(z);
        const Tensor<float> y = code_to_tensor<float>(compress_code(row.bins));
        recon_counts.push_back(count_ones(net.inverse_value(merge_latent(y, z)), channel, 0.5));
    }
    return pearson(real_counts, recon_counts);
}

std::string code_report(const Net& net, const DatasetRows& rows, int k) {
    if (k < 0 || static_cast<size_t>(k) > rows.size())
        throw std::invalid_argument("code_report: k must be between 0 and the row count");
    struct Line {
        std::string id, real, pred;
    };
    std::vector<Line> lines;
    for (int r = 0; r < k; ++r) {
        const Tensor<float> y = split_latent(net.forward_value(row_input(rows[static_cast<size_t>(r)]))).y_latent;
        SpectrumCode pred;
        for (int i = 0; i < kCodeBits; ++i)
            if (sigmoid(static_cast<double>(y[i])) > 0.5) pred.set(static_cast<size_t>(i));
        lines.push_back({std::to_string(rows[static_cast<size_t>(r)].molecule_id),
                         positions_of(compress_code(rows[static_cast<size_t>(r)].bins)), positions_of(pred)});
    }
    size_t wid = 8, wreal = 4;
    for (const Line& l : lines) {
        wid = std::max(wid, l.id.size());
        wreal = std::max(wreal, l.real.size());
    }
    auto pad = [](const std::string& s, size_t w) { return s + std::string(w - s.size() + 2, ' '); };
    std::string out = pad("molecule", wid) + pad("real", wreal) + "predicted\n";
    for (const Line& l : lines) out += pad(l.id, wid) + pad(l.real, wreal) + l.pred + "\n";
    return out;
}

MetricReport compute_metrics(const Net& net, const DatasetRows& rows, const PerturbationConfig& cfg) {
    MetricReport r;

    std::vector<Tensor<float>> logits;
    std::vector<SpectrumCode> targets;
    for (const DatasetRow& row : rows) {
        logits.push_back(split_latent(net.forward_value(row_input(row))).y_latent);
        targets.push_back(compress_code(row.bins));
    }
    r.f1 = f1_bits(logits, targets);

    std::tie(r.recon_mean, r.recon_max) = reconstruction_error(net, rows);

    const std::array<double, 4> zs = zfree_stats(net, rows);
    r.zfree_mean_of_means = zs[0];
    r.zfree_std_of_means = zs[1];
    r.zfree_mean_of_stds = zs[2];
    r.zfree_std_of_stds = zs[3];

    PerturbationConfig local_cfg = cfg;
    local_cfg.seed = RngStream::mix(cfg.seed, 0xCD10);
    r.cd_local = cd_local(net, rows, local_cfg);
    PerturbationConfig prior_cfg = cfg;
    prior_cfg.seed = RngStream::mix(cfg.seed, 0xCD20);
    r.cd_prior = cd_prior(net, rows, prior_cfg);
    r.rcd_local = rcd(r.cd_local, net, rows);
    r.rcd_prior = rcd(r.cd_prior, net, rows);

    r.corr_total = count_correlation(rows, net, RngStream(RngStream::mix(cfg.seed, 0xC041)), std::nullopt);
    r.corr_aromatic = count_correlation(rows, net, RngStream(RngStream::mix(cfg.seed, 0xC042)), 3);
    return r;
}

namespace {
const char* kMetricKeys[] = {"f1",
                             "recon_mean",
                             "recon_max",
                             "zfree_mean_of_means",
                             "zfree_std_of_means",
                             "zfree_mean_of_stds",
                             "zfree_std_of_stds",
                             "cd_local",
                             "cd_prior",
                             "rcd_local",
                             "rcd_prior",
                             "corr_total",
                             "corr_aromatic"};

std::array<double, 13> metric_values(const MetricReport& r) {
    return {r.f1,       r.recon_mean,          r.recon_max,          r.zfree_mean_of_means,
            r.zfree_std_of_means, r.zfree_mean_of_stds, r.zfree_std_of_stds, r.cd_local,
            r.cd_prior, r.rcd_local,           r.rcd_prior,          r.corr_total,
            r.corr_aromatic};
}
}  // namespace

std::string metric_report_text(const MetricReport& r) {
    const std::array<double, 13> vals = metric_values(r);
    std::string out;
    for (size_t i = 0; i < vals.size(); ++i) out += std::string(kMetricKeys[i]) + "=" + fmt_g(vals[i]) + "\n";
    return out;
}

std::string metric_report_csv(const MetricReport& r) {
    const std::array<double, 13> vals = metric_values(r);
    std::string header, row;
    for (size_t i = 0; i < vals.size(); ++i) {
        if (i) {
            header += ",";
            row += ",";
        }
        header += kMetricKeys[i];
        row += fmt_g(vals[i]);
    }
    return header + "\n" + row + "\n";
}

}  // namespace revnmr
