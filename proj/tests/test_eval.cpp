#include <ostream>

#include "doctest.h"

#include <cmath>

#include "revnmr/eval.hpp"

using namespace revnmr;
using FTensor = Tensor<float>;

namespace {

FTensor logits_for(const SpectrumCode& code, bool complement = false) {
    FTensor t(Shape{128});
    for (int i = 0; i < 128; ++i) {
        const bool on = code[static_cast<size_t>(i)] != complement;
        t[i] = on ? 10.0f : -10.0f;
    }
    return t;
}

Net random_net(uint64_t seed) {
    Net net;
    net.randomize_params(RngStream(seed));
    return net;
}

}  // namespace

TEST_CASE("f1_bits: exact and complemented predictions") {
    const DatasetRows rows = synth_dataset(20, 11);
    std::vector<FTensor> exact, flipped;
    std::vector<SpectrumCode> targets;
    for (const DatasetRow& r : rows) {
        targets.push_back(compress_code(r.bins));
        exact.push_back(logits_for(targets.back()));
        flipped.push_back(logits_for(targets.back(), true));
    }
    CHECK(f1_bits(exact, targets) == 1.0);
    CHECK(f1_bits(flipped, targets) == 0.0);
    CHECK(f1_bits(std::vector<FTensor>{}, std::vector<SpectrumCode>{}) == 0.0);
    CHECK_THROWS(f1_bits(exact, std::vector<SpectrumCode>(3)));
}

TEST_CASE("f1_bits is invariant to sample order and joint bit permutation") {
    const Net net = random_net(807);
    const DatasetRows rows = synth_dataset(15, 10);
    std::vector<FTensor> preds;
    std::vector<SpectrumCode> targets;
    for (const DatasetRow& r : rows) {
        preds.push_back(split_latent(net.forward_value(bonds_to_channels<float>(code_to_bonds(r.bond_code)))).y_latent);
        targets.push_back(compress_code(r.bins));
    }
    const double base = f1_bits(preds, targets);

    std::vector<FTensor> rp(preds.rbegin(), preds.rend());
    std::vector<SpectrumCode> rt(targets.rbegin(), targets.rend());
    CHECK(f1_bits(rp, rt) == base);

    // rotate bit positions in both predictions and targets
    std::vector<FTensor> pp;
    std::vector<SpectrumCode> pt;
    for (size_t s = 0; s < preds.size(); ++s) {
        FTensor p(Shape{128});
        SpectrumCode t;
        for (int i = 0; i < 128; ++i) {
            const int j = (i + 37) % 128;
            p[j] = preds[s][i];
            if (targets[s][static_cast<size_t>(i)]) t.set(static_cast<size_t>(j));
        }
        pp.push_back(std::move(p));
        pt.push_back(t);
    }
    CHECK(f1_bits(pp, pt) == base);
}

TEST_CASE("f1_bits: density-matched random predictor lands near the density") {
    RngStream rng(1234);
    const double density = 0.0643;
    std::vector<FTensor> preds;
    std::vector<SpectrumCode> targets;
    for (int s = 0; s < 2000; ++s) {
        SpectrumCode t;
        FTensor p(Shape{128});
        for (int i = 0; i < 128; ++i) {
            if (rng.uniform() < density) t.set(static_cast<size_t>(i));
            p[i] = rng.uniform() < density ? 10.0f : -10.0f;
        }
        targets.push_back(t);
        preds.push_back(p);
    }
    CHECK(f1_bits(preds, targets) == doctest::Approx(density).epsilon(0.08));
}

TEST_CASE("reconstruction error: float rounding bound on random parameters") {
    const Net net = random_net(808);
    const DatasetRows rows = synth_dataset(30, 12);
    const auto [mean_err, max_err] = reconstruction_error(net, rows);
    CHECK(mean_err >= 0.0);
    CHECK(mean_err <= max_err);
    CHECK(max_err <= 1e-3);
}

TEST_CASE("zfree stats match a direct re-computation") {
    const Net net = random_net(809);
    const DatasetRows rows = synth_dataset(12, 13);
    const std::array<double, 4> got = zfree_stats(net, rows);

    std::vector<double> means, stds;
    for (const DatasetRow& r : rows) {
        const FTensor z = split_latent(net.forward_value(bonds_to_channels<float>(code_to_bonds(r.bond_code)))).z_free;
        double m = 0;
        for (int64_t i = 0; i < z.size(); ++i) m += z[i];
        m /= static_cast<double>(z.size());
        double var = 0;
        for (int64_t i = 0; i < z.size(); ++i) var += (z[i] - m) * (z[i] - m);
        means.push_back(m);
        stds.push_back(std::sqrt(var / static_cast<double>(z.size())));
    }
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto std_of = [&](const std::vector<double>& v) {
        const double m = mean_of(v);
        double var = 0;
        for (double x : v) var += (x - m) * (x - m);
        return std::sqrt(var / static_cast<double>(v.size()));
    };
    CHECK(got[0] == doctest::Approx(mean_of(means)).epsilon(1e-9));
    CHECK(got[1] == doctest::Approx(std_of(means)).epsilon(1e-9));
    CHECK(got[2] == doctest::Approx(mean_of(stds)).epsilon(1e-9));
    CHECK(got[3] == doctest::Approx(std_of(stds)).epsilon(1e-9));
    CHECK_THROWS(zfree_stats(net, DatasetRows{}));
}

TEST_CASE("cd metrics: zero epsilon is exactly zero; seeded runs repeat") {
    const Net net = random_net(810);
    const DatasetRows rows = synth_dataset(6, 14);
    PerturbationConfig cfg;
    cfg.epsilon = 0.0;
    cfg.n_noise = 4;
    cfg.n_prior = 3;
    cfg.seed = 42;
    CHECK(cd_local(net, rows, cfg) == 0.0);
    CHECK(cd_prior(net, rows, cfg) == 0.0);

    cfg.epsilon = 0.1;
    const double a = cd_local(net, rows, cfg);
    CHECK(a == cd_local(net, rows, cfg));
    CHECK(a > 0.0);
    const double p = cd_prior(net, rows, cfg);
    CHECK(p == cd_prior(net, rows, cfg));
    CHECK(p > 0.0);

    PerturbationConfig doubled = cfg;
    doubled.epsilon = 0.2;
    CHECK(cd_local(net, rows, doubled) >= a);
}

TEST_CASE("cd_prior tracks cd_local on a near-identity net") {
    // with zero second convs the net is an exact permutation, so local and
    // prior perturbations displace reconstructions identically in law
    Net net;
    net.init_params(RngStream(4242));
    const DatasetRows rows = synth_dataset(20, 17);
    PerturbationConfig cfg;
    cfg.epsilon = 0.1;
    cfg.n_noise = 4;
    cfg.n_prior = 2;
    cfg.seed = 3;
    const double local = cd_local(net, rows, cfg);
    const double prior = cd_prior(net, rows, cfg);
    CHECK(local > 0.0);
    CHECK(prior / local == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("round-trip error grows no faster than the block count") {
    RngStream rng(5151);
    auto chain_error = [&](int blocks, uint64_t seed) {
        std::vector<CouplingBlock<float>> chain;
        for (int k = 0; k < blocks; ++k) {
            chain.emplace_back("c" + std::to_string(k), 16);
            chain.back().randomize(RngStream(seed + static_cast<uint64_t>(k)), 0.5);
        }
        double worst = 0;
        for (int t = 0; t < 20; ++t) {
            Tensor<float> x(Shape{16, 4, 4});
            rng.fill_normal(x);
            NodePtr<float> h = constant(x);
            for (int k = 0; k < blocks; ++k) h = chain[static_cast<size_t>(k)].forward(h);
            for (int k = blocks - 1; k >= 0; --k) h = chain[static_cast<size_t>(k)].inverse(h);
            worst = std::max(worst, max_abs_diff(h->value, x));
        }
        return worst;
    };
    const double err4 = chain_error(4, 60);
    const double err8 = chain_error(8, 60);
    CHECK(err8 <= 10.0 * err4 + 1e-7);  // doubling depth stays within the error order
}

TEST_CASE("rcd: ratio against an independent summation oracle") {
    const Net net = random_net(811);
    const DatasetRows rows = synth_dataset(5, 15);

    double denom = 0;
    for (const DatasetRow& r : rows) {
        const auto split = split_latent(net.forward_value(bonds_to_channels<float>(code_to_bonds(r.bond_code))));
        const FTensor recon = net.inverse_value(merge_latent(split.y_latent, split.z_free));
        double l1 = 0;
        for (int64_t i = 0; i < recon.size(); ++i) l1 += std::abs(static_cast<double>(recon[i]));
        denom += l1;
    }
    denom /= static_cast<double>(rows.size());

    CHECK(rcd(0.0, net, rows) == 0.0);
    CHECK(rcd(2.5, net, rows) == doctest::Approx(2.5 / denom).epsilon(1e-9));
}

TEST_CASE("count correlation: determinism, row-order invariance, degenerate rejection") {
    const Net net = random_net(812);
    const DatasetRows rows = synth_dataset(12, 16);
    const double r1 = count_correlation(rows, net, RngStream(5));
    const double r2 = count_correlation(rows, net, RngStream(5));
    CHECK(r1 == r2);

    DatasetRows shuffled = rows;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[2], shuffled[7]);
    CHECK(count_correlation(shuffled, net, RngStream(5)) == doctest::Approx(r1).epsilon(1e-12));
    CHECK(r1 >= -1.0);
    CHECK(r1 <= 1.0);
    const double ar = count_correlation(rows, net, RngStream(5), 3);
    CHECK(ar >= -1.0);
    CHECK(ar <= 1.0);

    CHECK_THROWS(count_correlation(DatasetRows{rows[0], rows[1]}, net, RngStream(5)));
    // identical molecules leave the real counts without variance
    DatasetRows same = {rows[0], rows[0], rows[0]};
    CHECK_THROWS_WITH_AS(count_correlation(same, net, RngStream(5)), doctest::Contains("variance"),
                         std::invalid_argument);
}

TEST_CASE("code report: real positions column and tie rule on the zero net") {
    DatasetRows rows(1);
    rows[0].molecule_id = 10016372;
    SpectrumBins bins;
    bins.set(3 * 8);   // code bit 3
    bins.set(12 * 8);  // code bit 12
    rows[0].bins = bins;

    Net zero_net;  // all parameters zero; empty molecule gives all-zero logits
    const std::string report = code_report(zero_net, rows, 1);
    CHECK(report.find("10016372") != std::string::npos);
    CHECK(report.find("3, 12") != std::string::npos);

    // sigmoid(0) = 0.5 is not strictly above the threshold: predicted is empty
    const size_t line_start = report.find("10016372");
    const std::string line = report.substr(line_start, report.find('\n', line_start) - line_start);
    CHECK(line == "10016372  3, 12  ");
    CHECK_THROWS(code_report(zero_net, rows, 5));
}

TEST_CASE("metric report text and csv formats") {
    MetricReport r;
    r.f1 = 0.1695;
    r.cd_local = 1.25;
    const std::string text = metric_report_text(r);
    CHECK(text.find("f1=0.1695\n") != std::string::npos);
    CHECK(text.find("cd_local=1.25\n") != std::string::npos);
    const std::string csv = metric_report_csv(r);
    CHECK(csv.substr(0, 3) == "f1,");
    CHECK(csv.find("corr_aromatic\n") != std::string::npos);
}
