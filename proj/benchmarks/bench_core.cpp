#include <benchmark/benchmark.h>

#include "revnmr/dataset.hpp"
#include "revnmr/loss.hpp"
#include "revnmr/net.hpp"
#include "revnmr/optim.hpp"
#include "revnmr/train.hpp"

using namespace revnmr;

namespace {

Tensor<float> sample_input() {
    return bonds_to_channels<float>(code_to_bonds(synth_dataset(1, 7)[0].bond_code));
}

void BM_Conv2dForward(benchmark::State& state) {
    const int channels = static_cast<int>(state.range(0));
    const int spatial = static_cast<int>(state.range(1));
    RngStream rng(1);
    Tensor<float> in(Shape{channels, spatial, spatial});
    Tensor<float> w(Shape{channels, channels, 3, 3});
    Tensor<float> b(Shape{channels});
    rng.fill_normal(in);
    rng.fill_normal(w, 0.05);
    for (auto _ : state) {
        Tensor<float> out = conv2d_value(in, w, b);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_Conv2dForward)->Args({8, 8})->Args({32, 4})->Args({128, 2})->Args({512, 1});

void BM_NetForward(benchmark::State& state) {
    Net net;
    net.randomize_params(RngStream(2));
    const Tensor<float> x = sample_input();
    for (auto _ : state) {
        Tensor<float> latent = net.forward_value(x);
        benchmark::DoNotOptimize(latent.data());
    }
}
BENCHMARK(BM_NetForward);

void BM_NetInverse(benchmark::State& state) {
    Net net;
    net.randomize_params(RngStream(3));
    const Tensor<float> latent = net.forward_value(sample_input());
    for (auto _ : state) {
        Tensor<float> x = net.inverse_value(latent);
        benchmark::DoNotOptimize(x.data());
    }
}
BENCHMARK(BM_NetInverse);

void BM_NetRoundTrip(benchmark::State& state) {
    Net net;
    net.randomize_params(RngStream(4));
    const Tensor<float> x = sample_input();
    for (auto _ : state) {
        Tensor<float> back = net.inverse_value(net.forward_value(x));
        benchmark::DoNotOptimize(back.data());
    }
}
BENCHMARK(BM_NetRoundTrip);

void BM_TrainStep(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    const DatasetRows rows = synth_dataset(batch, 5);
    Net net;
    net.init_params(RngStream(6));
    std::vector<Parameter<float>*> params = net.parameters();
    const LossWeights weights;
    AdamConfig adam;
    const RngStream z(11);
    for (auto _ : state) {
        for (int k = 0; k < batch; ++k) {
            SampleLoss<float> sl = sample_loss(rows[static_cast<size_t>(k)], net, weights,
                                               z.substream(static_cast<uint64_t>(k)));
            backward(sl.total, Tensor<float>(Shape{1}, 1.0f / static_cast<float>(batch)));
        }
        adam_step(params, adam);
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_BinPeaks(benchmark::State& state) {
    RngStream rng(8);
    PeakList peaks;
    for (int k = 0; k < 12; ++k) peaks.push_back(rng.uniform() * 210.0 - 3.0);
    for (auto _ : state) {
        SpectrumBins bins = bin_peaks(peaks);
        benchmark::DoNotOptimize(&bins);
    }
}
BENCHMARK(BM_BinPeaks);

void BM_ParseRow(benchmark::State& state) {
    const std::string line = serialize_row(synth_dataset(1, 9)[0]);
    for (auto _ : state) {
        DatasetRow row = parse_row(line);
        benchmark::DoNotOptimize(&row);
    }
}
BENCHMARK(BM_ParseRow);

}  // namespace

BENCHMARK_MAIN();
