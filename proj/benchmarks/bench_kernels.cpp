#include <benchmark/benchmark.h>

#include "pulaski/datagen.hpp"
#include "pulaski/model.hpp"
#include "pulaski/ot.hpp"
#include "pulaski/train.hpp"

using namespace pulaski;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform() - 0.5;
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(1);
  Tensor x = random_tensor({1, 8, 32, 32}, rng);
  Tensor k = random_tensor({8, 8, 3, 3}, rng);
  Tensor b = random_tensor({8}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv(nullptr, x, k, b));
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(2);
  Tensor x = random_tensor({1, 8, 32, 32}, rng);
  Tensor k = random_tensor({8, 8, 3, 3}, rng);
  k.set_requires_grad(true);
  Tensor b = random_tensor({8}, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor y = ops::conv(&tape, x, k, b);
    Tensor loss = ops::sum(&tape, y);
    tape.backward(loss);
    k.zero_grad();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_UnetForward32(benchmark::State& state) {
  ModelConfig cfg;
  cfg.kind = ModelKind::kProbUnetCe;
  Rng rng(3);
  ModelParams params = init_params(cfg, rng);
  Tensor x = random_tensor({1, 1, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(unet_forward(nullptr, x, params, cfg));
}
BENCHMARK(BM_UnetForward32);

void BM_SinkhornDivergence(benchmark::State& state) {
  int64_t atoms = state.range(0);
  Rng rng(4);
  Matrix pa(atoms, 256), pb(atoms, 256);
  for (auto& v : pa.a) v = rng.uniform();
  for (auto& v : pb.a) v = rng.uniform();
  DiscreteMeasure a = DiscreteMeasure::uniform(pa);
  DiscreteMeasure b = DiscreteMeasure::uniform(pb);
  SinkhornConfig cfg = SinkhornConfig::for_diameter2(squared_diameter(a, b));
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_divergence(a, b, cfg));
}
BENCHMARK(BM_SinkhornDivergence)->Arg(4)->Arg(10);

void BM_HausdorffDivergence(benchmark::State& state) {
  int64_t atoms = state.range(0);
  Rng rng(5);
  Matrix pa(atoms, 256), pb(atoms, 256);
  for (auto& v : pa.a) v = rng.uniform();
  for (auto& v : pb.a) v = rng.uniform();
  DiscreteMeasure a = DiscreteMeasure::uniform(pa);
  DiscreteMeasure b = DiscreteMeasure::uniform(pb);
  SinkhornConfig cfg = SinkhornConfig::for_diameter2(squared_diameter(a, b));
  for (auto _ : state) benchmark::DoNotOptimize(hausdorff_divergence(a, b, cfg));
}
BENCHMARK(BM_HausdorffDivergence)->Arg(4)->Arg(10);

void BM_PulaskiHausdorffStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.kind = ModelKind::kPulaskiHausdorff;
  cfg.loss.kind = LossKind::kHausdorff;
  Rng rng(6);
  ModelParams params = init_params(cfg, rng);
  SyntheticSpec spec;
  spec.extents = {32, 32};
  spec.n_images = 1;
  Dataset ds = generate_dataset(spec);
  Tensor x = image_to_tensor(ds.volumes[0].image, ds.volumes[0].extents);
  std::vector<Tensor> ys;
  for (const BinaryMask& m : ds.volumes[0].annotations) ys.push_back(mask_to_tensor(m));
  Rng lrng(7);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = pulaski_loss(&tape, x, ys, params, cfg, lrng);
    tape.backward(loss);
    params.zero_grads();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_PulaskiHausdorffStep);

void BM_EdtVolume(benchmark::State& state) {
  Rng rng(8);
  Shape ext{32, 32, 32};
  std::vector<uint8_t> seeds(numel(ext), 0);
  for (int i = 0; i < 50; ++i) seeds[rng.uniform_index(seeds.size())] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(edt_squared(seeds, ext));
}
BENCHMARK(BM_EdtVolume);

}  // namespace

BENCHMARK_MAIN();
