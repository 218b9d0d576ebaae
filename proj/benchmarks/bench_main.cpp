#include <benchmark/benchmark.h>

#include <array>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/control.hpp"
#include "qbsde/fenchel.hpp"
#include "qbsde/pde.hpp"
#include "qbsde/regression.hpp"
#include "qbsde/rng.hpp"

using namespace qbsde;

namespace {

const TerminalFn kIdentity = [](std::span<const double> x) { return x[0]; };

void BM_SimulateForward(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const TimeGrid grid{1.0, 50};
  for (auto _ : state) {
    auto b = simulate_forward(SdeSpec::brownian(1), grid, paths, 1);
    benchmark::DoNotOptimize(b.x.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * paths * 50);
}
BENCHMARK(BM_SimulateForward)->Arg(1 << 12)->Arg(1 << 14)->Unit(benchmark::kMillisecond);

void BM_FitPolynomial(benchmark::State& state) {
  const std::size_t n = 1 << 14;
  const int degree = static_cast<int>(state.range(0));
  std::vector<double> xs(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rng::normal(3, rng::kSampling, i, 0, 0);
    t[i] = xs[i] * xs[i] - xs[i];
  }
  const std::array<const double*, 1> tgt{t.data()};
  BasisPlan plan;
  plan.degree = degree;
  for (auto _ : state) {
    auto fit = fit_polynomial(n, StateView{xs.data(), 1, 1}, tgt, nullptr, plan);
    benchmark::DoNotOptimize(fit.coef.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_FitPolynomial)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SolveBackward(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const auto b = simulate_forward(SdeSpec::brownian(1), TimeGrid{1.0, 50}, paths, 7);
  const auto gen = GeneratorSpec::pure_quadratic(1.0);
  for (auto _ : state) {
    auto sol = solve_bsde_lsmc(gen, kIdentity, b);
    benchmark::DoNotOptimize(sol.y0);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * paths * 50);
}
BENCHMARK(BM_SolveBackward)->Arg(1 << 12)->Arg(1 << 14)->Unit(benchmark::kMillisecond);

void BM_EvaluateControl(benchmark::State& state) {
  const auto b = simulate_forward(SdeSpec::brownian(1), TimeGrid{1.0, 50}, 1 << 13, 9);
  DualGeneratorView view;
  view.gen = GeneratorSpec::pure_quadratic(1.0);
  const auto q = ControlProcess::constant_control({-1.0});
  for (auto _ : state) {
    auto cost = evaluate_control(view, q, b, kIdentity);
    benchmark::DoNotOptimize(cost.v0);
  }
}
BENCHMARK(BM_EvaluateControl)->Unit(benchmark::kMillisecond);

void BM_InfConvolution(benchmark::State& state) {
  // generic search path, not the closed form
  auto g = GeneratorSpec::custom(
      [](double, std::span<const double>, double, std::span<const double> z) {
        return 0.5 * z[0] * z[0];
      },
      1);
  g.gamma_bar = 1.0;
  const std::array<double, 1> x{0.0};
  double zv = -2.0;
  for (auto _ : state) {
    const std::array<double, 1> z{zv};
    benchmark::DoNotOptimize(inf_convolution(g, 4.0, 0.0, x, 0.0, z));
    zv = (zv > 2.0) ? -2.0 : zv + 0.1;
  }
}
BENCHMARK(BM_InfConvolution);

void BM_FenchelTransform(benchmark::State& state) {
  DualGeneratorView v;
  v.gen = GeneratorSpec::pure_quadratic(2.0);
  v.closed_form = false;  // time the numeric search
  const std::array<double, 1> x{0.0};
  double qv = -3.0;
  for (auto _ : state) {
    const std::array<double, 1> q{qv};
    benchmark::DoNotOptimize(fenchel_transform(v, 0.0, x, 0.0, q));
    qv = (qv > 3.0) ? -3.0 : qv + 0.17;
  }
}
BENCHMARK(BM_FenchelTransform);

void BM_SolvePde(benchmark::State& state) {
  PdeSpec spec;
  spec.sde = SdeSpec::brownian(1);
  spec.gen = GeneratorSpec::pure_quadratic(1.0);
  spec.terminal = [](double xv) { return xv * xv; };
  spec.horizon = 1.0;
  const auto nodes = static_cast<std::size_t>(state.range(0));
  const PdeGrid grid{nodes, 4 * nodes + 1, 6.0, 1.0};
  for (auto _ : state) {
    auto sol = solve_pde_fd(spec, grid);
    benchmark::DoNotOptimize(sol.u.data());
  }
}
BENCHMARK(BM_SolvePde)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
