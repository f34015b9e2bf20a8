// Copyright 2026 The nucseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Times the serial reference path against the OpenMP path for the hot
// kernels: convolution forward/backward, the distance transform, and a full
// evaluation-style metrics sweep. Outputs one table row per kernel.

#include <chrono>
#include <cstdio>
#include <functional>

#include "nucseg/datagen.hpp"
#include "nucseg/geometry.hpp"
#include "nucseg/kernels.hpp"
#include "nucseg/metrics.hpp"
#include "nucseg/rng.hpp"

using namespace nucseg;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main() {
  Rng rng(7);
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  {
    Tensor3<float> x(32, 96, 96);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1, 1));
    std::vector<float> w(64 * 32 * 9), b(64, 0.f);
    for (auto& v : w) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    Tensor3<float> y;
    row("conv2d 3x3 32->64 96^2",
        time_ms([&] { kern::conv2d_forward(x, w.data(), b.data(), 64, 3, 1, y,
                                           kern::Exec::serial); }, 5),
        time_ms([&] { kern::conv2d_forward(x, w.data(), b.data(), 64, 3, 1, y,
                                           kern::Exec::parallel); }, 5));

    Tensor3<float> dy(64, 96, 96);
    for (auto& v : dy.v) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor3<float> dx;
    row("conv2d backward input",
        time_ms([&] { kern::conv2d_backward_input(dy, w.data(), 32, 3, 1, dx,
                                                  kern::Exec::serial); }, 3),
        time_ms([&] { kern::conv2d_backward_input(dy, w.data(), 32, 3, 1, dx,
                                                  kern::Exec::parallel); }, 3));

    std::vector<float> dw(w.size(), 0.f), db(64, 0.f);
    row("conv2d backward params",
        time_ms([&] { kern::conv2d_backward_params(x, dy, 3, 1, dw.data(), db.data(),
                                                   kern::Exec::serial); }, 3),
        time_ms([&] { kern::conv2d_backward_params(x, dy, 3, 1, dw.data(), db.data(),
                                                   kern::Exec::parallel); }, 3));
  }

  {
    const auto scene = generate_scene(3, 512, 512, 120, 0.02f);
    const auto fg = scene.labels.foreground();
    const auto contour = extract_contour(fg);
    row("distance transform 512^2",
        time_ms([&] { kern::set_default_exec(kern::Exec::serial);
                      distance_sq_to(fg, contour); }, 3),
        time_ms([&] { kern::set_default_exec(kern::Exec::parallel);
                      distance_sq_to(fg, contour); }, 3));
    kern::set_default_exec(kern::Exec::parallel);
  }

  {
    // Metrics sweep over a stack of patches (parallel across images upstream).
    const auto scene = generate_scene(5, 512, 512, 120, 0.02f);
    const auto patches = crop_patches(scene, 128, 0);
    auto run = [&](bool parallel) {
      std::vector<MetricsReport> reports(patches.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
      for (long i = 0; i < static_cast<long>(patches.size()); ++i)
        reports[i] = compute_metrics(patches[i].labels, patches[i].labels);
      return reports;
    };
    row("metrics 16x 128^2 patches",
        time_ms([&] { run(false); }, 3), time_ms([&] { run(true); }, 3));
  }

  return 0;
}
