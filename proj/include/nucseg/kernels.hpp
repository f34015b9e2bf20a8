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

#pragma once

#include <algorithm>
#include <stdexcept>

#include "nucseg/tensor.hpp"

// Data-parallel compute kernels. Every kernel is written gather-style: each
// output element is produced by exactly one iteration, with a fixed inner
// summation order. The serial and OpenMP paths therefore produce bit-identical
// results for any thread count; the serial path is the reference the tests
// compare against, and bench/ times the two against each other.

namespace nucseg::kern {

enum class Exec { serial, parallel };

/// Process-wide default execution policy (overridable per call).
Exec default_exec();
void set_default_exec(Exec e);

// Below this much total work (scalar ops, estimated) the OpenMP fork is not
// worth it. `work_per_iter` lets heavy-bodied loops with few iterations
// parallelize too.
constexpr long kParallelGrainWork = 16384;

template <typename Fn>
void parallel_for(long n, Exec exec, Fn&& fn, long work_per_iter = 1) {
  if (exec == Exec::parallel && n > 1 && n * work_per_iter >= kParallelGrainWork) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) fn(i);
  } else {
    for (long i = 0; i < n; ++i) fn(i);
  }
}

/// 2D convolution, stride 1, square kernel, zero padding `pad`.
/// weights layout: (cout, cin, k, k); bias length cout (may be null).
template <typename T>
void conv2d_forward(const Tensor3<T>& x, const T* wgt, const T* bias, int cout, int k,
                    int pad, Tensor3<T>& y, Exec exec = default_exec()) {
  const int oh = x.h + 2 * pad - k + 1;
  const int ow = x.w + 2 * pad - k + 1;
  if (y.c != cout || y.h != oh || y.w != ow) y = Tensor3<T>(cout, oh, ow);
  const int cin = x.c;
  parallel_for(static_cast<long>(cout) * oh, exec, [&](long idx) {
    const int oc = static_cast<int>(idx / oh);
    const int oy = static_cast<int>(idx % oh);
    const T* wrow = wgt + static_cast<size_t>(oc) * cin * k * k;
    T* out = y.plane(oc) + static_cast<size_t>(oy) * ow;
    for (int ox = 0; ox < ow; ++ox) out[ox] = bias ? bias[oc] : T(0);
    for (int ic = 0; ic < cin; ++ic) {
      const T* in = x.plane(ic);
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= x.h) continue;
        const T* irow = in + static_cast<size_t>(iy) * x.w;
        const T* wk = wrow + (static_cast<size_t>(ic) * k + ky) * k;
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[kx];
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(ow, x.w + pad - kx);
          const T* __restrict__ ishift = irow + x0 + kx - pad;
          T* __restrict__ orow = out + x0;
          for (int ox = 0; ox < x1 - x0; ++ox) orow[ox] += wv * ishift[ox];
        }
      }
    }
  }, static_cast<long>(cin) * k * k * ow);
}

/// Gradient w.r.t. the convolution input. Algebraically this is a forward
/// convolution of dy with the flipped, channel-transposed kernel at padding
/// k-1-pad, so it reuses the fast forward path.
template <typename T>
void conv2d_backward_input(const Tensor3<T>& dy, const T* wgt, int cin, int k, int pad,
                           Tensor3<T>& dx, Exec exec = default_exec()) {
  const int cout = dy.c;
  std::vector<T> wt(static_cast<size_t>(cin) * cout * k * k);
  for (int oc = 0; oc < cout; ++oc)
    for (int ic = 0; ic < cin; ++ic)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          wt[((static_cast<size_t>(ic) * cout + oc) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
              wgt[((static_cast<size_t>(oc) * cin + ic) * k + ky) * k + kx];
  conv2d_forward(dy, wt.data(), static_cast<const T*>(nullptr), cin, k, k - 1 - pad, dx,
                 exec);
}

/// Accumulates weight/bias gradients. dwgt has cout*cin*k*k entries, dbias cout.
template <typename T>
void conv2d_backward_params(const Tensor3<T>& x, const Tensor3<T>& dy, int k, int pad,
                            T* dwgt, T* dbias, Exec exec = default_exec()) {
  const int cin = x.c, cout = dy.c;
  parallel_for(static_cast<long>(cout) * cin, exec, [&](long idx) {
    const int oc = static_cast<int>(idx / cin);
    const int ic = static_cast<int>(idx % cin);
    const T* g = dy.plane(oc);
    const T* in = x.plane(ic);
    T* dw = dwgt + (static_cast<size_t>(oc) * cin + ic) * k * k;
    for (int ky = 0; ky < k; ++ky) {
      const int oy_lo = std::max(0, pad - ky);
      const int oy_hi = std::min(dy.h, x.h + pad - ky);
      for (int kx = 0; kx < k; ++kx) {
        const int ox_lo = std::max(0, pad - kx);
        const int ox_hi = std::min(dy.w, x.w + pad - kx);
        T acc = T(0);
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const T* __restrict__ grow = g + static_cast<size_t>(oy) * dy.w + ox_lo;
          const T* __restrict__ irow =
              in + static_cast<size_t>(oy + ky - pad) * x.w + ox_lo + kx - pad;
          T row_acc = T(0);
          for (int ox = 0; ox < ox_hi - ox_lo; ++ox) row_acc += grow[ox] * irow[ox];
          acc += row_acc;
        }
        dw[ky * k + kx] += acc;
      }
    }
  }, static_cast<long>(k) * k * dy.h * dy.w);
  if (dbias) {
    for (int oc = 0; oc < cout; ++oc) {
      T acc = T(0);
      const T* g = dy.plane(oc);
      for (size_t i = 0; i < static_cast<size_t>(dy.h) * dy.w; ++i) acc += g[i];
      dbias[oc] += acc;
    }
  }
}

template <typename T>
void relu_forward(Tensor3<T>& x, Exec exec = default_exec()) {
  parallel_for(static_cast<long>(x.size()), exec,
               [&](long i) { x.v[i] = x.v[i] > T(0) ? x.v[i] : T(0); });
}

/// dx = dy where the pre-activation was positive. `act` is the post-ReLU value.
template <typename T>
void relu_backward(const Tensor3<T>& act, Tensor3<T>& dy, Exec exec = default_exec()) {
  parallel_for(static_cast<long>(act.size()), exec,
               [&](long i) { dy.v[i] = act.v[i] > T(0) ? dy.v[i] : T(0); });
}

/// 2×2 max pooling, stride 2. Input dims must be even. argmax records the
/// winning corner (0..3) per output element for the backward pass.
template <typename T>
void maxpool2_forward(const Tensor3<T>& x, Tensor3<T>& y, std::vector<std::uint8_t>& argmax,
                      Exec exec = default_exec()) {
  if (x.h % 2 || x.w % 2) throw std::invalid_argument("maxpool2: odd input dims");
  const int oh = x.h / 2, ow = x.w / 2;
  if (y.c != x.c || y.h != oh || y.w != ow) y = Tensor3<T>(x.c, oh, ow);
  argmax.assign(y.size(), 0);
  parallel_for(static_cast<long>(x.c) * oh, exec, [&](long idx) {
    const int ci = static_cast<int>(idx / oh);
    const int oy = static_cast<int>(idx % oh);
    const T* in = x.plane(ci);
    for (int ox = 0; ox < ow; ++ox) {
      T best = in[static_cast<size_t>(2 * oy) * x.w + 2 * ox];
      std::uint8_t bi = 0;
      const T cands[4] = {best, in[static_cast<size_t>(2 * oy) * x.w + 2 * ox + 1],
                          in[static_cast<size_t>(2 * oy + 1) * x.w + 2 * ox],
                          in[static_cast<size_t>(2 * oy + 1) * x.w + 2 * ox + 1]};
      for (std::uint8_t i = 1; i < 4; ++i)
        if (cands[i] > best) { best = cands[i]; bi = i; }
      y.at(ci, oy, ox) = best;
      argmax[(static_cast<size_t>(ci) * oh + oy) * ow + ox] = bi;
    }
  }, 6L * ow);
}

template <typename T>
void maxpool2_backward(const Tensor3<T>& dy, const std::vector<std::uint8_t>& argmax,
                       Tensor3<T>& dx, Exec exec = default_exec()) {
  // dx dims are 2× dy; gather: each input cell checks whether it won its pool.
  if (dx.c != dy.c || dx.h != dy.h * 2 || dx.w != dy.w * 2)
    dx = Tensor3<T>(dy.c, dy.h * 2, dy.w * 2);
  parallel_for(static_cast<long>(dx.c) * dx.h, exec, [&](long idx) {
    const int ci = static_cast<int>(idx / dx.h);
    const int iy = static_cast<int>(idx % dx.h);
    const int oy = iy / 2;
    for (int ix = 0; ix < dx.w; ++ix) {
      const int ox = ix / 2;
      const std::uint8_t corner = static_cast<std::uint8_t>((iy % 2) * 2 + (ix % 2));
      const size_t oidx = (static_cast<size_t>(ci) * dy.h + oy) * dy.w + ox;
      dx.at(ci, iy, ix) = argmax[oidx] == corner ? dy.v[oidx] : T(0);
    }
  }, 4L * dx.w);
}

/// Transposed convolution with 2×2 kernel, stride 2 (each output pixel has
/// exactly one source pixel). weights layout: (cin, cout, 2, 2).
template <typename T>
void deconv2x_forward(const Tensor3<T>& x, const T* wgt, const T* bias, int cout,
                      Tensor3<T>& y, Exec exec = default_exec()) {
  const int oh = x.h * 2, ow = x.w * 2;
  if (y.c != cout || y.h != oh || y.w != ow) y = Tensor3<T>(cout, oh, ow);
  const int cin = x.c;
  parallel_for(static_cast<long>(cout) * oh, exec, [&](long idx) {
    const int oc = static_cast<int>(idx / oh);
    const int oy = static_cast<int>(idx % oh);
    const int iy = oy / 2, dy = oy % 2;
    for (int ox = 0; ox < ow; ++ox) {
      const int ix = ox / 2, dx = ox % 2;
      T acc = bias ? bias[oc] : T(0);
      for (int ic = 0; ic < cin; ++ic)
        acc += x.at(ic, iy, ix) * wgt[((static_cast<size_t>(ic) * cout + oc) * 2 + dy) * 2 + dx];
      y.at(oc, oy, ox) = acc;
    }
  }, static_cast<long>(cin) * ow);
}

template <typename T>
void deconv2x_backward_input(const Tensor3<T>& dy, const T* wgt, int cin, Tensor3<T>& dx,
                             Exec exec = default_exec()) {
  const int ih = dy.h / 2, iw = dy.w / 2;
  if (dx.c != cin || dx.h != ih || dx.w != iw) dx = Tensor3<T>(cin, ih, iw);
  const int cout = dy.c;
  parallel_for(static_cast<long>(cin) * ih, exec, [&](long idx) {
    const int ic = static_cast<int>(idx / ih);
    const int iy = static_cast<int>(idx % ih);
    for (int ix = 0; ix < iw; ++ix) {
      T acc = T(0);
      for (int oc = 0; oc < cout; ++oc)
        for (int dyy = 0; dyy < 2; ++dyy)
          for (int dxx = 0; dxx < 2; ++dxx)
            acc += dy.at(oc, 2 * iy + dyy, 2 * ix + dxx) *
                   wgt[((static_cast<size_t>(ic) * cout + oc) * 2 + dyy) * 2 + dxx];
      dx.at(ic, iy, ix) = acc;
    }
  }, static_cast<long>(cout) * 4 * iw);
}

template <typename T>
void deconv2x_backward_params(const Tensor3<T>& x, const Tensor3<T>& dy, T* dwgt, T* dbias,
                              Exec exec = default_exec()) {
  const int cin = x.c, cout = dy.c;
  parallel_for(static_cast<long>(cin) * cout, exec, [&](long idx) {
    const int ic = static_cast<int>(idx / cout);
    const int oc = static_cast<int>(idx % cout);
    for (int dyy = 0; dyy < 2; ++dyy)
      for (int dxx = 0; dxx < 2; ++dxx) {
        T acc = T(0);
        for (int iy = 0; iy < x.h; ++iy)
          for (int ix = 0; ix < x.w; ++ix)
            acc += x.at(ic, iy, ix) * dy.at(oc, 2 * iy + dyy, 2 * ix + dxx);
        dwgt[((static_cast<size_t>(ic) * cout + oc) * 2 + dyy) * 2 + dxx] += acc;
      }
  }, 4L * x.h * x.w);
  if (dbias)
    for (int oc = 0; oc < cout; ++oc) {
      T acc = T(0);
      const T* g = dy.plane(oc);
      for (size_t i = 0; i < static_cast<size_t>(dy.h) * dy.w; ++i) acc += g[i];
      dbias[oc] += acc;
    }
}

}  // namespace nucseg::kern
