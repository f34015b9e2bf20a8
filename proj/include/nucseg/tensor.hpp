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

#include <cstddef>
#include <vector>

namespace nucseg {

/// Dense (channels, height, width) tensor, row-major within a channel.
template <typename T>
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, T fill = T(0))
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  T at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
  T& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
  const T* plane(int ci) const { return v.data() + static_cast<size_t>(ci) * h * w; }
  T* plane(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
  size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }
  bool same_shape(const Tensor3& o) const { return c == o.c && h == o.h && w == o.w; }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(c, h, w);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

}  // namespace nucseg
