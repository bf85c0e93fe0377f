// Copyright 2026 The M3D Attack Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "m3d/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace m3d {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Tensor<T> Conv2d<T>::forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const {
  if (x.c() != in_)
    throw ShapeError("conv2d: expected " + std::to_string(in_) + " input channels, got " + std::to_string(x.c()));
  const int n = x.n(), h = x.h(), w = x.w();
  const int ho = out_size(h), wo = out_size(w);
  const int kk = in_ * k_ * k_;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t cols_w = plane * n;

  std::vector<T> cols(static_cast<std::size_t>(kk) * cols_w, T(0));
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        T* row = cols.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * cols_w;
        for (int i = 0; i < n; ++i) {
          const T* src = x.data.data() + (static_cast<std::size_t>(i) * in_ + ci) * h * w;
          T* dst = row + i * plane;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) dst[oy * wo + ox] = src[iy * w + ix];
            }
          }
        }
      }
    }
  }

  ConstMapMat<T> wm(p[w_].values.data(), out_, kk);
  ConstMapMat<T> cm(cols.data(), kk, static_cast<Eigen::Index>(cols_w));
  RowMat<T> om = wm * cm;

  Tensor<T> y(n, out_, ho, wo);
  const T* bias = p[b_].values.data();
  for (int i = 0; i < n; ++i)
    for (int co = 0; co < out_; ++co) {
      const T* src = om.data() + co * cols_w + i * plane;
      T* dst = y.data.data() + (static_cast<std::size_t>(i) * out_ + co) * plane;
      for (std::size_t q = 0; q < plane; ++q) dst[q] = src[q] + bias[co];
    }

  if (tape) {
    tape->push(std::move(cols));
    tape->push_indices({n, h, w});
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                              bool need_dx) const {
  const std::vector<int> dims = tape.pop_indices();
  const std::vector<T> cols = tape.pop();
  const int n = dims[0], h = dims[1], w = dims[2];
  const int ho = out_size(h), wo = out_size(w);
  const int kk = in_ * k_ * k_;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t cols_w = plane * n;

  RowMat<T> gm(out_, static_cast<Eigen::Index>(cols_w));
  for (int i = 0; i < n; ++i)
    for (int co = 0; co < out_; ++co)
      std::copy_n(gy.data.data() + (static_cast<std::size_t>(i) * out_ + co) * plane, plane,
                  gm.data() + co * cols_w + i * plane);

  if (grads) {
    ConstMapMat<T> cm(cols.data(), kk, static_cast<Eigen::Index>(cols_w));
    MapMat<T> gw((*grads)[w_].values.data(), out_, kk);
    gw.noalias() += gm * cm.transpose();
    auto& gb = (*grads)[b_].values;
    for (int co = 0; co < out_; ++co) gb[co] += gm.row(co).sum();
  }

  if (!need_dx) return {};

  ConstMapMat<T> wm(p[w_].values.data(), out_, kk);
  RowMat<T> gcols = wm.transpose() * gm;
  Tensor<T> gx(n, in_, h, w);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const T* row = gcols.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * cols_w;
        for (int i = 0; i < n; ++i) {
          T* dst = gx.data.data() + (static_cast<std::size_t>(i) * in_ + ci) * h * w;
          const T* src = row + i * plane;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * wo + ox];
            }
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------- InstanceNorm

template <typename T>
Tensor<T> InstanceNorm<T>::forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const {
  if (x.c() != ch_) throw ShapeError("instance norm: channel mismatch");
  const std::size_t m = static_cast<std::size_t>(x.h()) * x.w();
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  std::vector<T> xhat(tape ? x.size() : 0);
  std::vector<T> inv_std(tape ? static_cast<std::size_t>(x.n()) * ch_ : 0);
  const T* gamma = p[g_].values.data();
  const T* beta = p[b_].values.data();
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < ch_; ++c) {
      const std::size_t off = (static_cast<std::size_t>(i) * ch_ + c) * m;
      const T* src = x.data.data() + off;
      T mean = 0;
      for (std::size_t q = 0; q < m; ++q) mean += src[q];
      mean /= static_cast<T>(m);
      T var = 0;
      for (std::size_t q = 0; q < m; ++q) var += (src[q] - mean) * (src[q] - mean);
      var /= static_cast<T>(m);
      const T is = T(1) / std::sqrt(var + static_cast<T>(kEps));
      T* dst = y.data.data() + off;
      for (std::size_t q = 0; q < m; ++q) {
        const T xh = (src[q] - mean) * is;
        if (tape) xhat[off + q] = xh;
        dst[q] = gamma[c] * xh + beta[c];
      }
      if (tape) inv_std[static_cast<std::size_t>(i) * ch_ + c] = is;
    }
  if (tape) {
    tape->push(std::move(xhat));
    tape->push(std::move(inv_std));
  }
  return y;
}

template <typename T>
Tensor<T> InstanceNorm<T>::backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                                    bool need_dx) const {
  const std::vector<T> inv_std = tape.pop();
  const std::vector<T> xhat = tape.pop();
  const std::size_t m = static_cast<std::size_t>(gy.h()) * gy.w();
  const T* gamma = p[g_].values.data();
  T* ggamma = grads ? (*grads)[g_].values.data() : nullptr;
  T* gbeta = grads ? (*grads)[b_].values.data() : nullptr;
  Tensor<T> gx;
  if (need_dx) gx = Tensor<T>(gy.n(), gy.c(), gy.h(), gy.w());
  for (int i = 0; i < gy.n(); ++i)
    for (int c = 0; c < ch_; ++c) {
      const std::size_t off = (static_cast<std::size_t>(i) * ch_ + c) * m;
      const T* g = gy.data.data() + off;
      const T* xh = xhat.data() + off;
      T sum_g = 0, sum_gx = 0;
      for (std::size_t q = 0; q < m; ++q) {
        sum_g += g[q];
        sum_gx += g[q] * xh[q];
      }
      if (grads) {
        gbeta[c] += sum_g;
        ggamma[c] += sum_gx;
      }
      if (!need_dx) continue;
      const T scale = gamma[c] * inv_std[static_cast<std::size_t>(i) * ch_ + c] / static_cast<T>(m);
      T* dst = gx.data.data() + off;
      const T mm = static_cast<T>(m);
      for (std::size_t q = 0; q < m; ++q) dst[q] = scale * (mm * g[q] - sum_g - xh[q] * sum_gx);
    }
  return gx;
}

// ------------------------------------------------------------------ Relu

template <typename T>
Tensor<T> Relu<T>::forward(const ParamSet<T>&, const Tensor<T>& x, Tape<T>* tape) const {
  Tensor<T> y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  if (tape) tape->push(y.data);
  return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const ParamSet<T>&, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>*,
                            bool need_dx) const {
  const std::vector<T> y = tape.pop();
  if (!need_dx) return {};
  Tensor<T> gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i)
    if (!(y[i] > T(0))) gx.data[i] = T(0);
  return gx;
}

// -------------------------------------------------------------- MaxPool2

template <typename T>
Tensor<T> MaxPool2<T>::forward(const ParamSet<T>&, const Tensor<T>& x, Tape<T>* tape) const {
  const int ho = x.h() / 2, wo = x.w() / 2;
  Tensor<T> y(x.n(), x.c(), ho, wo);
  std::vector<int> arg(tape ? y.size() + 4 : 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t base = (static_cast<std::size_t>(i) * x.c() + c) * x.h() * x.w();
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          std::size_t best = base + static_cast<std::size_t>(2 * oy) * x.w() + 2 * ox;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t q = base + static_cast<std::size_t>(2 * oy + dy) * x.w() + 2 * ox + dx;
              if (x.data[q] > x.data[best]) best = q;
            }
          y.data[o] = x.data[best];
          if (tape) arg[o] = static_cast<int>(best);
        }
    }
  if (tape) {
    for (int d = 0; d < 4; ++d) arg[y.size() + d] = x.shape[d];
    tape->push_indices(std::move(arg));
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const ParamSet<T>&, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>*,
                                bool need_dx) const {
  const std::vector<int> arg = tape.pop_indices();
  if (!need_dx) return {};
  const std::size_t n = gy.size();
  Tensor<T> gx(arg[n], arg[n + 1], arg[n + 2], arg[n + 3]);
  for (std::size_t o = 0; o < n; ++o) gx.data[arg[o]] += gy.data[o];
  return gx;
}

// ------------------------------------------------------------- Upsample2

template <typename T>
Tensor<T> Upsample2<T>::forward(const ParamSet<T>&, const Tensor<T>& x, Tape<T>*) const {
  Tensor<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> Upsample2<T>::backward(const ParamSet<T>&, const Tensor<T>& gy, Tape<T>&, ParamSet<T>*,
                                 bool need_dx) const {
  if (!need_dx) return {};
  Tensor<T> gx(gy.n(), gy.c(), gy.h() / 2, gy.w() / 2);
  for (int i = 0; i < gy.n(); ++i)
    for (int c = 0; c < gy.c(); ++c)
      for (int yy = 0; yy < gy.h(); ++yy)
        for (int xx = 0; xx < gy.w(); ++xx) gx.at(i, c, yy / 2, xx / 2) += gy.at(i, c, yy, xx);
  return gx;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const ParamSet<T>&, const Tensor<T>& x, Tape<T>* tape) const {
  Tensor<T> y(x.n(), x.c(), 1, 1);
  const std::size_t m = static_cast<std::size_t>(x.h()) * x.w();
  for (std::size_t q = 0; q < y.size(); ++q) {
    T s = 0;
    for (std::size_t r = 0; r < m; ++r) s += x.data[q * m + r];
    y.data[q] = s / static_cast<T>(m);
  }
  if (tape) tape->push_indices({x.h(), x.w()});
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const ParamSet<T>&, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>*,
                                     bool need_dx) const {
  const std::vector<int> hw = tape.pop_indices();
  if (!need_dx) return {};
  Tensor<T> gx(gy.n(), gy.c(), hw[0], hw[1]);
  const std::size_t m = static_cast<std::size_t>(hw[0]) * hw[1];
  for (std::size_t q = 0; q < gy.size(); ++q) {
    const T g = gy.data[q] / static_cast<T>(m);
    for (std::size_t r = 0; r < m; ++r) gx.data[q * m + r] = g;
  }
  return gx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Tensor<T> Linear<T>::forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const {
  if (static_cast<int>(x.sample_size()) != in_) throw ShapeError("linear: input width mismatch");
  ConstMapMat<T> xm(x.data.data(), x.n(), in_);
  ConstMapMat<T> wm(p[w_].values.data(), out_, in_);
  Tensor<T> y(x.n(), out_, 1, 1);
  MapMat<T> ym(y.data.data(), x.n(), out_);
  ym.noalias() = xm * wm.transpose();
  const T* b = p[b_].values.data();
  for (int i = 0; i < x.n(); ++i)
    for (int o = 0; o < out_; ++o) ym(i, o) += b[o];
  if (tape) {
    tape->push(x.data);
    tape->push_indices({x.c(), x.h(), x.w()});
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                              bool need_dx) const {
  const std::vector<int> dims = tape.pop_indices();
  const std::vector<T> x = tape.pop();
  const int n = gy.n();
  ConstMapMat<T> gm(gy.data.data(), n, out_);
  ConstMapMat<T> xm(x.data(), n, in_);
  if (grads) {
    MapMat<T> gw((*grads)[w_].values.data(), out_, in_);
    gw.noalias() += gm.transpose() * xm;
    auto& gb = (*grads)[b_].values;
    for (int o = 0; o < out_; ++o) gb[o] += gm.col(o).sum();
  }
  if (!need_dx) return {};
  Tensor<T> gx(n, dims[0], dims[1], dims[2]);
  MapMat<T> gxm(gx.data.data(), n, in_);
  ConstMapMat<T> wm(p[w_].values.data(), out_, in_);
  gxm.noalias() = gm * wm;
  return gx;
}

// -------------------------------------------------------------- Residual

template <typename T>
Tensor<T> Residual<T>::forward(const ParamSet<T>& p, const Tensor<T>& x, Tape<T>* tape) const {
  Tensor<T> h = x;
  for (const auto& l : body_) h = l->forward(p, h, tape);
  require_same_shape(h, x, "residual");
  for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += x.data[i];
  return h;
}

template <typename T>
Tensor<T> Residual<T>::backward(const ParamSet<T>& p, const Tensor<T>& gy, Tape<T>& tape, ParamSet<T>* grads,
                                bool need_dx) const {
  Tensor<T> g = gy;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it) g = (*it)->backward(p, g, tape, grads, true);
  if (!need_dx) return {};
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gy.data[i];
  return g;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class InstanceNorm<float>;
template class InstanceNorm<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool2<float>;
template class MaxPool2<double>;
template class Upsample2<float>;
template class Upsample2<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Linear<float>;
template class Linear<double>;
template class Residual<float>;
template class Residual<double>;

}  // namespace m3d
