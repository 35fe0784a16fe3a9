// Copyright 2026 The vcm-postproc Authors
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

#include <cblas.h>

#include <algorithm>
#include <cstddef>
#include <span>

namespace vcm::detail {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

/// Geometry shared by every 3x3 convolution in a forward pass.
struct Geometry {
  int batch = 1;
  int height = 1;
  int width = 1;
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t row() const { return plane() * batch; }
};

/// Fills im2col rows for channels [c_begin, c_end) of a channel-major buffer.
/// Row (c*9 + ky*3 + kx) holds the input shifted by (ky-1, kx-1), zero padded.
template <typename T>
void im2col(const T* in, int c_begin, int c_end, const Geometry& g, T* col) {
  const std::size_t row = g.row();
  for (int c = c_begin; c < c_end; ++c) {
    const T* src_c = in + c * row;
    for (int t = 0; t < 9; ++t) {
      const int dy = t / 3 - 1;
      const int dx = t % 3 - 1;
      T* dst_c = col + (static_cast<std::size_t>(c) * 9 + t) * row;
      for (int n = 0; n < g.batch; ++n) {
        const T* src = src_c + n * g.plane();
        T* dst = dst_c + n * g.plane();
        for (int y = 0; y < g.height; ++y) {
          T* out_row = dst + static_cast<std::size_t>(y) * g.width;
          const int sy = y + dy;
          if (sy < 0 || sy >= g.height) {
            std::fill(out_row, out_row + g.width, T(0));
            continue;
          }
          const T* in_row = src + static_cast<std::size_t>(sy) * g.width;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(g.width, g.width - dx);
          std::fill(out_row, out_row + x_begin, T(0));
          for (int x = x_begin; x < x_end; ++x) out_row[x] = in_row[x + dx];
          std::fill(out_row + std::max(x_begin, x_end), out_row + g.width,
                    T(0));
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates column-gradient rows back into channels
/// [c_begin, c_end) of `in_grad`.
template <typename T>
void col2im_add(const T* col, int c_begin, int c_end, const Geometry& g,
                T* in_grad) {
  const std::size_t row = g.row();
  for (int c = c_begin; c < c_end; ++c) {
    T* dst_c = in_grad + c * row;
    for (int t = 0; t < 9; ++t) {
      const int dy = t / 3 - 1;
      const int dx = t % 3 - 1;
      const T* src_c = col + (static_cast<std::size_t>(c) * 9 + t) * row;
      for (int n = 0; n < g.batch; ++n) {
        const T* src = src_c + n * g.plane();
        T* dst = dst_c + n * g.plane();
        for (int y = 0; y < g.height; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= g.height) continue;
          const T* grad_row = src + static_cast<std::size_t>(y) * g.width;
          T* in_row = dst + static_cast<std::size_t>(sy) * g.width;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(g.width, g.width - dx);
          for (int x = x_begin; x < x_end; ++x) in_row[x + dx] += grad_row[x];
        }
      }
    }
  }
}

/// Read-only view of one 3x3 convolution's parameters.
/// weight is laid out [out][in][3][3], i.e. an (out x in*9) matrix.
template <typename T>
struct ConvView {
  const T* weight = nullptr;
  const T* bias = nullptr;
  int in_channels = 0;
  int out_channels = 0;
  int k() const { return in_channels * 9; }
};

/// Writable gradient slots for one convolution.
template <typename T>
struct ConvGrad {
  T* weight = nullptr;
  T* bias = nullptr;
};

/// out(out_channels x row) = W * col + bias.
template <typename T>
void conv_forward(const ConvView<T>& conv, const T* col, const Geometry& g,
                  T* out) {
  const int n = static_cast<int>(g.row());
  for (int o = 0; o < conv.out_channels; ++o) {
    std::fill(out + static_cast<std::size_t>(o) * n,
              out + static_cast<std::size_t>(o + 1) * n, conv.bias[o]);
  }
  gemm(false, false, conv.out_channels, n, conv.k(), T(1), conv.weight,
       conv.k(), col, n, T(1), out, n);
}

/// Accumulates dW, db and (optionally) the column gradient for one conv.
template <typename T>
void conv_backward(const ConvView<T>& conv, const T* col, const T* out_grad,
                   const Geometry& g, const ConvGrad<T>& grad, T* col_grad) {
  const int n = static_cast<int>(g.row());
  gemm(false, true, conv.out_channels, conv.k(), n, T(1), out_grad, n, col, n,
       T(1), grad.weight, conv.k());
  for (int o = 0; o < conv.out_channels; ++o) {
    const T* row = out_grad + static_cast<std::size_t>(o) * n;
    T sum = T(0);
    for (int i = 0; i < n; ++i) sum += row[i];
    grad.bias[o] += sum;
  }
  if (col_grad != nullptr) {
    gemm(true, false, conv.k(), n, conv.out_channels, T(1), conv.weight,
         conv.k(), out_grad, n, T(1), col_grad, n);
  }
}

template <typename T>
void leaky_relu_inplace(std::span<T> values, T slope) {
  for (T& v : values) v = v > T(0) ? v : slope * v;
}

/// Multiplies an upstream gradient by the LeakyReLU derivative, recovered from
/// the activation output (sign is preserved for slope >= 0).
template <typename T>
void leaky_relu_backward_inplace(std::span<const T> activated,
                                 std::span<T> grad, T slope) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activated[i] > T(0))) grad[i] *= slope;
  }
}

}  // namespace vcm::detail
