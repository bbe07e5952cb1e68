#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Plain loops only; nothing here calls into the tape or the fused kernels.

#include <cmath>
#include <cstddef>
#include <vector>

#include "wisa/mopa/gating.hpp"
#include "wisa/mopa/mopa.hpp"
#include "wisa/numcore/tensor.hpp"

namespace wisa::oracle {

using numcore::Tensor;

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      out[i * n + j] = s;
    }
  return out;
}

inline Tensor naive_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = naive_matmul(x, w);
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < out.dim(1); ++j) out[i * out.dim(1) + j] += b[j];
  return out;
}

// Attention matrix of one head, computed entry by entry.
inline Tensor naive_head_attention(const Tensor& q, const Tensor& k, std::size_t head, std::size_t head_dim) {
  const std::size_t n = q.dim(0), width = q.dim(1);
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < head_dim; ++c) s += q[i * width + head * head_dim + c] * k[j * width + head * head_dim + c];
      logits[j] = s / std::sqrt(static_cast<double>(head_dim));
      mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(logits[j] - mx);
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = std::exp(logits[j] - mx) / z;
  }
  return a;
}

struct NaiveMopa {
  std::vector<Tensor> maps;   // per head (N, N)
  Tensor head_outputs;        // (N, heads * head_dim), ungated
};

inline NaiveMopa naive_mopa_heads(const Tensor& f, const mopa::MoPAWeights& w) {
  const Tensor q = naive_affine(f, w.wq, w.bq);
  const Tensor k = naive_affine(f, w.wk, w.bk);
  const Tensor v = naive_affine(f, w.wv, w.bv);
  const std::size_t n = f.dim(0), d = w.head_dim, width = w.width();
  NaiveMopa out;
  out.head_outputs = Tensor({n, width});
  for (std::size_t h = 0; h < kNumCategories; ++h) {
    Tensor a = naive_head_attention(q, k, h, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * v[j * width + h * d + c];
        out.head_outputs[i * width + h * d + c] = s;
      }
    out.maps.push_back(std::move(a));
  }
  return out;
}

// Plain MHSA followed by the output map, with per-head scale factors applied to the head slices.
inline Tensor naive_mopa(const Tensor& f, const mopa::GatingVector& head_scale, const mopa::MoPAWeights& w) {
  Tensor heads = naive_mopa_heads(f, w).head_outputs;
  const std::size_t n = f.dim(0), d = w.head_dim, width = w.width();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < kNumCategories; ++h)
      for (std::size_t c = 0; c < d; ++c) heads[i * width + h * d + c] *= head_scale[h];
  return naive_matmul(heads, w.wo);
}

// Contribution of head i alone at gate 1: zero every other head's slice before the output map.
inline Tensor naive_single_head(const Tensor& f, std::size_t head, const mopa::MoPAWeights& w) {
  mopa::GatingVector only = mopa::GatingVector::zeros();
  only[head] = 1.0;
  return naive_mopa(f, only, w);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace wisa::oracle
