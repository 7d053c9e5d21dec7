#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "ureid/error.hpp"

namespace ureid {

using Vec = std::vector<double>;

// Dense H x W x C tensor, row-major: index = (i*w + j)*c + k.
struct Tensor3 {
  int h = 0, w = 0, c = 0;
  Vec v;

  Tensor3() = default;
  Tensor3(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, 0.0) {}

  double& at(int i, int j, int k) { return v[(size_t(i) * w + j) * c + k]; }
  double at(int i, int j, int k) const { return v[(size_t(i) * w + j) * c + k]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && c == o.c; }
};

// Dense row-major matrix.
struct Mat {
  int rows = 0, cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return a[size_t(r) * cols + c]; }
  size_t size() const { return a.size(); }
};

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec normalized(const Vec& a, const char* what = "vector") {
  double n = norm2(a);
  if (!(n > 1e-12)) throw NumericError(std::string("cannot normalize near-zero ") + what);
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] / n;
  return r;
}

inline bool is_unit(const Vec& a, double tol = 1e-6) { return std::fabs(norm2(a) - 1.0) <= tol; }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically safe softmax over a logit vector.
inline Vec softmax(const Vec& logits) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  Vec p(logits.size());
  double s = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return p;
}

using Rng = std::mt19937_64;

inline Vec gaussian_vec(size_t n, Rng& rng, double mean = 0.0, double sigma = 1.0) {
  std::normal_distribution<double> g(mean, sigma);
  Vec r(n);
  for (double& x : r) x = g(rng);
  return r;
}

inline Vec random_unit_vec(size_t n, Rng& rng) {
  Vec r = gaussian_vec(n, rng);
  return normalized(r);
}

}  // namespace ureid
