#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ureid/error.hpp"
#include "ureid/tensor.hpp"

namespace ureid {

// Factored spatial x channel sigmoid attention. The channel path is a
// squeeze-excite bottleneck on the spatially pooled vector; the spatial path
// is a scalar affine on the per-position channel mean.
struct AttentionParams {
  int c = 0;
  int r = 4;
  Mat reduce_w;  // c x (c/r)
  Vec reduce_b;  // c/r
  Mat expand_w;  // (c/r) x c
  Vec expand_b;  // c
  double spatial_w = 0.0;
  double spatial_b = 0.0;

  static AttentionParams init(int c, int r, Rng& rng) {
    if (r < 1 || c % r != 0) throw ConfigError("reduction ratio must divide channel count");
    AttentionParams p;
    p.c = c;
    p.r = r;
    const int m = c / r;
    p.reduce_w = Mat(c, m);
    p.expand_w = Mat(m, c);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& x : p.reduce_w.a) x = g(rng) / std::sqrt(double(c));
    for (double& x : p.expand_w.a) x = g(rng) / std::sqrt(double(m));
    p.reduce_b.assign(m, 0.0);
    p.expand_b.assign(c, 0.0);
    p.spatial_w = g(rng) * 0.5;
    p.spatial_b = 0.0;
    return p;
  }
};

struct AttentionGrads {
  Mat reduce_w;
  Vec reduce_b;
  Mat expand_w;
  Vec expand_b;
  double spatial_w = 0.0;
  double spatial_b = 0.0;

  static AttentionGrads zeros_like(const AttentionParams& p) {
    AttentionGrads g;
    g.reduce_w = Mat(p.reduce_w.rows, p.reduce_w.cols);
    g.reduce_b.assign(p.reduce_b.size(), 0.0);
    g.expand_w = Mat(p.expand_w.rows, p.expand_w.cols);
    g.expand_b.assign(p.expand_b.size(), 0.0);
    return g;
  }
};

struct AttnCache {
  Vec squeezed;    // GAP over H*W, length c
  Vec pre_hidden;  // reduce output before ReLU, length c/r
  Vec hidden;      // after ReLU
  Vec chan_gate;   // sigmoid(channel logits), length c
  Vec pos_mean;    // per-position channel mean, length h*w
  Vec pos_gate;    // sigmoid(spatial logits), length h*w
};

// mask[i,j,k] = sigmoid(spatial logit at (i,j)) * sigmoid(channel logit k).
inline Tensor3 attention_mask(const Tensor3& f, const AttentionParams& p, AttnCache* cache = nullptr) {
  if (f.c != p.c) throw ShapeError("attention_mask: channel count mismatch");
  const int hw = f.h * f.w;
  const int m = p.c / p.r;

  Vec s(p.c, 0.0);
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j)
      for (int k = 0; k < p.c; ++k) s[k] += f.at(i, j, k);
  for (double& x : s) x /= hw;

  Vec pre(m, 0.0), hid(m, 0.0);
  for (int q = 0; q < m; ++q) {
    double acc = p.reduce_b[q];
    for (int k = 0; k < p.c; ++k) acc += p.reduce_w(k, q) * s[k];
    pre[q] = acc;
    hid[q] = acc > 0.0 ? acc : 0.0;
  }
  Vec gate(p.c, 0.0);
  for (int k = 0; k < p.c; ++k) {
    double acc = p.expand_b[k];
    for (int q = 0; q < m; ++q) acc += p.expand_w(q, k) * hid[q];
    gate[k] = sigmoid(acc);
  }

  Vec tmean(hw, 0.0), pgate(hw, 0.0);
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j) {
      double acc = 0.0;
      for (int k = 0; k < f.c; ++k) acc += f.at(i, j, k);
      const int ij = i * f.w + j;
      tmean[ij] = acc / f.c;
      pgate[ij] = sigmoid(p.spatial_w * tmean[ij] + p.spatial_b);
    }

  Tensor3 mask(f.h, f.w, f.c);
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j)
      for (int k = 0; k < f.c; ++k) mask.at(i, j, k) = pgate[i * f.w + j] * gate[k];

  if (cache) *cache = {std::move(s), std::move(pre), std::move(hid), std::move(gate), std::move(tmean), std::move(pgate)};
  return mask;
}

// F_sp = mask (.) F and F_ag = (1 - mask) (.) F; the two sum back to F.
inline void split_branches(const Tensor3& f, const Tensor3& mask, Tensor3& f_sp, Tensor3& f_ag) {
  if (!f.same_shape(mask)) throw ShapeError("split_branches: mask shape mismatch");
  f_sp = Tensor3(f.h, f.w, f.c);
  f_ag = Tensor3(f.h, f.w, f.c);
  for (size_t t = 0; t < f.size(); ++t) {
    f_sp.v[t] = mask.v[t] * f.v[t];
    f_ag.v[t] = (1.0 - mask.v[t]) * f.v[t];
  }
}

inline Vec pool_hw(const Tensor3& f) {
  Vec v(f.c, 0.0);
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j)
      for (int k = 0; k < f.c; ++k) v[k] += f.at(i, j, k);
  const double inv = 1.0 / (f.h * f.w);
  for (double& x : v) x *= inv;
  return v;
}

enum class Mode { kTrain, kEval };

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;  // running = 0.9*running + 0.1*batch

struct BnParams {
  Vec scale, shift, running_mean, running_var;

  static BnParams init(int d) {
    BnParams b;
    b.scale.assign(d, 1.0);
    b.shift.assign(d, 0.0);
    b.running_mean.assign(d, 0.0);
    b.running_var.assign(d, 1.0);
    return b;
  }
};

// Standardization head shared by both branches. The classifier is present
// only on the camera-specific head (n_classes == 0 disables it).
struct HeadParams {
  BnParams bn;
  Mat fc_w;  // d x n_classes
  Vec fc_b;

  static HeadParams init(int d, int n_classes, Rng& rng) {
    HeadParams h;
    h.bn = BnParams::init(d);
    if (n_classes > 0) {
      h.fc_w = Mat(d, n_classes);
      std::normal_distribution<double> g(0.0, 1.0);
      for (double& x : h.fc_w.a) x = g(rng) / std::sqrt(double(d));
      h.fc_b.assign(n_classes, 0.0);
    }
    return h;
  }
};

struct HeadGrads {
  Vec scale, shift;
  Mat fc_w;
  Vec fc_b;

  static HeadGrads zeros_like(const HeadParams& h) {
    HeadGrads g;
    g.scale.assign(h.bn.scale.size(), 0.0);
    g.shift.assign(h.bn.shift.size(), 0.0);
    g.fc_w = Mat(h.fc_w.rows, h.fc_w.cols);
    g.fc_b.assign(h.fc_b.size(), 0.0);
    return g;
  }
};

struct HeadCache {
  Mode mode = Mode::kTrain;
  bool l2_normalize = false;
  Vec mean, inv_std;            // statistics used by this pass
  std::vector<Vec> xhat;        // standardized inputs
  std::vector<Vec> out;         // final outputs (post scale/shift, post-normalize if enabled)
  Vec out_norms;                // |y| per sample when l2_normalize
};

// Pool-and-standardize head. Train mode standardizes with batch statistics
// (biased variance) and updates the running averages; eval mode uses the
// running statistics. The camera-agnostic branch additionally L2-normalizes.
inline std::vector<Vec> head_forward(const std::vector<Vec>& pooled, HeadParams& head, Mode mode,
                                     bool l2_normalize, HeadCache* cache = nullptr) {
  const size_t b = pooled.size();
  if (b == 0) throw UsageError("head_forward: empty batch");
  const size_t d = head.bn.scale.size();
  for (const Vec& x : pooled)
    if (x.size() != d) throw ShapeError("head_forward: input dim mismatch");
  if (mode == Mode::kTrain && b < 2)
    throw UsageError("head_forward: train mode needs batch >= 2 for batch statistics");

  Vec mean(d, 0.0), var(d, 0.0);
  if (mode == Mode::kTrain) {
    for (const Vec& x : pooled) axpy(1.0, x, mean);
    for (double& m : mean) m /= double(b);
    for (const Vec& x : pooled)
      for (size_t k = 0; k < d; ++k) {
        const double dk = x[k] - mean[k];
        var[k] += dk * dk;
      }
    for (double& v : var) v /= double(b);
    for (size_t k = 0; k < d; ++k) {
      head.bn.running_mean[k] = kBnMomentum * head.bn.running_mean[k] + (1.0 - kBnMomentum) * mean[k];
      head.bn.running_var[k] = kBnMomentum * head.bn.running_var[k] + (1.0 - kBnMomentum) * var[k];
    }
  } else {
    mean = head.bn.running_mean;
    var = head.bn.running_var;
  }

  Vec inv_std(d);
  for (size_t k = 0; k < d; ++k) inv_std[k] = 1.0 / std::sqrt(var[k] + kBnEps);

  std::vector<Vec> xhat(b, Vec(d)), out(b, Vec(d));
  Vec norms(b, 0.0);
  for (size_t i = 0; i < b; ++i) {
    for (size_t k = 0; k < d; ++k) {
      xhat[i][k] = (pooled[i][k] - mean[k]) * inv_std[k];
      out[i][k] = head.bn.scale[k] * xhat[i][k] + head.bn.shift[k];
    }
    if (l2_normalize) {
      norms[i] = norm2(out[i]);
      if (!(norms[i] > 1e-12)) throw NumericError("head_forward: zero-norm embedding");
      for (double& x : out[i]) x /= norms[i];
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->l2_normalize = l2_normalize;
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->xhat = std::move(xhat);
    cache->out = out;
    cache->out_norms = std::move(norms);
  }
  return out;
}

// Pulls gradients on the head outputs back to the pooled inputs; accumulates
// scale/shift gradients. Train mode accounts for the batch statistics.
inline std::vector<Vec> head_backward(const HeadParams& head, const HeadCache& cache,
                                      const std::vector<Vec>& g_out, HeadGrads& grads) {
  const size_t b = g_out.size();
  if (cache.xhat.size() != b) throw UsageError("head_backward: cache/batch size mismatch");
  const size_t d = head.bn.scale.size();

  // Undo the L2 normalization: g_y = (g_f - (g_f . f) f) / |y|.
  std::vector<Vec> g_y(b, Vec(d));
  for (size_t i = 0; i < b; ++i) {
    if (cache.l2_normalize) {
      const Vec& f = cache.out[i];
      const double gf = dot(g_out[i], f);
      for (size_t k = 0; k < d; ++k) g_y[i][k] = (g_out[i][k] - gf * f[k]) / cache.out_norms[i];
    } else {
      g_y[i] = g_out[i];
    }
  }

  std::vector<Vec> g_xhat(b, Vec(d));
  for (size_t i = 0; i < b; ++i)
    for (size_t k = 0; k < d; ++k) {
      grads.scale[k] += g_y[i][k] * cache.xhat[i][k];
      grads.shift[k] += g_y[i][k];
      g_xhat[i][k] = g_y[i][k] * head.bn.scale[k];
    }

  std::vector<Vec> g_x(b, Vec(d));
  if (cache.mode == Mode::kTrain) {
    Vec mean_g(d, 0.0), mean_gx(d, 0.0);
    for (size_t i = 0; i < b; ++i)
      for (size_t k = 0; k < d; ++k) {
        mean_g[k] += g_xhat[i][k];
        mean_gx[k] += g_xhat[i][k] * cache.xhat[i][k];
      }
    for (size_t k = 0; k < d; ++k) {
      mean_g[k] /= double(b);
      mean_gx[k] /= double(b);
    }
    for (size_t i = 0; i < b; ++i)
      for (size_t k = 0; k < d; ++k)
        g_x[i][k] = cache.inv_std[k] * (g_xhat[i][k] - mean_g[k] - cache.xhat[i][k] * mean_gx[k]);
  } else {
    for (size_t i = 0; i < b; ++i)
      for (size_t k = 0; k < d; ++k) g_x[i][k] = g_xhat[i][k] * cache.inv_std[k];
  }
  return g_x;
}

struct SepLossResult {
  double loss = 0.0;
  std::vector<Vec> g_embeddings;  // d/d f_i^sp, per sample
};

// Mean cross-entropy of the camera classifier on the specific-branch
// embeddings. Accumulates classifier gradients into grads.
inline SepLossResult sep_loss(const std::vector<Vec>& f_sp, const std::vector<int>& cam_labels,
                              const HeadParams& head, HeadGrads& grads) {
  const size_t b = f_sp.size();
  if (b == 0) throw UsageError("sep_loss: empty batch");
  if (cam_labels.size() != b) throw ShapeError("sep_loss: label count mismatch");
  const int d = head.fc_w.rows, n_cams = head.fc_w.cols;
  if (n_cams == 0) throw UsageError("sep_loss: head has no classifier");

  SepLossResult res;
  res.g_embeddings.assign(b, Vec(size_t(d), 0.0));
  for (size_t i = 0; i < b; ++i) {
    if (cam_labels[i] < 0 || cam_labels[i] >= n_cams) throw ShapeError("sep_loss: camera label out of range");
    Vec logits(n_cams);
    for (int j = 0; j < n_cams; ++j) {
      double acc = head.fc_b[j];
      for (int k = 0; k < d; ++k) acc += head.fc_w(k, j) * f_sp[i][k];
      logits[j] = acc;
    }
    Vec p = softmax(logits);
    res.loss += -std::log(std::max(p[cam_labels[i]], 1e-300));
    for (int j = 0; j < n_cams; ++j) {
      const double gl = (p[j] - (j == cam_labels[i] ? 1.0 : 0.0)) / double(b);
      grads.fc_b[j] += gl;
      for (int k = 0; k < d; ++k) {
        grads.fc_w(k, j) += f_sp[i][k] * gl;
        res.g_embeddings[i][k] += head.fc_w(k, j) * gl;
      }
    }
  }
  res.loss /= double(b);
  return res;
}

// Backward through mask application, pooling of both branches, and the
// attention module itself, for one sample. g_v_sp / g_v_ag are gradients on
// the pooled branch vectors. Returns the gradient on the input map;
// accumulates attention parameter gradients.
inline Tensor3 attention_branch_backward(const Tensor3& f, const AttentionParams& p,
                                         const AttnCache& cache, const Vec& g_v_sp,
                                         const Vec& g_v_ag, AttentionGrads& grads) {
  if (cache.chan_gate.empty()) throw UsageError("attention_branch_backward: missing forward cache");
  const int hw = f.h * f.w;
  const int m = p.c / p.r;
  const double inv_hw = 1.0 / hw;

  Tensor3 g_f(f.h, f.w, f.c);
  Vec g_chan(p.c, 0.0);
  Vec g_pos(hw, 0.0);
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j) {
      const int ij = i * f.w + j;
      for (int k = 0; k < f.c; ++k) {
        const double mask = cache.pos_gate[ij] * cache.chan_gate[k];
        const double g_sp = g_v_sp.empty() ? 0.0 : g_v_sp[k] * inv_hw;
        const double g_ag = g_v_ag.empty() ? 0.0 : g_v_ag[k] * inv_hw;
        // d/dmask of (mask*F) and ((1-mask)*F) pull in opposite directions.
        const double g_mask = (g_sp - g_ag) * f.at(i, j, k);
        g_f.at(i, j, k) = g_sp * mask + g_ag * (1.0 - mask);
        g_chan[k] += g_mask * cache.pos_gate[ij];
        g_pos[ij] += g_mask * cache.chan_gate[k];
      }
    }

  // Channel path: sigmoid -> expand -> ReLU -> reduce -> GAP.
  Vec g_z(p.c);
  for (int k = 0; k < p.c; ++k)
    g_z[k] = g_chan[k] * cache.chan_gate[k] * (1.0 - cache.chan_gate[k]);
  Vec g_hidden(m, 0.0);
  for (int q = 0; q < m; ++q) {
    for (int k = 0; k < p.c; ++k) {
      grads.expand_w(q, k) += cache.hidden[q] * g_z[k];
      g_hidden[q] += p.expand_w(q, k) * g_z[k];
    }
  }
  for (int k = 0; k < p.c; ++k) grads.expand_b[k] += g_z[k];
  Vec g_s(p.c, 0.0);
  for (int q = 0; q < m; ++q) {
    const double g_pre = cache.pre_hidden[q] > 0.0 ? g_hidden[q] : 0.0;
    grads.reduce_b[q] += g_pre;
    for (int k = 0; k < p.c; ++k) {
      grads.reduce_w(k, q) += cache.squeezed[k] * g_pre;
      g_s[k] += p.reduce_w(k, q) * g_pre;
    }
  }
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j)
      for (int k = 0; k < f.c; ++k) g_f.at(i, j, k) += g_s[k] * inv_hw;

  // Spatial path: sigmoid -> affine -> channel mean.
  const double inv_c = 1.0 / f.c;
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j) {
      const int ij = i * f.w + j;
      const double g_q = g_pos[ij] * cache.pos_gate[ij] * (1.0 - cache.pos_gate[ij]);
      grads.spatial_w += g_q * cache.pos_mean[ij];
      grads.spatial_b += g_q;
      const double g_t = g_q * p.spatial_w;
      for (int k = 0; k < f.c; ++k) g_f.at(i, j, k) += g_t * inv_c;
    }
  return g_f;
}

}  // namespace ureid
