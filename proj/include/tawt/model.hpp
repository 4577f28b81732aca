// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Shared representation (one ReLU layer) plus one linear head per task,
// with a hand-derived backward pass.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "tawt/dataset.hpp"
#include "tawt/numerics.hpp"
#include "tawt/optimizer.hpp"

namespace tawt {

/// Linear classifier f_t over the latent space. params = [W2 (k x h) | b2 (k)].
struct Head {
  std::uint64_t task_id = 0;
  std::size_t n_classes = 0;
  Vector params;

  friend bool operator==(const Head&, const Head&) = default;
};

/// phi = relu(W1 x + b1) with rep = [W1 (h x d) | b1 (h)], plus heads.
struct SharedModel {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  Vector rep;
  std::vector<Head> heads;

  std::size_t rep_param_count() const noexcept { return hidden * input_dim + hidden; }
  std::size_t head_param_count(std::size_t k) const noexcept { return k * hidden + k; }

  std::size_t head_index(std::uint64_t task_id) const {
    for (std::size_t i = 0; i < heads.size(); ++i)
      if (heads[i].task_id == task_id) return i;
    throw LookupError("SharedModel: unknown task id " + std::to_string(task_id));
  }
  bool has_head(std::uint64_t task_id) const noexcept {
    for (const auto& h : heads)
      if (h.task_id == task_id) return true;
    return false;
  }
  Head& head(std::uint64_t task_id) { return heads[head_index(task_id)]; }
  const Head& head(std::uint64_t task_id) const { return heads[head_index(task_id)]; }

  friend bool operator==(const SharedModel&, const SharedModel&) = default;
};

struct HeadSpec {
  std::uint64_t task_id;
  std::size_t n_classes;
};

namespace detail {

inline void glorot_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : w) x = rng.uniform(-limit, limit);
}

}  // namespace detail

inline Head make_head(std::uint64_t task_id, std::size_t n_classes, std::size_t hidden,
                      std::uint64_t seed) {
  if (n_classes == 0) throw DimensionError("make_head: n_classes must be positive");
  Head h{task_id, n_classes, Vector(n_classes * hidden + n_classes, 0.0)};
  Rng rng(hash64(seed, tag64("head"), task_id));
  detail::glorot_fill(std::span(h.params).first(n_classes * hidden), hidden, n_classes, rng);
  return h;
}

/// Glorot-uniform weights, zero biases. Each head draws from a stream keyed by
/// its task id, so adding or removing a task leaves the others untouched.
inline SharedModel make_model(std::size_t input_dim, std::size_t hidden,
                              std::span<const HeadSpec> heads, std::uint64_t seed) {
  if (input_dim == 0 || hidden == 0) throw DimensionError("make_model: sizes must be positive");
  SharedModel m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  m.rep.assign(m.rep_param_count(), 0.0);
  Rng rng(hash64(seed, tag64("rep")));
  detail::glorot_fill(std::span(m.rep).first(hidden * input_dim), input_dim, hidden, rng);
  for (const auto& spec : heads) {
    if (m.has_head(spec.task_id)) throw ArgumentError("make_model: duplicate task id");
    m.heads.push_back(make_head(spec.task_id, spec.n_classes, hidden, seed));
  }
  return m;
}

struct GradSnapshot {
  std::uint64_t task_id = 0;
  Vector rep_grad;
  Vector head_grad;
};

/// Reusable per-example buffers so the hot loop does not allocate.
struct Workspace {
  Vector z, a, logits, dl, da;
  void resize(std::size_t hidden, std::size_t k) {
    z.resize(hidden);
    a.resize(hidden);
    da.resize(hidden);
    logits.resize(k);
    dl.resize(k);
  }
};

namespace detail {

inline void forward_into(const SharedModel& m, const Head& h, std::span<const double> x,
                         Workspace& ws) {
  const std::size_t d = m.input_dim, hid = m.hidden, k = h.n_classes;
  const double* W1 = m.rep.data();
  const double* b1 = W1 + hid * d;
  for (std::size_t j = 0; j < hid; ++j) {
    const double* w = W1 + j * d;
    double s = b1[j];
    for (std::size_t i = 0; i < d; ++i) s += w[i] * x[i];
    ws.z[j] = s;
    ws.a[j] = s > 0.0 ? s : 0.0;
  }
  const double* W2 = h.params.data();
  const double* b2 = W2 + k * hid;
  for (std::size_t c = 0; c < k; ++c) {
    const double* w = W2 + c * hid;
    double s = b2[c];
    for (std::size_t j = 0; j < hid; ++j) s += w[j] * ws.a[j];
    ws.logits[c] = s;
  }
}

inline void check_batch(const SharedModel& m, const Head& h, const Dataset& data) {
  if (data.empty()) throw EmptyBatchError("empty batch");
  if (data.dim() != m.input_dim) throw DimensionError("feature dim does not match model");
  if (data.n_classes() > h.n_classes) throw DimensionError("dataset has more classes than head");
}

}  // namespace detail

inline Vector forward(const SharedModel& m, std::uint64_t task_id, std::span<const double> x) {
  const Head& h = m.head(task_id);
  if (x.size() != m.input_dim) throw DimensionError("forward: input length mismatch");
  Workspace ws;
  ws.resize(m.hidden, h.n_classes);
  detail::forward_into(m, h, x, ws);
  return ws.logits;
}

/// Core kernel: accumulates d/dparams of sum_i coef[i] * loss_i over the given
/// rows into rep_grad / head_grad (either may be empty to skip it) and returns
/// sum_i coef[i] * loss_i.
inline double accumulate_gradient(const SharedModel& m, const Head& h, const Dataset& data,
                                  std::span<const std::size_t> rows, std::span<const double> coef,
                                  std::span<double> rep_grad, std::span<double> head_grad,
                                  Workspace& ws) {
  const std::size_t d = m.input_dim, hid = m.hidden, k = h.n_classes;
  ws.resize(hid, k);
  const bool want_rep = !rep_grad.empty();
  const bool want_head = !head_grad.empty();
  const double* W2 = h.params.data();
  double* gW1 = want_rep ? rep_grad.data() : nullptr;
  double* gb1 = want_rep ? gW1 + hid * d : nullptr;
  double* gW2 = want_head ? head_grad.data() : nullptr;
  double* gb2 = want_head ? gW2 + k * hid : nullptr;
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    const double w = coef[r];
    auto x = data.x(i);
    const std::size_t y = data.y(i);
    detail::forward_into(m, h, x, ws);
    softmax_inplace(ws.logits);
    const double py = ws.logits[y];
    total += w * log_loss(py);
    if (w == 0.0) continue;
    // d/dlogits of -log(p_y + eps) is (p_y / (p_y + eps)) * (p - e_y).
    const double scale = w * py / (py + kLogEpsilon);
    for (std::size_t c = 0; c < k; ++c) ws.dl[c] = scale * (ws.logits[c] - (c == y ? 1.0 : 0.0));
    if (want_head) {
      for (std::size_t c = 0; c < k; ++c) {
        const double g = ws.dl[c];
        double* row = gW2 + c * hid;
        for (std::size_t j = 0; j < hid; ++j) row[j] += g * ws.a[j];
        gb2[c] += g;
      }
    }
    if (want_rep) {
      std::fill(ws.da.begin(), ws.da.end(), 0.0);
      for (std::size_t c = 0; c < k; ++c) {
        const double g = ws.dl[c];
        const double* row = W2 + c * hid;
        for (std::size_t j = 0; j < hid; ++j) ws.da[j] += g * row[j];
      }
      for (std::size_t j = 0; j < hid; ++j) {
        if (ws.z[j] <= 0.0) continue;  // relu'(0) = 0
        const double g = ws.da[j];
        double* row = gW1 + j * d;
        for (std::size_t t = 0; t < d; ++t) row[t] += g * x[t];
        gb1[j] += g;
      }
    }
  }
  return total;
}

namespace detail {

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

}  // namespace detail

/// Mean cross-entropy of the named head over all rows.
inline double task_loss(const SharedModel& m, std::uint64_t task_id, const Dataset& data) {
  const Head& h = m.head(task_id);
  detail::check_batch(m, h, data);
  Workspace ws;
  ws.resize(m.hidden, h.n_classes);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward_into(m, h, data.x(i), ws);
    softmax_inplace(ws.logits);
    total += log_loss(ws.logits[data.y(i)]);
  }
  return total / static_cast<double>(data.size());
}

/// Exact gradient of task_loss over the batch.
inline GradSnapshot backward(const SharedModel& m, std::uint64_t task_id, const Dataset& batch) {
  const Head& h = m.head(task_id);
  detail::check_batch(m, h, batch);
  GradSnapshot g{task_id, Vector(m.rep_param_count(), 0.0), Vector(h.params.size(), 0.0)};
  const auto rows = detail::all_rows(batch.size());
  const Vector coef(rows.size(), 1.0 / static_cast<double>(rows.size()));
  Workspace ws;
  accumulate_gradient(m, h, batch, rows, coef, g.rep_grad, g.head_grad, ws);
  return g;
}

/// Representation gradient of the mean loss over `rows`.
inline Vector rep_gradient_rows(const SharedModel& m, std::uint64_t task_id, const Dataset& data,
                                std::span<const std::size_t> rows) {
  const Head& h = m.head(task_id);
  detail::check_batch(m, h, data);
  if (rows.empty()) throw EmptyBatchError("rep_gradient_rows: no rows");
  Vector grad(m.rep_param_count(), 0.0);
  const Vector coef(rows.size(), 1.0 / static_cast<double>(rows.size()));
  Workspace ws;
  accumulate_gradient(m, h, data, rows, coef, grad, {}, ws);
  return grad;
}

inline constexpr std::size_t kDefaultGradientSubset = 64;

/// Representation gradient over a uniformly drawn subset (the whole set,
/// in order, when subset_size >= n; no draws are consumed in that case).
inline Vector rep_gradient_flat(const SharedModel& m, std::uint64_t task_id, const Dataset& data,
                                std::size_t subset_size, Rng& rng) {
  if (subset_size == 0) throw ArgumentError("rep_gradient_flat: subset_size must be >= 1");
  if (data.empty()) throw EmptyBatchError("rep_gradient_flat: empty dataset");
  const auto rows = subset_size >= data.size()
                        ? detail::all_rows(data.size())
                        : rng.sample_without_replacement(data.size(), subset_size);
  return rep_gradient_rows(m, task_id, data, rows);
}

// ---------------------------------------------------------------------------
// Checkpoints. Little-endian layout:
//   "TAWTCKPT" | u32 version | u64 input_dim | u64 hidden | u64 n_heads
//   | n_heads x (u64 task_id, u64 n_classes) | rep doubles | head doubles...

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("checkpoint: truncated");
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const SharedModel& m) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  os.write("TAWTCKPT", 8);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint64_t>(os, m.input_dim);
  detail::put<std::uint64_t>(os, m.hidden);
  detail::put<std::uint64_t>(os, m.heads.size());
  for (const auto& h : m.heads) {
    detail::put<std::uint64_t>(os, h.task_id);
    detail::put<std::uint64_t>(os, h.n_classes);
  }
  os.write(reinterpret_cast<const char*>(m.rep.data()), static_cast<std::streamsize>(m.rep.size() * 8));
  for (const auto& h : m.heads)
    os.write(reinterpret_cast<const char*>(h.params.data()),
             static_cast<std::streamsize>(h.params.size() * 8));
}

inline SharedModel read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "TAWTCKPT", 8) != 0) throw IoError("checkpoint: bad magic");
  if (detail::get<std::uint32_t>(is) != kCheckpointVersion) throw IoError("checkpoint: unsupported version");
  SharedModel m;
  m.input_dim = detail::get<std::uint64_t>(is);
  m.hidden = detail::get<std::uint64_t>(is);
  const auto n_heads = detail::get<std::uint64_t>(is);
  if (m.input_dim == 0 || m.hidden == 0 || n_heads > (1u << 20)) throw IoError("checkpoint: bad dims");
  m.heads.resize(n_heads);
  for (auto& h : m.heads) {
    h.task_id = detail::get<std::uint64_t>(is);
    h.n_classes = detail::get<std::uint64_t>(is);
    h.params.resize(m.head_param_count(h.n_classes));
  }
  m.rep.resize(m.rep_param_count());
  is.read(reinterpret_cast<char*>(m.rep.data()), static_cast<std::streamsize>(m.rep.size() * 8));
  for (auto& h : m.heads)
    is.read(reinterpret_cast<char*>(h.params.data()), static_cast<std::streamsize>(h.params.size() * 8));
  if (!is) throw IoError("checkpoint: truncated parameters");
  return m;
}

inline void save_checkpoint(const std::string& path, const SharedModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_checkpoint(os, m);
  if (!os) throw IoError("write failed: " + path);
}

inline SharedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_checkpoint(is);
}

}  // namespace tawt
