// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tawt/numerics.hpp"

namespace tawt {

/// Feature rows plus integer class labels for one task.
///
/// Features are stored row-major in a flat buffer so that an empty dataset
/// (n = 0) is representable while keeping the input dimension.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::size_t dim, std::size_t n_classes, std::uint64_t task_id = 0)
      : dim_(dim), n_classes_(n_classes), task_id_(task_id) {
    if (dim == 0 || n_classes == 0) throw DimensionError("Dataset: dim and classes must be positive");
  }

  Dataset(std::size_t dim, std::size_t n_classes, std::vector<double> features,
          std::vector<std::size_t> labels, std::uint64_t task_id = 0)
      : Dataset(dim, n_classes, task_id) {
    if (features.size() != labels.size() * dim) throw DimensionError("Dataset: rows/labels mismatch");
    require_finite(features, "Dataset");
    for (std::size_t y : labels)
      if (y >= n_classes) throw IndexError("Dataset: label out of range");
    features_ = std::move(features);
    labels_ = std::move(labels);
  }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::uint64_t task_id() const noexcept { return task_id_; }
  void set_task_id(std::uint64_t id) noexcept { task_id_ = id; }

  std::span<const double> x(std::size_t i) const noexcept {
    return {features_.data() + i * dim_, dim_};
  }
  std::size_t y(std::size_t i) const noexcept { return labels_[i]; }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const std::size_t> labels() const noexcept { return labels_; }
  std::vector<std::size_t>& mutable_labels() noexcept { return labels_; }

  void push_back(std::span<const double> x, std::size_t y) {
    if (x.size() != dim_) throw DimensionError("Dataset::push_back: feature dim mismatch");
    if (y >= n_classes_) throw IndexError("Dataset::push_back: label out of range");
    require_finite(x, "Dataset::push_back");
    features_.insert(features_.end(), x.begin(), x.end());
    labels_.push_back(y);
  }

  /// Rows at the given indices, in that order.
  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out(dim_, n_classes_, task_id_);
    out.features_.reserve(rows.size() * dim_);
    out.labels_.reserve(rows.size());
    for (std::size_t r : rows) {
      if (r >= size()) throw IndexError("Dataset::subset: row out of range");
      auto xr = x(r);
      out.features_.insert(out.features_.end(), xr.begin(), xr.end());
      out.labels_.push_back(labels_[r]);
    }
    return out;
  }

  /// First n rows.
  Dataset head(std::size_t n) const {
    if (n > size()) throw IndexError("Dataset::head: n exceeds size");
    Dataset out(dim_, n_classes_, task_id_);
    out.features_.assign(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(n * dim_));
    out.labels_.assign(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::size_t n_classes_ = 0;
  std::uint64_t task_id_ = 0;
  std::vector<double> features_;
  std::vector<std::size_t> labels_;
};

// ---------------------------------------------------------------------------
// CSV layout: first line "n,d,k"; then n rows of d features and the label.
// Floats use 17 significant digits so that a round trip is exact.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  os << data.size() << ',' << data.dim() << ',' << data.n_classes() << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.x(i)) os << format_double(v) << ',';
    os << data.y(i) << '\n';
  }
}

inline void save_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_dataset_csv(os, data);
  if (!os) throw IoError("write failed: " + path);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, const std::string& where) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw IoError(where + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline Dataset read_dataset_csv(std::istream& is, std::uint64_t task_id = 0) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("dataset csv: missing header");
  auto head = detail::split_commas(line);
  if (head.size() != 3) throw IoError("dataset csv: header must be n,d,k");
  const auto n = detail::parse_number<std::size_t>(head[0], "dataset header");
  const auto d = detail::parse_number<std::size_t>(head[1], "dataset header");
  const auto k = detail::parse_number<std::size_t>(head[2], "dataset header");
  std::vector<double> features;
  std::vector<std::size_t> labels;
  features.reserve(n * d);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw IoError("dataset csv: truncated at row " + std::to_string(i));
    auto cells = detail::split_commas(line);
    if (cells.size() != d + 1) throw IoError("dataset csv: wrong column count at row " + std::to_string(i));
    const std::string where = "dataset row " + std::to_string(i);
    for (std::size_t j = 0; j < d; ++j) features.push_back(detail::parse_number<double>(cells[j], where));
    labels.push_back(detail::parse_number<std::size_t>(cells[d], where));
  }
  return Dataset(d, k, std::move(features), std::move(labels), task_id);
}

inline Dataset load_dataset_csv(const std::string& path, std::uint64_t task_id = 0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_dataset_csv(is, task_id);
}

}  // namespace tawt
