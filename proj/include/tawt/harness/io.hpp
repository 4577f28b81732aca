// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tawt/dataset.hpp"
#include "tawt/harness/config.hpp"
#include "tawt/numerics.hpp"
#include "tawt/training.hpp"

namespace tawt::harness {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_file(p))); }

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
}

/// Writes to a sibling temp file, then renames over the target.
inline void atomic_write(const fs::path& p, std::string_view content) {
  static std::atomic<std::uint64_t> counter{0};
  ensure_dir(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  const fs::path tmp = p.string() + ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + tmp.string() + "'");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot rename onto '" + p.string() + "': " + ec.message());
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Strips characters that would break a CSV cell.
inline std::string csv_cell(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = c == ',' ? ';' : ' ';
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("csv: missing column '" + name + "'");
  }
};

inline CsvTable read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: empty file '" + p.string() + "'");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size()) throw IoError("csv: ragged row in '" + p.string() + "'");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string join_flips(const std::vector<double>& flips) {
  std::string s;
  for (std::size_t i = 0; i < flips.size(); ++i) s += (i ? ";" : "") + format_double(flips[i]);
  return s;
}

inline json run_record_to_json(const RunRecord& r) {
  json j;
  j["config"] = train_to_json(r.config);
  j["weight_task_ids"] = r.weight_task_ids;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json losses = json::array();
    for (const auto& [id, l] : e.task_losses) losses.push_back({{"task", id}, {"loss", l}});
    epochs.push_back({{"epoch", e.epoch},
                      {"phase", e.phase},
                      {"task_losses", losses},
                      {"target_acc", e.target_acc},
                      {"target_loss", e.target_loss}});
  }
  j["epochs"] = epochs;
  json weights = json::array();
  for (const auto& w : r.weights) weights.push_back({{"step", w.step}, {"weights", w.weights}});
  j["weights"] = weights;
  j["weight_floor_active"] = r.weight_floor_active;
  j["floor_hits"] = r.floor_hits;
  j["final_target_acc"] = r.final_target_acc;
  j["final_target_loss"] = r.final_target_loss;
  j["wall_seconds"] = r.wall_seconds;
  j["checkpoint"] = r.checkpoint;
  return j;
}

inline std::string metrics_csv(const RunRecord& r) {
  std::string s = "epoch,phase,task,loss,target_acc,target_loss\n";
  for (const auto& e : r.epochs)
    for (const auto& [id, l] : e.task_losses)
      s += std::to_string(e.epoch) + "," + e.phase + "," + std::to_string(id) + "," + format_double(l) + "," +
           format_double(e.target_acc) + "," + format_double(e.target_loss) + "\n";
  return s;
}

inline std::string weights_csv(const RunRecord& r) {
  std::size_t T = 0;
  for (const auto& w : r.weights) T = std::max(T, w.weights.size());
  std::string s = "step";
  for (std::size_t t = 0; t < T; ++t) s += ",w_" + std::to_string(t);
  s += "\n";
  for (const auto& w : r.weights) {
    s += std::to_string(w.step);
    for (double v : w.weights) s += "," + format_double(v);
    s += "\n";
  }
  return s;
}

/// Job count: explicit flag, else TAWT_LAB_JOBS, else 1.
inline unsigned resolve_jobs(int flag) {
  if (flag > 0) return static_cast<unsigned>(flag);
  if (const char* env = std::getenv("TAWT_LAB_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw ConfigError("TAWT_LAB_JOBS must be a positive integer, got '" + std::string(env) + "'");
  }
  return 1;
}

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. fn must not throw.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace tawt::harness
