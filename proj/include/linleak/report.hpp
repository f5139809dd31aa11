#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "linleak/attack.hpp"
#include "linleak/config.hpp"

namespace linleak {

using ordered_json = nlohmann::ordered_json;

inline ordered_json config_json(const Config& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

/// Round report: config echo first, then scalar metrics, then per-bin
/// and per-match detail. Key order is fixed so equal runs produce equal
/// bytes; wall_time_seconds is zeroed when the caller wants
/// byte-reproducible output, since it is the only field that honest
/// re-runs cannot repeat.
inline ordered_json attack_report(const Config& cfg, const MatchReport& rep,
                                  const Reconstruction& rec, std::size_t m,
                                  std::size_t k, std::uint64_t seed, bool zero_timing) {
  ordered_json j;
  j["config"] = config_json(cfg);
  j["m"] = m;
  j["k"] = k;
  j["seed"] = seed;
  j["rate"] = rep.rate;
  j["mean_psnr_success"] = rep.mean_psnr_success;
  j["threshold_db"] = rep.threshold_db;
  j["recovered_bins"] = rec.bins.size();
  j["wall_time_seconds"] = zero_timing ? 0.0 : rec.seconds;

  ordered_json statuses = ordered_json::array();
  for (const auto& b : rec.details.bins)
    statuses.push_back(b.recovered ? "recovered" : "empty");
  j["per_bin_status"] = statuses;

  ordered_json matches = ordered_json::array();
  for (const auto& mt : rep.matches) {
    ordered_json e;
    e["original"] = mt.original;
    e["bin"] = mt.bin;
    e["psnr_db"] = mt.psnr_db;
    matches.push_back(e);
  }
  j["matches"] = matches;
  j["per_sample_psnr"] = rep.per_sample_psnr;
  return j;
}

inline ordered_json experiment_report(const Config& cfg, const ExperimentTable& table,
                                      bool zero_timing) {
  ordered_json j;
  j["config"] = config_json(cfg);

  ordered_json rows = ordered_json::array();
  for (const auto& r : table.rows) {
    ordered_json e;
    e["m"] = r.m;
    e["trial"] = r.trial;
    e["rate"] = r.rate;
    e["mean_psnr_success"] = r.mean_psnr_success;
    e["seconds"] = zero_timing ? 0.0 : r.seconds;
    e["recovered_bins"] = r.recovered_bins;
    e["singly_occupied"] = r.singly_occupied;
    rows.push_back(e);
  }
  j["rows"] = rows;

  ordered_json summary = ordered_json::array();
  for (const auto& s : table.summary) {
    ordered_json e;
    e["m"] = s.m;
    e["mean_rate"] = s.mean_rate;
    e["std_rate"] = s.std_rate;
    e["mean_psnr_success"] = s.mean_psnr_success;
    e["mean_seconds"] = zero_timing ? 0.0 : s.mean_seconds;
    summary.push_back(e);
  }
  j["summary"] = summary;
  return j;
}

inline void write_json(const std::string& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_json: cannot open '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write_json: write failed for '" + path + "'");
}

inline ordered_json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_json: cannot open '" + path + "'");
  return ordered_json::parse(in);
}

}  // namespace linleak
