#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tcm/oracle.hpp"
#include "tcm/train.hpp"

namespace tcm {

// Flat key=value experiment configuration with dotted sections. Every key
// must be in the registry (typos are rejected); values are validated when
// the typed views are assembled. Canonical serialization is sorted, so the
// config hash is stable under key reordering.
class Config {
 public:
  static Config defaults();
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  std::string serialize() const;  // sorted key=value lines
  std::uint64_t hash() const;     // FNV-1a of the canonical serialization

  // Typed views. `stage` selects validation: stage 1 requires the
  // log-normal sampler, stage 2 the truncated log-Student-t.
  TrainerConfig trainer(int stage) const;
  Dataset build_dataset() const;
  NoiseSpec noise() const;
  std::vector<double> eval_t_grid() const;

 private:
  std::map<std::string, std::string> kv_;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string code_version;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> checkpoint_paths;
  std::map<std::string, double> final_metrics;
};

void save_manifest(const RunManifest& m, const std::string& path);

// Shortest round-trip decimal formatting (used by every CSV writer so that
// identical runs produce byte-identical files).
std::string format_double(double v);

void write_metric_log(const std::vector<LogRow>& rows, const std::string& path);

struct ReportRow {
  std::string ckpt;
  std::size_t iter = 0;
  double t = 0.0;
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

void write_report(const std::vector<ReportRow>& rows, const std::string& path);

// Point-set dump, "tcm-samples v1" header plus rows.
void write_samples(const std::vector<double>& points, std::size_t d, double sigma_data,
                   const std::string& path);

}  // namespace tcm
