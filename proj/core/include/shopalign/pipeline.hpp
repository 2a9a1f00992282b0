#pragma once

#include <map>
#include <string>
#include <vector>

#include "shopalign/common.hpp"

namespace shopalign::pipeline {

/// Flat key = value run configuration. Lines starting with '#' and blank
/// lines are ignored.
class Manifest {
 public:
  static Manifest parse_file(const std::string& path);
  static Manifest parse_string(const std::string& text);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Stable hash of the normalized contents; a changed manifest invalidates
  /// recorded stage results.
  std::string fingerprint() const;

 private:
  std::map<std::string, std::string> entries_;
};

const std::vector<std::string>& stage_names();  // synth corpus embed align eval typeahead

struct StageResult {
  std::string name;
  bool skipped = false;
  std::vector<std::string> outputs;  // paths relative to out_dir
};

struct PipelineResult {
  std::vector<StageResult> stages;
  std::string report;  // rendered comparison tables
};

/// Runs the requested stages (all when empty) in dependency order. Stages
/// whose recorded inputs, config and outputs are unchanged are skipped.
PipelineResult run_pipeline(const Manifest& manifest, const std::string& out_dir,
                            const std::vector<std::string>& only_stages = {});

/// Renders the comparison tables from whatever summaries exist in out_dir;
/// missing metrics appear as "n/a".
std::string render_report(const std::string& out_dir);

}  // namespace shopalign::pipeline
