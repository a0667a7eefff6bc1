#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "specgeo/spectral.hpp"

namespace specgeo::sweep {

struct AblationSpec {
  spectral::AblationMode mode = spectral::AblationMode::retain_top;
  std::vector<std::size_t> ks;
};

struct SweepOptions {
  bool center = true;
  std::optional<spectral::IndexWindow> alpha_window;
  std::optional<AblationSpec> ablation;
};

struct ManifestEntry {
  std::string label;
  std::filesystem::path path;
};

/// Ordered checkpoints to analyze. Labels must be unique.
struct Manifest {
  SweepOptions options;
  std::vector<ManifestEntry> entries;
};

/// JSON object {"options": {...}, "entries": [{"label", "path"}, ...]}.
/// Relative paths resolve against `base_dir`.
Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& path);

struct AblationResult {
  std::size_t k = 0;
  double retained_energy = 0.0;
  std::optional<double> rankme;  // absent when nothing is left
};

struct SweepRecord {
  std::string label;
  std::string path;
  std::string file_hash;  // fnv1a64 of the file bytes
  std::optional<spectral::SpectralMetrics> metrics;
  std::vector<AblationResult> ablations;
  std::string error;  // set when the entry failed
  bool ok() const { return metrics.has_value() && error.empty(); }
};

struct SweepReport {
  std::string version;
  std::optional<spectral::AblationMode> ablation_mode;
  std::vector<SweepRecord> records;  // manifest order
  bool ok() const;
};

/// Processes entries on up to `threads` workers (0 = hardware concurrency).
/// A failing entry is recorded and does not stop the others.
SweepReport run_sweep(const Manifest& manifest, std::size_t threads = 0);

/// Thread count from SPECGEO_THREADS (0 or unset = auto).
std::size_t threads_from_env();

nlohmann::ordered_json report_json(const SweepReport& report);
std::string report_csv(const SweepReport& report);

}  // namespace specgeo::sweep
