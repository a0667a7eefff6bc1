#include "specgeo/sweep.hpp"

#include <atomic>
#include <cstdlib>
#include <set>
#include <thread>

#include "specgeo/error.hpp"
#include "specgeo/io.hpp"

namespace specgeo::sweep {
namespace {

using nlohmann::ordered_json;

std::string_view mode_name(spectral::AblationMode m) {
  return m == spectral::AblationMode::retain_top ? "retain_top" : "remove_top";
}

SweepRecord process(const ManifestEntry& entry, const SweepOptions& opt) {
  SweepRecord rec;
  rec.label = entry.label;
  rec.path = entry.path.string();
  try {
    const std::string bytes = io::read_file(entry.path);
    rec.file_hash = io::fnv1a64_hex(bytes);
    spectral::FeatureMatrix f(io::decode_matrix(bytes));
    if (opt.center) f = spectral::center_features(f);
    const auto spec = spectral::covariance_spectrum(f, false);
    rec.metrics = spectral::compute_metrics(spec, opt.alpha_window);
    if (opt.ablation) {
      for (std::size_t k : opt.ablation->ks) {
        AblationResult ab;
        ab.k = k;
        const auto reduced = spectral::ablate_spectrum(f, k, opt.ablation->mode);
        const auto rs = spectral::covariance_spectrum(reduced, false);
        ab.retained_energy = spectral::retained_energy(spec, k);
        bool any = false;
        for (double v : rs.values) any = any || v > 0.0;
        if (any) ab.rankme = spectral::rankme(rs);
        rec.ablations.push_back(ab);
      }
    }
  } catch (const std::exception& e) {
    rec.metrics.reset();
    rec.ablations.clear();
    rec.error = e.what();
  }
  return rec;
}

ordered_json number_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

}  // namespace

Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("manifest: ") + e.what());
  }
  Manifest m;
  try {
    if (doc.contains("options")) {
      const auto& o = doc.at("options");
      m.options.center = o.value("center", true);
      if (o.contains("alpha_window") && !o.at("alpha_window").is_null()) {
        const auto& w = o.at("alpha_window");
        m.options.alpha_window = spectral::IndexWindow{w.at(0).get<std::size_t>(), w.at(1).get<std::size_t>()};
      }
      if (o.contains("ablation") && !o.at("ablation").is_null()) {
        const auto& a = o.at("ablation");
        AblationSpec spec;
        const auto mode = a.at("mode").get<std::string>();
        if (mode == "retain_top") spec.mode = spectral::AblationMode::retain_top;
        else if (mode == "remove_top") spec.mode = spectral::AblationMode::remove_top;
        else fail(Errc::parse_failure, "manifest: unknown ablation mode '" + mode + "'");
        spec.ks = a.at("k").get<std::vector<std::size_t>>();
        m.options.ablation = std::move(spec);
      }
    }
    std::set<std::string> seen;
    for (const auto& e : doc.at("entries")) {
      ManifestEntry entry{e.at("label").get<std::string>(), e.at("path").get<std::string>()};
      if (!seen.insert(entry.label).second) fail(Errc::invalid_argument, "duplicate label '" + entry.label + "'");
      if (entry.path.is_relative()) entry.path = base_dir / entry.path;
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_failure, std::string("manifest: ") + e.what());
  }
  if (m.entries.empty()) fail(Errc::invalid_argument, "manifest has no entries");
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_file(path), path.parent_path());
}

bool SweepReport::ok() const {
  for (const auto& r : records)
    if (!r.ok()) return false;
  return true;
}

std::size_t threads_from_env() {
  const char* raw = std::getenv("SPECGEO_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 0) fail(Errc::invalid_argument, "SPECGEO_THREADS must be a nonnegative integer");
  return static_cast<std::size_t>(v);
}

SweepReport run_sweep(const Manifest& manifest, std::size_t threads) {
  if (manifest.entries.empty()) fail(Errc::invalid_argument, "manifest has no entries");
  SweepReport report;
  report.version = SPECGEO_VERSION;
  if (manifest.options.ablation) report.ablation_mode = manifest.options.ablation->mode;
  report.records.resize(manifest.entries.size());

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, manifest.entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.entries.size(); i = next++)
      report.records[i] = process(manifest.entries[i], manifest.options);
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  return report;
}

nlohmann::ordered_json report_json(const SweepReport& report) {
  ordered_json out;
  out["toolkit"] = "specgeo";
  out["version"] = report.version;
  if (report.ablation_mode) out["ablation_mode"] = mode_name(*report.ablation_mode);
  ordered_json records = ordered_json::array();
  for (const auto& r : report.records) {
    ordered_json j;
    j["label"] = r.label;
    j["path"] = r.path;
    j["file_hash"] = r.file_hash.empty() ? ordered_json(nullptr) : ordered_json(r.file_hash);
    if (r.ok()) {
      const auto& m = *r.metrics;
      j["rankme"] = number_or_null(m.rankme);
      j["alpha_req"] = number_or_null(m.alpha_req);
      j["fit_window"] = {m.fit_window.first, m.fit_window.second};
      j["fit_r2"] = number_or_null(m.fit_r2);
      j["m"] = m.m;
      j["d"] = m.d;
      if (report.ablation_mode) {
        ordered_json abl = ordered_json::array();
        for (const auto& a : r.ablations) {
          ordered_json aj;
          aj["k"] = a.k;
          aj["retained_energy"] = number_or_null(a.retained_energy);
          aj["rankme"] = a.rankme ? number_or_null(*a.rankme) : ordered_json(nullptr);
          abl.push_back(std::move(aj));
        }
        j["ablation"] = std::move(abl);
      }
    } else {
      j["error"] = r.error;
    }
    records.push_back(std::move(j));
  }
  out["records"] = std::move(records);
  return out;
}

std::string report_csv(const SweepReport& report) {
  std::string out = "label,rankme,alpha_req,fit_first,fit_last,fit_r2,m,d,file_hash,error\n";
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  };
  for (const auto& r : report.records) {
    out += quote(r.label) + ',';
    if (r.ok()) {
      const auto& m = *r.metrics;
      out += io::format_double(m.rankme) + ',' + io::format_double(m.alpha_req) + ',' +
             std::to_string(m.fit_window.first) + ',' + std::to_string(m.fit_window.second) + ',' +
             io::format_double(m.fit_r2) + ',' + std::to_string(m.m) + ',' + std::to_string(m.d) + ',' +
             r.file_hash + ",\n";
    } else {
      out += ",,,,,,," + r.file_hash + ',' + quote(r.error) + '\n';
    }
  }
  return out;
}

}  // namespace specgeo::sweep
