#include "specgeo/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "specgeo/dynamics.hpp"
#include "specgeo/error.hpp"
#include "specgeo/eval.hpp"
#include "specgeo/io.hpp"
#include "specgeo/ngram.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/sweep.hpp"

namespace specgeo::cli {
namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

// Thresholds applied by `toy-verify`.
constexpr double kInitResidualTol = 1e-12;  // relative to ||f^T f||_F
constexpr double kDriftRatioTol = 100.0;
constexpr double kAlignmentTol = 1e-6;
constexpr double kRateTol = 0.05;
constexpr double kRateSigmaFloor = 1e-6;

void emit(std::ostream& out, const ordered_json& j, bool as_json) {
  if (as_json) {
    out << j.dump() << '\n';
    return;
  }
  for (const auto& [key, value] : j.items())
    out << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
}

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

spectral::FeatureMatrix load_features(const std::string& path, bool center) {
  spectral::FeatureMatrix f(io::read_matrix(path), !center);
  return center ? spectral::center_features(f) : f;
}

std::optional<spectral::IndexWindow> parse_window(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto sep = text.find_first_of(":,");
  if (sep == std::string::npos) fail(Errc::parse_failure, "window must look like FIRST:LAST");
  const auto a = io::parse_int_list(text.substr(0, sep));
  const auto b = io::parse_int_list(text.substr(sep + 1));
  if (a.size() != 1 || b.size() != 1 || a[0] < 1 || b[0] < a[0])
    fail(Errc::invalid_argument, "window must satisfy 1 <= FIRST <= LAST");
  return spectral::IndexWindow{static_cast<std::size_t>(a[0]), static_cast<std::size_t>(b[0])};
}

ordered_json phases_json(const dynamics::PhaseReport& p) {
  ordered_json j;
  j["window"] = p.window;
  j["tolerance"] = p.tolerance;
  j["warmup_end"] = p.warmup_end;
  j["peak"] = p.peak;
  j["warmup_rankme"] = num(p.warmup_value);
  j["peak_rankme"] = num(p.peak_value);
  j["final_rankme"] = num(p.final_value);
  j["drop_after_peak"] = num(p.drop_after_peak);
  j["max_drawdown"] = num(p.max_drawdown);
  j["prominent_maxima"] = p.prominent_maxima;
  j["interior_max"] = p.interior_max;
  j["compression_start"] = p.compression_start ? ordered_json(*p.compression_start) : ordered_json(nullptr);
  j["late_start"] = p.late_start;
  j["late_growth_abs"] = p.late_growth_abs;
  j["late_growth_log"] = p.late_growth_log;
  return j;
}

ordered_json theorem1_json(const dynamics::Theorem1Report& r) {
  ordered_json j;
  j["initial_residual"] = num(r.initial_residual);
  j["initial_relative_residual"] = num(r.initial_relative_residual);
  j["max_residual"] = num(r.max_residual);
  j["final_residual"] = num(r.final_residual);
  j["max_relative_residual"] = num(r.max_relative_residual);
  j["initial_alignment"] = num(r.initial_alignment);
  j["max_alignment"] = num(r.max_alignment);
  j["max_alignment_step"] = r.max_alignment_step;
  j["final_alignment"] = num(r.final_alignment);
  j["degenerate_steps"] = r.degenerate_steps;
  j["drift_constant"] = num(r.drift_constant);
  return j;
}

ordered_json theorem2_json(const dynamics::Theorem2Report& r) {
  ordered_json j;
  j["sigma_threshold"] = r.sigma_threshold;
  j["compared"] = r.compared;
  j["skipped"] = r.skipped;
  j["max_fd_vs_lemma_f"] = num(r.max_fd_vs_lemma_f);
  j["max_fd_vs_lemma_w"] = num(r.max_fd_vs_lemma_w);
  j["max_lemma_vs_formula_f"] = num(r.max_lemma_vs_formula_f);
  j["max_lemma_vs_formula_w"] = num(r.max_lemma_vs_formula_w);
  j["max_rate_collapse"] = num(r.max_rate_collapse);
  j["max_pointwise_fd_vs_lemma"] = num(r.max_pointwise_fd_vs_lemma);
  j["max_pointwise_lemma_vs_formula"] = num(r.max_pointwise_lemma_vs_formula);
  j["g_init"] = r.g_init;
  j["dominant_class_count"] = r.dominant_class_count;
  return j;
}

ordered_json primacy_json(const dynamics::PrimacyReport& r) {
  ordered_json j;
  j["margin_threshold"] = r.margin_threshold;
  ordered_json crossings = ordered_json::array();
  for (const auto& c : r.crossing_step) crossings.push_back(c ? ordered_json(*c) : ordered_json(nullptr));
  j["crossing_step"] = std::move(crossings);
  j["class_counts"] = r.class_counts;
  j["frequent_first"] = r.frequent_first;
  j["window_start"] = r.window_start;
  j["selection_correlation"] = num(r.selection_correlation);
  return j;
}

ordered_json toy_summary(const dynamics::TrajectoryRecord& traj) {
  ordered_json j;
  const auto& c = traj.config;
  j["config"] = {{"d_in", c.d_in},   {"d", c.d},
                 {"vocab", c.vocab}, {"class_counts", c.class_counts},
                 {"lr", c.lr},       {"steps", c.steps},
                 {"loss", dynamics::to_string(c.loss)}, {"seed", c.seed},
                 {"init_scale", c.init_scale}, {"relinearize_every", c.relinearize_every}};
  j["bottleneck"] = c.bottleneck();
  j["degenerate_init"] = traj.degenerate_init;
  j["init_balance_residual"] = num(traj.init_balance_residual);
  j["final_loss"] = num(traj.steps.back().loss);
  if (traj.steps.size() >= 3) j["phases"] = phases_json(dynamics::analyze_phases(traj));
  j["theorem1"] = theorem1_json(dynamics::check_theorem1(traj));
  j["theorem2"] = theorem2_json(dynamics::check_theorem2(traj));
  j["primacy"] = primacy_json(dynamics::primacy_selection_probe(traj));
  return j;
}

dynamics::ToyConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return io::parse_toy_config(io::read_file(path));
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Representation geometry toolkit", "specgeo"};
  app.set_version_flag("--version", SPECGEO_VERSION);
  app.require_subcommand(1);
  bool as_json = false;
  auto add_json = [&](CLI::App* sub) { sub->add_flag("--json", as_json, "machine-readable JSON on stdout"); };

  // spectrum / rankme / alphareq
  std::string matrix_path;
  bool no_center = false;
  bool want_vectors = false;
  std::string window_text;
  auto* spectrum = app.add_subcommand("spectrum", "covariance eigenvalues of a matrix file");
  spectrum->add_option("matrix", matrix_path, "SPECGEO1 matrix file")->required();
  spectrum->add_flag("--no-center", no_center, "treat the input as already centered");
  spectrum->add_flag("--vectors", want_vectors, "also print eigenvectors (columns)");
  add_json(spectrum);

  auto* rankme = app.add_subcommand("rankme", "entropy effective rank");
  rankme->add_option("matrix", matrix_path)->required();
  rankme->add_flag("--no-center", no_center);
  add_json(rankme);

  auto* alphareq = app.add_subcommand("alphareq", "power-law decay exponent of the eigenspectrum");
  alphareq->add_option("matrix", matrix_path)->required();
  alphareq->add_flag("--no-center", no_center);
  alphareq->add_option("--window", window_text, "1-based eigen-index range FIRST:LAST");
  add_json(alphareq);

  // ablate
  std::size_t ablate_k = 0;
  std::string ablate_mode = "retain_top";
  std::string out_path;
  bool write_f32 = false;
  auto* ablate = app.add_subcommand("ablate", "project onto (or away from) the top-k eigenvectors");
  ablate->add_option("matrix", matrix_path)->required();
  ablate->add_option("--k", ablate_k)->required();
  ablate->add_option("--mode", ablate_mode)->check(CLI::IsMember({"retain_top", "remove_top"}));
  ablate->add_option("--out", out_path, "output matrix file")->required();
  ablate->add_flag("--f32", write_f32, "write single precision");
  ablate->add_flag("--no-center", no_center);
  add_json(ablate);

  // sweep
  std::string manifest_path;
  std::string report_json_path;
  std::string report_csv_path;
  auto* sweep = app.add_subcommand("sweep", "metrics for every entry of a manifest");
  sweep->add_option("manifest", manifest_path, "JSON manifest")->required();
  sweep->add_option("--out-json", report_json_path);
  sweep->add_option("--out-csv", report_csv_path);
  add_json(sweep);

  // n-gram
  std::string corpus_path;
  std::size_t vocab = 0;
  std::string context_text;
  auto* ngram_build = app.add_subcommand("ngram-build", "validate a text corpus and write its binary form");
  ngram_build->add_option("corpus", corpus_path, "one document per line, space-separated ids")->required();
  ngram_build->add_option("--out", out_path)->required();
  ngram_build->add_option("--vocab", vocab, "vocabulary size (default: max id + 1)");
  add_json(ngram_build);

  auto* ngram_query = app.add_subcommand("ngram-query", "infinity-gram next-token distribution");
  ngram_query->add_option("--corpus", corpus_path, "text or binary corpus")->required();
  ngram_query->add_option("--context", context_text, "space-separated token ids");
  ngram_query->add_option("--vocab", vocab);
  add_json(ngram_query);

  std::string ref_path;
  std::string model_path;
  bool per_token = false;
  auto* memorize = app.add_subcommand("memorize", "distributional memorization from two trace files");
  memorize->add_option("--ref", ref_path, "infinity-gram trace CSV")->required();
  memorize->add_option("--model", model_path, "model trace CSV")->required();
  memorize->add_flag("--per-token", per_token, "correlate token probabilities instead of example likelihoods");
  add_json(memorize);

  // toy model
  std::string config_path;
  std::string out_dir = ".";
  std::string prefix = "trajectory";
  bool strict = false;
  auto* toy_run = app.add_subcommand("toy-run", "simulate the linear toy model");
  toy_run->add_option("--config", config_path, "key = value config file");
  toy_run->add_option("--out-dir", out_dir);
  toy_run->add_option("--prefix", prefix, "output file stem");
  add_json(toy_run);

  auto* toy_verify = app.add_subcommand("toy-verify", "check conservation, alignment and singular-value dynamics");
  toy_verify->add_option("--config", config_path);
  toy_verify->add_flag("--strict", strict, "exit 1 when any check fails");
  add_json(toy_verify);

  // eval
  std::string input_path;
  std::string k_text;
  auto* passk = app.add_subcommand("passk", "unbiased pass@k over problems");
  passk->add_option("--input", input_path, "CSV problem_id,N,c")->required();
  passk->add_option("--k", k_text, "comma-separated k values")->required();
  add_json(passk);

  auto* dpo = app.add_subcommand("dpo-check", "DPO loss and its two-candidate softmax form");
  dpo->add_option("--input", input_path, "CSV r_w,r_l")->required();
  add_json(dpo);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << SPECGEO_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (spectrum->parsed()) {
      const auto f = load_features(matrix_path, !no_center);
      const auto spec = spectral::covariance_spectrum(f, want_vectors);
      ordered_json j;
      j["m"] = spec.source_dims.first;
      j["d"] = spec.source_dims.second;
      j["values"] = spec.values;
      if (spec.vectors) {
        ordered_json rows = ordered_json::array();
        for (Eigen::Index i = 0; i < spec.vectors->rows(); ++i) {
          std::vector<double> row(static_cast<std::size_t>(spec.vectors->cols()));
          for (Eigen::Index c = 0; c < spec.vectors->cols(); ++c) row[static_cast<std::size_t>(c)] = (*spec.vectors)(i, c);
          rows.push_back(row);
        }
        j["vectors"] = std::move(rows);
      }
      emit(out, j, as_json);
    } else if (rankme->parsed()) {
      const auto spec = spectral::covariance_spectrum(load_features(matrix_path, !no_center), false);
      emit(out, {{"rankme", spectral::rankme(spec)}}, as_json);
    } else if (alphareq->parsed()) {
      const auto spec = spectral::covariance_spectrum(load_features(matrix_path, !no_center), false);
      const auto fit = spectral::alpha_req(spec, parse_window(window_text));
      ordered_json j;
      j["alpha_req"] = fit.alpha;
      j["fit_r2"] = fit.r2;
      j["fit_window"] = {fit.first + 1, fit.last + 1};
      emit(out, j, as_json);
    } else if (ablate->parsed()) {
      const auto f = load_features(matrix_path, !no_center);
      const auto mode = ablate_mode == "retain_top" ? spectral::AblationMode::retain_top
                                                     : spectral::AblationMode::remove_top;
      const auto reduced = spectral::ablate_spectrum(f, ablate_k, mode);
      io::write_matrix(reduced.data(), out_path, write_f32 ? io::Dtype::f32 : io::Dtype::f64);
      const auto before = spectral::covariance_spectrum(f, false);
      const auto after = spectral::covariance_spectrum(reduced, false);
      const bool left = std::any_of(after.values.begin(), after.values.end(), [](double v) { return v > 0.0; });
      ordered_json j;
      j["mode"] = ablate_mode;
      j["k"] = ablate_k;
      j["retained_energy"] = spectral::retained_energy(before, ablate_k);
      j["rankme_before"] = spectral::rankme(before);
      j["rankme_after"] = left ? ordered_json(spectral::rankme(after)) : ordered_json(nullptr);
      j["out"] = out_path;
      emit(out, j, as_json);
    } else if (sweep->parsed()) {
      const auto manifest = sweep::load_manifest(manifest_path);
      const auto report = sweep::run_sweep(manifest, sweep::threads_from_env());
      const auto j = sweep::report_json(report);
      if (!report_json_path.empty()) io::write_file(report_json_path, j.dump(2) + "\n");
      if (!report_csv_path.empty()) io::write_file(report_csv_path, sweep::report_csv(report));
      if (as_json) out << j.dump() << '\n';
      else out << sweep::report_csv(report);
      for (const auto& r : report.records)
        if (!r.ok()) err << "entry '" << r.label << "' failed: " << r.error << '\n';
      return report.ok() ? kExitOk : kExitComputation;
    } else if (ngram_build->parsed()) {
      const auto corpus = io::parse_corpus_text(io::read_file(corpus_path),
                                                vocab ? std::optional<std::size_t>(vocab) : std::nullopt);
      const auto index = ngram::build_index(corpus);
      io::write_file(out_path, io::encode_corpus(corpus));
      ordered_json j;
      j["tokens"] = index.size();
      j["documents"] = corpus.doc_boundaries.size();
      j["vocab_size"] = corpus.vocab_size;
      j["out"] = out_path;
      emit(out, j, as_json);
    } else if (ngram_query->parsed()) {
      const auto index = ngram::build_index(
          io::load_corpus(corpus_path, vocab ? std::optional<std::size_t>(vocab) : std::nullopt));
      const auto context = io::parse_tokens(context_text);
      const auto pred = ngram::infty_gram_next(index, context);
      ordered_json j;
      j["probs"] = pred.token_probs;
      j["suffix_len_used"] = pred.suffix_len_used;
      j["context_count"] = pred.context_count;
      emit(out, j, as_json);
    } else if (memorize->parsed()) {
      const auto aligned = io::align_traces(io::parse_trace_csv(io::read_file(ref_path)),
                                            io::parse_trace_csv(io::read_file(model_path)));
      const auto unit = per_token ? ngram::MemorizationUnit::per_token : ngram::MemorizationUnit::per_example;
      ordered_json j;
      j["rho"] = ngram::distributional_memorization(aligned.trace, aligned.spans, unit);
      j["unit"] = per_token ? "per_token" : "per_example";
      j["examples"] = aligned.spans.size();
      j["tokens"] = aligned.trace.ref.size();
      emit(out, j, as_json);
    } else if (toy_run->parsed()) {
      const auto cfg = load_config(config_path);
      const auto traj = dynamics::run_trajectory(cfg);
      const auto summary = toy_summary(traj);
      const fs::path dir(out_dir);
      fs::create_directories(dir);
      const auto csv = dir / (prefix + ".csv");
      const auto js = dir / (prefix + ".json");
      io::write_file(csv, io::trajectory_csv(traj));
      io::write_file(js, summary.dump(2) + "\n");
      if (as_json) {
        out << summary.dump() << '\n';
      } else {
        out << "csv: " << csv.string() << "\njson: " << js.string() << '\n';
      }
    } else if (toy_verify->parsed()) {
      const auto cfg = load_config(config_path);
      const auto traj = dynamics::run_trajectory(cfg);
      const auto t1 = dynamics::check_theorem1(traj);
      const auto t2 = dynamics::check_theorem2(traj, kRateSigmaFloor);
      const auto drift = dynamics::conservation_order_test(cfg);
      const double t2_worst = std::max({t2.max_fd_vs_lemma_f, t2.max_fd_vs_lemma_w, t2.max_lemma_vs_formula_f,
                                        t2.max_lemma_vs_formula_w, t2.max_rate_collapse});
      ordered_json checks;
      checks["init_residual"] = t1.initial_relative_residual <= kInitResidualTol;
      checks["drift_order"] = drift.same_steps_ratio <= kDriftRatioTol;
      checks["alignment"] = t1.max_alignment <= kAlignmentTol;
      checks["singular_value_dynamics"] = t2_worst <= kRateTol;
      bool all = true;
      for (const auto& [_, v] : checks.items()) all = all && v.get<bool>();

      ordered_json j;
      j["passed"] = all;
      j["checks"] = checks;
      j["theorem1"] = theorem1_json(t1);
      j["drift_order"] = {{"drift_full", num(drift.drift_full)},
                          {"drift_half", num(drift.drift_half)},
                          {"drift_half_matched", num(drift.drift_half_matched)},
                          {"same_steps_ratio", num(drift.same_steps_ratio)},
                          {"per_step_rate_ratio", num(drift.per_step_rate_ratio)}};
      j["theorem2"] = theorem2_json(t2);
      emit(out, j, as_json);
      if (strict && !all) return kExitComputation;
    } else if (passk->parsed()) {
      const auto problems = io::parse_passk_csv(io::read_file(input_path));
      ordered_json j;
      for (auto k : io::parse_int_list(k_text)) j[std::to_string(k)] = eval::pass_at_k(problems, k);
      emit(out, j, as_json);
    } else if (dpo->parsed()) {
      const auto triples = io::parse_dpo_csv(io::read_file(input_path));
      ordered_json j;
      j["count"] = triples.size();
      j["dpo_loss"] = eval::dpo_loss(triples);
      j["nce_max_discrepancy"] = eval::dpo_nce_identity(triples);
      emit(out, j, as_json);
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return kExitComputation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitOk;
}

}  // namespace specgeo::cli
