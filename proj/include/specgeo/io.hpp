#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "specgeo/dynamics.hpp"
#include "specgeo/eval.hpp"
#include "specgeo/ngram.hpp"
#include "specgeo/spectral.hpp"

namespace specgeo::io {

// --- matrix files ---------------------------------------------------------
//
// Layout, all little-endian:
//   0   8 bytes  "SPECGEO1"
//   8   u32      dtype (1 = f32, 2 = f64)
//   12  u64      rows
//   20  u64      cols
//   28  payload  rows * cols values, row-major

inline constexpr std::string_view kMatrixMagic = "SPECGEO1";
inline constexpr std::size_t kMatrixHeaderSize = 28;

enum class Dtype : std::uint32_t { f32 = 1, f64 = 2 };

std::string encode_matrix(const spectral::Matrix& m, Dtype dtype = Dtype::f64);
spectral::Matrix decode_matrix(std::string_view bytes);

void write_matrix(const spectral::Matrix& m, const std::filesystem::path& path,
                  Dtype dtype = Dtype::f64);
spectral::Matrix read_matrix(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// FNV-1a 64-bit, as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

// --- corpora --------------------------------------------------------------

/// One document per line, tokens as space-separated decimal ids. Blank lines
/// are skipped. vocab_size defaults to max id + 1.
ngram::TokenCorpus parse_corpus_text(std::string_view text,
                                     std::optional<std::size_t> vocab_size = std::nullopt);

// Binary corpus: "SPECCRP1", u64 vocab, u64 n_tokens, u64 n_docs,
// u32 tokens[n_tokens], u64 doc_ends[n_docs].
inline constexpr std::string_view kCorpusMagic = "SPECCRP1";
std::string encode_corpus(const ngram::TokenCorpus& corpus);
ngram::TokenCorpus decode_corpus(std::string_view bytes);

/// Binary if the file starts with the corpus magic, text otherwise.
ngram::TokenCorpus load_corpus(const std::filesystem::path& path,
                               std::optional<std::size_t> vocab_size = std::nullopt);

std::vector<ngram::Token> parse_tokens(std::string_view text);

// --- CSV inputs -----------------------------------------------------------

struct TraceRow {
  std::string example_id;
  std::size_t token_index = 0;
  double prob = 0.0;
};

/// Columns example_id, token_index, prob; an optional header row is skipped.
std::vector<TraceRow> parse_trace_csv(std::string_view text);

struct AlignedTraces {
  ngram::ProbTrace trace;
  std::vector<ngram::Span> spans;
  std::vector<std::string> example_ids;
};

/// Pairs rows by (example_id, token_index). Examples keep the order of first
/// appearance in `ref`; tokens within an example are sorted by index. Both
/// sides must cover exactly the same keys.
AlignedTraces align_traces(const std::vector<TraceRow>& ref, const std::vector<TraceRow>& model);

/// Columns problem_id, N, c.
std::vector<eval::PassAtKProblem> parse_passk_csv(std::string_view text);

/// Columns r_w, r_l.
std::vector<eval::PreferenceTriple> parse_dpo_csv(std::string_view text);

/// "1,16,256" -> {1, 16, 256}.
std::vector<std::int64_t> parse_int_list(std::string_view text);

// --- toy model ------------------------------------------------------------

/// key = value lines, '#' starts a comment. Keys: d_in, d, vocab,
/// class_counts (comma separated), lr, steps, loss, seed, init_scale,
/// relinearize_every. Missing keys keep their defaults; when class_counts is
/// given without vocab, vocab follows its length.
dynamics::ToyConfig parse_toy_config(std::string_view text);
std::string format_toy_config(const dynamics::ToyConfig& cfg);

/// step, loss, rankme, sigma_f_1..k, sigma_w_1..k, align_err, conserve_err, a_norm
std::string trajectory_csv(const dynamics::TrajectoryRecord& traj);

}  // namespace specgeo::io
