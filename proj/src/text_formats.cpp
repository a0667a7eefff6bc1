#include <algorithm>
#include <charconv>
#include <cstring>
#include <map>
#include <sstream>

#include "specgeo/error.hpp"
#include "specgeo/io.hpp"

namespace specgeo::io {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
  s = trim(s);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    fail(Errc::parse_failure, "bad " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

bool numeric(std::string_view s) {
  s = trim(s);
  double v;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

// Rows of a CSV with a fixed column count. A first row whose `probe` column
// is not numeric is taken as a header. Blank lines are ignored.
std::vector<std::vector<std::string_view>> csv_rows(std::string_view text, std::size_t columns,
                                                    std::size_t probe) {
  std::vector<std::vector<std::string_view>> rows;
  bool first = true;
  std::size_t line_no = 0;
  for (auto line : lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != columns)
      fail(Errc::parse_failure, "line " + std::to_string(line_no) + ": expected " +
                                    std::to_string(columns) + " columns");
    if (first && !numeric(fields[probe])) {
      first = false;
      continue;
    }
    first = false;
    rows.push_back(std::move(fields));
  }
  return rows;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) fail(Errc::size_mismatch, "truncated corpus file");
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return v;
}

}  // namespace

std::vector<ngram::Token> parse_tokens(std::string_view text) {
  std::vector<ngram::Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == ',' || text[i] == '\r')) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != ',' && text[j] != '\r') ++j;
    tokens.push_back(parse_number<ngram::Token>(text.substr(i, j - i), "token id"));
    i = j;
  }
  return tokens;
}

ngram::TokenCorpus parse_corpus_text(std::string_view text, std::optional<std::size_t> vocab_size) {
  ngram::TokenCorpus corpus;
  for (auto line : lines(text)) {
    auto doc = parse_tokens(line);
    if (doc.empty()) continue;
    corpus.tokens.insert(corpus.tokens.end(), doc.begin(), doc.end());
    corpus.doc_boundaries.push_back(corpus.tokens.size());
  }
  if (corpus.tokens.empty()) fail(Errc::invalid_argument, "corpus has no tokens");
  const std::size_t seen = *std::max_element(corpus.tokens.begin(), corpus.tokens.end()) + std::size_t{1};
  corpus.vocab_size = vocab_size.value_or(seen);
  corpus.validate();
  return corpus;
}

std::string encode_corpus(const ngram::TokenCorpus& corpus) {
  corpus.validate();
  std::string out(kCorpusMagic);
  put(out, static_cast<std::uint64_t>(corpus.vocab_size));
  put(out, static_cast<std::uint64_t>(corpus.tokens.size()));
  put(out, static_cast<std::uint64_t>(corpus.doc_boundaries.size()));
  for (auto t : corpus.tokens) put(out, static_cast<std::uint32_t>(t));
  for (auto b : corpus.doc_boundaries) put(out, static_cast<std::uint64_t>(b));
  return out;
}

ngram::TokenCorpus decode_corpus(std::string_view bytes) {
  if (bytes.substr(0, kCorpusMagic.size()) != kCorpusMagic) fail(Errc::bad_magic, "not a SPECCRP1 corpus file");
  std::size_t offset = kCorpusMagic.size();
  ngram::TokenCorpus corpus;
  corpus.vocab_size = get<std::uint64_t>(bytes, offset);
  const auto n = get<std::uint64_t>(bytes, offset);
  const auto docs = get<std::uint64_t>(bytes, offset);
  if (n > bytes.size() || docs > bytes.size()) fail(Errc::size_mismatch, "corpus header exceeds file size");
  if (bytes.size() - offset != n * 4 + docs * 8) fail(Errc::size_mismatch, "corpus payload length mismatch");
  corpus.tokens.resize(n);
  for (auto& t : corpus.tokens) t = get<std::uint32_t>(bytes, offset);
  corpus.doc_boundaries.resize(docs);
  for (auto& b : corpus.doc_boundaries) b = get<std::uint64_t>(bytes, offset);
  corpus.validate();
  return corpus;
}

ngram::TokenCorpus load_corpus(const std::filesystem::path& path, std::optional<std::size_t> vocab_size) {
  const std::string bytes = read_file(path);
  if (std::string_view(bytes).substr(0, kCorpusMagic.size()) == kCorpusMagic) {
    auto corpus = decode_corpus(bytes);
    if (vocab_size) {
      corpus.vocab_size = *vocab_size;
      corpus.validate();
    }
    return corpus;
  }
  return parse_corpus_text(bytes, vocab_size);
}

std::vector<TraceRow> parse_trace_csv(std::string_view text) {
  std::vector<TraceRow> out;
  for (const auto& f : csv_rows(text, 3, 1)) {
    if (f[0].empty()) fail(Errc::parse_failure, "empty example_id");
    out.push_back({std::string(f[0]), parse_number<std::size_t>(f[1], "token_index"),
                   parse_number<double>(f[2], "prob")});
  }
  return out;
}

AlignedTraces align_traces(const std::vector<TraceRow>& ref, const std::vector<TraceRow>& model) {
  if (ref.size() != model.size())
    fail(Errc::size_mismatch, "traces hold " + std::to_string(ref.size()) + " and " +
                                  std::to_string(model.size()) + " rows");
  std::vector<std::string> order;
  std::map<std::string, std::map<std::size_t, double>> ref_map;
  std::map<std::string, std::map<std::size_t, double>> model_map;
  for (const auto& r : ref) {
    auto [it, fresh] = ref_map.try_emplace(r.example_id);
    if (fresh) order.push_back(r.example_id);
    if (!it->second.emplace(r.token_index, r.prob).second)
      fail(Errc::parse_failure, "duplicate row " + r.example_id + "/" + std::to_string(r.token_index));
  }
  for (const auto& r : model)
    if (!model_map[r.example_id].emplace(r.token_index, r.prob).second)
      fail(Errc::parse_failure, "duplicate row " + r.example_id + "/" + std::to_string(r.token_index));

  AlignedTraces out;
  for (const auto& id : order) {
    const auto& a = ref_map.at(id);
    const auto found = model_map.find(id);
    if (found == model_map.end()) fail(Errc::size_mismatch, "example '" + id + "' missing from model trace");
    const auto& b = found->second;
    if (a.size() != b.size()) fail(Errc::size_mismatch, "example '" + id + "' has different token counts");
    const std::size_t offset = out.trace.ref.size();
    for (const auto& [idx, p] : a) {
      const auto m = b.find(idx);
      if (m == b.end())
        fail(Errc::size_mismatch, "token " + std::to_string(idx) + " of '" + id + "' missing from model trace");
      out.trace.ref.push_back(p);
      out.trace.model.push_back(m->second);
    }
    out.spans.push_back({offset, a.size()});
    out.example_ids.push_back(id);
  }
  out.trace.validate();
  return out;
}

std::vector<eval::PassAtKProblem> parse_passk_csv(std::string_view text) {
  std::vector<eval::PassAtKProblem> out;
  for (const auto& f : csv_rows(text, 3, 1))
    out.push_back({parse_number<std::int64_t>(f[1], "N"), parse_number<std::int64_t>(f[2], "c")});
  return out;
}

std::vector<eval::PreferenceTriple> parse_dpo_csv(std::string_view text) {
  std::vector<eval::PreferenceTriple> out;
  for (const auto& f : csv_rows(text, 2, 0))
    out.push_back({parse_number<double>(f[0], "r_w"), parse_number<double>(f[1], "r_l")});
  return out;
}

std::vector<std::int64_t> parse_int_list(std::string_view text) {
  std::vector<std::int64_t> out;
  for (auto part : split(text, ',')) out.push_back(parse_number<std::int64_t>(part, "integer"));
  return out;
}

dynamics::ToyConfig parse_toy_config(std::string_view text) {
  dynamics::ToyConfig cfg;
  bool vocab_given = false;
  bool counts_given = false;
  std::size_t line_no = 0;
  for (auto line : lines(text)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(Errc::parse_failure, "config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "d_in") cfg.d_in = parse_number<std::size_t>(value, "d_in");
    else if (key == "d") cfg.d = parse_number<std::size_t>(value, "d");
    else if (key == "vocab") {
      cfg.vocab = parse_number<std::size_t>(value, "vocab");
      vocab_given = true;
    } else if (key == "class_counts") {
      cfg.class_counts.clear();
      for (auto part : split(value, ',')) cfg.class_counts.push_back(parse_number<std::size_t>(part, "class count"));
      counts_given = true;
    } else if (key == "lr") cfg.lr = parse_number<double>(value, "lr");
    else if (key == "steps") cfg.steps = parse_number<std::size_t>(value, "steps");
    else if (key == "loss") cfg.loss = dynamics::parse_loss_kind(std::string(value));
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, "seed");
    else if (key == "init_scale") cfg.init_scale = parse_number<double>(value, "init_scale");
    else if (key == "relinearize_every") cfg.relinearize_every = parse_number<std::size_t>(value, "relinearize_every");
    else fail(Errc::parse_failure, "unknown config key '" + std::string(key) + "'");
  }
  if (counts_given && !vocab_given) cfg.vocab = cfg.class_counts.size();
  cfg.validate();
  return cfg;
}

std::string format_toy_config(const dynamics::ToyConfig& cfg) {
  std::ostringstream out;
  out << "d_in = " << cfg.d_in << "\nd = " << cfg.d << "\nvocab = " << cfg.vocab << "\nclass_counts = ";
  for (std::size_t i = 0; i < cfg.class_counts.size(); ++i) out << (i ? "," : "") << cfg.class_counts[i];
  out << "\nlr = " << format_double(cfg.lr) << "\nsteps = " << cfg.steps
      << "\nloss = " << dynamics::to_string(cfg.loss) << "\nseed = " << cfg.seed
      << "\ninit_scale = " << format_double(cfg.init_scale)
      << "\nrelinearize_every = " << cfg.relinearize_every << "\n";
  return out.str();
}

std::string trajectory_csv(const dynamics::TrajectoryRecord& traj) {
  std::size_t kf = 0;
  std::size_t kw = 0;
  if (!traj.steps.empty()) {
    kf = traj.steps.front().sigma_f.size();
    kw = traj.steps.front().sigma_w.size();
  }
  std::string out = "step,loss,rankme";
  for (std::size_t i = 1; i <= kf; ++i) out += ",sigma_f_" + std::to_string(i);
  for (std::size_t i = 1; i <= kw; ++i) out += ",sigma_w_" + std::to_string(i);
  out += ",align_err,conserve_err,a_norm\n";
  for (const auto& s : traj.steps) {
    out += std::to_string(s.step) + ',' + format_double(s.loss) + ',' + format_double(s.rankme);
    for (double v : s.sigma_f) out += ',' + format_double(v);
    for (double v : s.sigma_w) out += ',' + format_double(v);
    out += ',' + format_double(s.align_err) + ',' + format_double(s.conserve_err) + ',' +
           format_double(s.a_norm) + '\n';
  }
  return out;
}

}  // namespace specgeo::io
