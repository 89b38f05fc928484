#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "routoo/core.hpp"

// Delimited formats are tab-separated. Every file starts with a
// "format_version<TAB>1" line; the manifest is JSON with a format_version key.

namespace routoo {

inline constexpr int kFormatVersion = 1;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, std::size_t column, const std::string& message)
      : std::runtime_error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        file_(file),
        line_(line),
        column_(column) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t column_;
};

namespace io {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

/// Line-oriented reader that tracks positions for diagnostics.
class TableReader {
 public:
  TableReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  bool next() {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty()) continue;
      fields_ = split_tabs(line_);
      return true;
    }
    return false;
  }

  const std::vector<std::string_view>& fields() const { return fields_; }
  std::size_t line_no() const { return line_no_; }
  const std::string& name() const { return name_; }

  [[noreturn]] void fail(std::size_t column, const std::string& message) const {
    throw ParseError(name_, line_no_, column, message);
  }

  void expect_columns(std::size_t n) const {
    if (fields_.size() != n) {
      fail(std::min(fields_.size(), n) + 1,
           "expected " + std::to_string(n) + " columns, found " + std::to_string(fields_.size()));
    }
  }

  void read_version() {
    if (!next()) throw ParseError(name_, 0, 0, "empty file");
    if (fields_.size() != 2 || fields_[0] != "format_version") fail(1, "missing format_version header");
    if (fields_[1] != std::to_string(kFormatVersion)) {
      fail(2, "unsupported format_version '" + std::string(fields_[1]) + "'");
    }
  }

  template <class Int>
  Int integer(std::size_t col) const {
    const std::string_view f = fields_.at(col);
    Int v{};
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size()) fail(col + 1, "invalid integer '" + std::string(f) + "'");
    return v;
  }

  double real(std::size_t col) const {
    const std::string_view f = fields_.at(col);
    double v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size()) fail(col + 1, "invalid number '" + std::string(f) + "'");
    return v;
  }

  Decimal decimal(std::size_t col) const {
    try {
      return Decimal::parse(fields_.at(col));
    } catch (const std::exception& e) {
      fail(col + 1, e.what());
    }
  }

 private:
  std::istream& in_;
  std::string name_;
  std::string line_;
  std::vector<std::string_view> fields_;
  std::size_t line_no_ = 0;
};

/// Shortest representation that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

inline void write_version(std::ostream& out) { out << "format_version\t" << kFormatVersion << '\n'; }

}  // namespace io

// ---------------------------------------------------------------- models

inline void write_models(std::ostream& out, std::span<const ModelSpec> models) {
  io::write_version(out);
  out << "model_id\tprice_per_1m_tokens\tavg_tokens_per_query\tsize_bucket\tdisplay_name\n";
  for (const auto& m : models) {
    out << m.model_id << '\t' << m.price_per_1m_tokens.to_string() << '\t' << m.avg_tokens_per_query << '\t'
        << m.size_bucket << '\t' << m.display_name << '\n';
  }
}

inline std::vector<ModelSpec> read_models(std::istream& in, const std::string& name = "models") {
  io::TableReader t(in, name);
  t.read_version();
  if (!t.next()) t.fail(1, "missing header row");
  t.expect_columns(5);
  std::vector<ModelSpec> out;
  while (t.next()) {
    t.expect_columns(5);
    ModelSpec m;
    m.model_id = std::string(t.fields()[0]);
    if (m.model_id.empty()) t.fail(1, "empty model_id");
    m.price_per_1m_tokens = t.decimal(1);
    m.avg_tokens_per_query = t.integer<std::int64_t>(2);
    m.size_bucket = std::string(t.fields()[3]);
    m.display_name = std::string(t.fields()[4]);
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------- scores

inline void write_scores(std::ostream& out, const ScoreMatrix& scores) {
  io::write_version(out);
  out << "k_levels\t" << scores.k_levels() << '\n';
  out << "model_id";
  for (const auto& q : scores.query_ids()) out << '\t' << q;
  out << '\n';
  for (std::size_t i = 0; i < scores.num_models(); ++i) {
    out << scores.model_ids()[i];
    for (int s : scores.row(i)) out << '\t' << s;
    out << '\n';
  }
}

inline ScoreMatrix read_scores(std::istream& in, const std::string& name = "scores") {
  io::TableReader t(in, name);
  t.read_version();
  if (!t.next() || t.fields().size() != 2 || t.fields()[0] != "k_levels") t.fail(1, "missing k_levels row");
  const int k = t.integer<int>(1);
  if (!t.next()) t.fail(1, "missing header row");
  if (t.fields().empty() || t.fields()[0] != "model_id") t.fail(1, "header must start with model_id");
  std::vector<std::string> query_ids;
  for (std::size_t c = 1; c < t.fields().size(); ++c) query_ids.emplace_back(t.fields()[c]);
  std::vector<std::string> model_ids;
  std::vector<int> values;
  values.reserve(query_ids.size() * 64);
  while (t.next()) {
    const auto& f = t.fields();
    const std::string model(f[0]);
    if (f.size() < query_ids.size() + 1) {
      t.fail(f.size() + 1, "missing score cell (" + model + ", " + query_ids[f.size() - 1] + ")");
    }
    if (f.size() > query_ids.size() + 1) t.fail(query_ids.size() + 2, "extra score cell for model " + model);
    for (std::size_t c = 1; c < f.size(); ++c) {
      if (f[c].empty()) t.fail(c + 1, "missing score cell (" + model + ", " + query_ids[c - 1] + ")");
      values.push_back(t.integer<int>(c));
    }
    model_ids.push_back(model);
  }
  return ScoreMatrix(std::move(model_ids), std::move(query_ids), k, std::move(values));
}

// ---------------------------------------------------------------- queries

/// Query metadata only; embeddings travel separately.
inline void write_queries(std::ostream& out, std::span<const QueryRecord> queries) {
  io::write_version(out);
  out << "query_id\tdomain\tsplit\ttokens\n";
  for (const auto& q : queries) {
    out << q.query_id << '\t' << q.domain << '\t' << to_string(q.split) << '\t';
    if (q.tokens) out << *q.tokens;
    out << '\n';
  }
}

inline std::vector<QueryRecord> read_queries(std::istream& in, const std::string& name = "queries") {
  io::TableReader t(in, name);
  t.read_version();
  if (!t.next()) t.fail(1, "missing header row");
  const std::size_t cols = t.fields().size();
  if (cols != 3 && cols != 4) t.fail(1, "expected query_id, domain, split[, tokens]");
  std::vector<QueryRecord> out;
  while (t.next()) {
    const auto& f = t.fields();
    if (f.size() != cols && !(cols == 4 && f.size() == 3)) t.expect_columns(cols);
    QueryRecord q;
    q.query_id = std::string(f[0]);
    q.domain = std::string(f[1]);
    try {
      q.split = parse_split(f[2]);
    } catch (const std::exception& e) {
      t.fail(3, e.what());
    }
    if (f.size() == 4 && !f[3].empty()) q.tokens = t.integer<std::int64_t>(3);
    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------- embeddings

struct EmbeddingTable {
  std::vector<std::string> query_ids;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major

  std::span<const double> row(std::size_t i) const { return std::span<const double>(values).subspan(i * dim, dim); }
};

enum class EmbeddingFormat { text, binary };

inline void write_embeddings_text(std::ostream& out, const EmbeddingTable& table) {
  io::write_version(out);
  out << "dim\t" << table.dim << '\n';
  for (std::size_t i = 0; i < table.query_ids.size(); ++i) {
    out << table.query_ids[i];
    for (double v : table.row(i)) out << '\t' << io::format_real(v);
    out << '\n';
  }
}

inline EmbeddingTable read_embeddings_text(std::istream& in, const std::string& name = "embeddings") {
  io::TableReader t(in, name);
  t.read_version();
  if (!t.next() || t.fields().size() != 2 || t.fields()[0] != "dim") t.fail(1, "missing dim row");
  EmbeddingTable out;
  out.dim = t.integer<std::size_t>(1);
  while (t.next()) {
    t.expect_columns(out.dim + 1);
    out.query_ids.emplace_back(t.fields()[0]);
    for (std::size_t c = 1; c <= out.dim; ++c) out.values.push_back(t.real(c));
  }
  return out;
}

namespace io {
inline constexpr char kEmbeddingMagic[8] = {'R', 'T', 'E', 'M', 'B', 'E', 'D', '\0'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& in, const std::string& name) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError(name, 0, static_cast<std::size_t>(in.gcount()), "truncated binary embeddings");
  return v;
}
}  // namespace io

/// Binary layout (little-endian): magic[8], u32 format_version, u32 reserved,
/// u64 rows, u64 dim, rows x (u32 id length, id bytes), rows x dim f64.
inline void write_embeddings_binary(std::ostream& out, const EmbeddingTable& table) {
  static_assert(std::endian::native == std::endian::little, "binary embeddings assume a little-endian host");
  out.write(io::kEmbeddingMagic, sizeof io::kEmbeddingMagic);
  io::put<std::uint32_t>(out, kFormatVersion);
  io::put<std::uint32_t>(out, 0);
  io::put<std::uint64_t>(out, table.query_ids.size());
  io::put<std::uint64_t>(out, table.dim);
  for (const auto& id : table.query_ids) {
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  out.write(reinterpret_cast<const char*>(table.values.data()),
            static_cast<std::streamsize>(table.values.size() * sizeof(double)));
}

inline EmbeddingTable read_embeddings_binary(std::istream& in, const std::string& name = "embeddings") {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, io::kEmbeddingMagic, sizeof magic) != 0) {
    throw ParseError(name, 0, 0, "not a binary embedding file");
  }
  const auto version = io::get<std::uint32_t>(in, name);
  if (version != static_cast<std::uint32_t>(kFormatVersion)) {
    throw ParseError(name, 0, 8, "unsupported format_version " + std::to_string(version));
  }
  io::get<std::uint32_t>(in, name);
  EmbeddingTable out;
  const auto rows = io::get<std::uint64_t>(in, name);
  out.dim = io::get<std::uint64_t>(in, name);
  if (rows > (1ull << 32) || out.dim > (1ull << 24)) throw ParseError(name, 0, 16, "implausible embedding shape");
  out.query_ids.reserve(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    const auto len = io::get<std::uint32_t>(in, name);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw ParseError(name, 0, 0, "truncated id table");
    out.query_ids.push_back(std::move(id));
  }
  out.values.resize(rows * out.dim);
  in.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(out.values.size() * sizeof(double)));
  if (!in) throw ParseError(name, 0, 0, "truncated embedding values");
  return out;
}

// ---------------------------------------------------------------- manifest

struct DatasetManifest {
  int format_version = kFormatVersion;
  std::filesystem::path models;
  std::filesystem::path scores;
  std::filesystem::path queries;
  std::filesystem::path embeddings;
  EmbeddingFormat embeddings_format = EmbeddingFormat::text;
  int k_levels = 2;
  std::uint64_t seed = 0;
  /// Directory the relative paths above are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, 0, e.what());
  }
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kFormatVersion) {
      throw ParseError(path.string(), 0, 0, "unsupported format_version " + std::to_string(m.format_version));
    }
    m.models = j.at("models").get<std::string>();
    m.scores = j.at("scores").get<std::string>();
    m.queries = j.at("queries").get<std::string>();
    m.embeddings = j.at("embeddings").get<std::string>();
    const std::string fmt = j.value("embeddings_format", std::string("text"));
    if (fmt == "text") {
      m.embeddings_format = EmbeddingFormat::text;
    } else if (fmt == "binary") {
      m.embeddings_format = EmbeddingFormat::binary;
    } else {
      throw ParseError(path.string(), 0, 0, "unknown embeddings_format '" + fmt + "'");
    }
    m.k_levels = j.at("k_levels").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, 0, e.what());
  }
  m.base_dir = path.parent_path();
  for (const auto* p : {&m.models, &m.scores, &m.queries, &m.embeddings}) {
    if (!std::filesystem::exists(m.resolve(*p))) {
      throw std::runtime_error("manifest references a missing file: " + m.resolve(*p).string());
    }
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::json j = {
      {"format_version", kFormatVersion},
      {"models", m.models.string()},
      {"scores", m.scores.string()},
      {"queries", m.queries.string()},
      {"embeddings", m.embeddings.string()},
      {"embeddings_format", m.embeddings_format == EmbeddingFormat::binary ? "binary" : "text"},
      {"k_levels", m.k_levels},
      {"seed", m.seed},
  };
  auto out = io::open_out(path);
  out << j.dump(2) << '\n';
}

/// Parses every file named by the manifest and validates the bundle.
inline Dataset load_dataset(const DatasetManifest& manifest) {
  auto models_in = io::open_in(manifest.resolve(manifest.models));
  auto models = read_models(models_in, manifest.models.string());
  auto scores_in = io::open_in(manifest.resolve(manifest.scores));
  auto scores = read_scores(scores_in, manifest.scores.string());
  if (scores.k_levels() != manifest.k_levels) {
    throw DatasetError(DatasetError::Kind::invalid_levels, manifest.scores.string(),
                       "scores declare K=" + std::to_string(scores.k_levels()) + " but manifest declares K=" +
                           std::to_string(manifest.k_levels));
  }
  auto queries_in = io::open_in(manifest.resolve(manifest.queries));
  auto queries = read_queries(queries_in, manifest.queries.string());

  EmbeddingTable emb;
  if (manifest.embeddings_format == EmbeddingFormat::binary) {
    auto in = io::open_in(manifest.resolve(manifest.embeddings), std::ios::in | std::ios::binary);
    emb = read_embeddings_binary(in, manifest.embeddings.string());
  } else {
    auto in = io::open_in(manifest.resolve(manifest.embeddings));
    emb = read_embeddings_text(in, manifest.embeddings.string());
  }
  std::map<std::string, std::size_t, std::less<>> row_of;
  for (std::size_t i = 0; i < emb.query_ids.size(); ++i) {
    if (!row_of.emplace(emb.query_ids[i], i).second) {
      throw DatasetError(DatasetError::Kind::duplicate_id, emb.query_ids[i], "duplicate embedding row");
    }
  }
  for (auto& q : queries) {
    auto it = row_of.find(q.query_id);
    if (it == row_of.end()) throw DatasetError(DatasetError::Kind::unknown_id, q.query_id, "query has no embedding");
    const auto r = emb.row(it->second);
    q.embedding.assign(r.begin(), r.end());
  }
  if (row_of.size() != queries.size()) {
    throw DatasetError(DatasetError::Kind::dimension_mismatch, manifest.embeddings.string(),
                       "embedding rows do not match the query list");
  }
  return validate_dataset(std::move(models), std::move(queries), std::move(scores));
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  return load_dataset(read_manifest(manifest_path));
}

/// Writes a bundle as manifest.json plus one file per table into `dir`.
inline std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir,
                                           EmbeddingFormat format = EmbeddingFormat::text, std::uint64_t seed = 0) {
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.models = "models.tsv";
  m.scores = "scores.tsv";
  m.queries = "queries.tsv";
  m.embeddings = format == EmbeddingFormat::binary ? "embeddings.bin" : "embeddings.tsv";
  m.embeddings_format = format;
  m.k_levels = data.scores.k_levels();
  m.seed = seed;
  {
    auto out = io::open_out(dir / m.models);
    write_models(out, data.models);
  }
  {
    auto out = io::open_out(dir / m.scores);
    write_scores(out, data.scores);
  }
  {
    auto out = io::open_out(dir / m.queries);
    write_queries(out, data.queries);
  }
  EmbeddingTable emb;
  emb.dim = data.embedding_dim;
  for (const auto& q : data.queries) {
    emb.query_ids.push_back(q.query_id);
    emb.values.insert(emb.values.end(), q.embedding.begin(), q.embedding.end());
  }
  if (format == EmbeddingFormat::binary) {
    auto out = io::open_out(dir / m.embeddings, std::ios::out | std::ios::binary);
    write_embeddings_binary(out, emb);
  } else {
    auto out = io::open_out(dir / m.embeddings);
    write_embeddings_text(out, emb);
  }
  const auto manifest_path = dir / "manifest.json";
  write_manifest(manifest_path, m);
  return manifest_path;
}

// ---------------------------------------------------------------- plans

/// Plan table: metadata rows, then one row per query with the running total.
inline void write_plan(std::ostream& out, const RoutingPlan& plan) {
  io::write_version(out);
  out << "budget\t" << plan.budget.to_string() << '\n';
  out << "alpha\t" << io::format_real(plan.alpha) << '\n';
  out << "feasible\t" << (plan.feasible ? "true" : "false") << '\n';
  out << "total_cost\t" << plan.total_cost.to_string() << '\n';
  out << "predictor_overhead\t" << plan.predictor_overhead.to_string() << '\n';
  out << "query_id\tmodel_id\tpredicted_score\tcost\tcumulative_cost\toverflow\n";
  std::map<std::string_view, bool> overflow;
  for (const auto& q : plan.overflow_queries) overflow[q] = true;
  Decimal running;
  for (const auto& a : plan.assignments) {
    running += a.cost;
    out << a.query_id << '\t' << (a.routed() ? a.model_id : "-") << '\t' << io::format_real(a.predicted_score) << '\t'
        << a.cost.to_string() << '\t' << running.to_string() << '\t' << (overflow.count(a.query_id) ? 1 : 0) << '\n';
  }
}

inline RoutingPlan read_plan(std::istream& in, const std::string& name = "plan") {
  io::TableReader t(in, name);
  t.read_version();
  RoutingPlan plan;
  auto meta = [&](std::string_view key) {
    if (!t.next() || t.fields().size() != 2 || t.fields()[0] != key) t.fail(1, "expected '" + std::string(key) + "' row");
  };
  meta("budget");
  plan.budget = t.decimal(1);
  meta("alpha");
  plan.alpha = t.real(1);
  meta("feasible");
  plan.feasible = t.fields()[1] == "true";
  meta("total_cost");
  plan.total_cost = t.decimal(1);
  meta("predictor_overhead");
  plan.predictor_overhead = t.decimal(1);
  if (!t.next()) t.fail(1, "missing header row");
  t.expect_columns(6);
  Decimal running;
  while (t.next()) {
    t.expect_columns(6);
    Assignment a;
    a.query_id = std::string(t.fields()[0]);
    a.model_id = t.fields()[1] == "-" ? std::string() : std::string(t.fields()[1]);
    a.predicted_score = t.real(2);
    a.cost = t.decimal(3);
    running += a.cost;
    if (t.decimal(4) != running) t.fail(5, "cumulative_cost does not match the running sum");
    if (t.fields()[5] == "1") plan.overflow_queries.push_back(a.query_id);
    plan.assignments.push_back(std::move(a));
  }
  if (running != plan.total_cost) t.fail(1, "total_cost does not match the per-query costs");
  return plan;
}

}  // namespace routoo
