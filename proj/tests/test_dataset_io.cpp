#include <chrono>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "routoo/dataset_io.hpp"
#include "routoo/prep.hpp"
#include "temp_dir.hpp"

using namespace routoo;

namespace {

Dataset small_bundle() {
  SynthSpec spec;
  spec.models = 4;
  spec.queries = 30;
  spec.dim = 5;
  spec.k_levels = 3;
  spec.seed = 11;
  Dataset d = synth_generate(spec);
  d.queries[3].tokens = 250;
  d.queries[7].tokens = 4000;
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST(DatasetIo, TextRoundTripIsIdentity) {
  TempDir dir;
  const Dataset d = small_bundle();
  const auto manifest = write_dataset(d, dir.path(), EmbeddingFormat::text, 5);
  const Dataset back = load_dataset(manifest);
  EXPECT_EQ(back, d);
  EXPECT_EQ(read_manifest(manifest).seed, 5u);
}

TEST(DatasetIo, BinaryRoundTripIsIdentity) {
  TempDir dir;
  const Dataset d = small_bundle();
  const auto manifest = write_dataset(d, dir.path(), EmbeddingFormat::binary);
  EXPECT_EQ(read_manifest(manifest).embeddings_format, EmbeddingFormat::binary);
  EXPECT_EQ(load_dataset(manifest), d);
}

TEST(DatasetIo, MissingScoreCellNamesTheCell) {
  std::istringstream in(
      "format_version\t1\n"
      "k_levels\t2\n"
      "model_id\tq1\tq2\tq3\n"
      "a\t1\t0\t1\n"
      "b\t0\t\t1\n");
  try {
    read_scores(in, "scores.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
    EXPECT_EQ(e.column(), 3u);
    EXPECT_NE(std::string(e.what()).find("(b, q2)"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, ShortScoreRowNamesTheFirstMissingCell) {
  std::istringstream in(
      "format_version\t1\n"
      "k_levels\t2\n"
      "model_id\tq1\tq2\tq3\n"
      "a\t1\t0\n");
  try {
    read_scores(in, "scores.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("(a, q3)"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, ParseErrorsCarryLineAndColumn) {
  std::istringstream in(
      "format_version\t1\n"
      "model_id\tprice_per_1m_tokens\tavg_tokens_per_query\tsize_bucket\tdisplay_name\n"
      "a\t0.2\t1000\t7b\tA\n"
      "b\tcheap\t1000\t7b\tB\n");
  try {
    read_models(in, "models.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.file(), "models.tsv");
    EXPECT_EQ(e.line(), 4u);
    EXPECT_EQ(e.column(), 2u);
    EXPECT_EQ(std::string(e.what()).rfind("models.tsv:4:2:", 0), 0u) << e.what();
  }
}

TEST(DatasetIo, UnsupportedVersionIsRejected) {
  std::istringstream in("format_version\t2\nk_levels\t2\nmodel_id\tq1\na\t1\n");
  EXPECT_THROW(read_scores(in), ParseError);
}

TEST(DatasetIo, BadEmbeddingMagicIsRejected) {
  std::istringstream in(std::string("NOTEMBED\x01\x00\x00\x00", 12));
  EXPECT_THROW(read_embeddings_binary(in), ParseError);
}

TEST(DatasetIo, ManifestErrors) {
  TempDir dir;
  const auto manifest = write_dataset(small_bundle(), dir.path());

  spit(dir / "bad.json", "{ not json");
  EXPECT_THROW(read_manifest(dir / "bad.json"), ParseError);

  auto text = slurp(manifest);
  spit(dir / "v2.json", std::string(text).replace(text.find("\"format_version\": 1"), 19, "\"format_version\": 2"));
  EXPECT_THROW(read_manifest(dir / "v2.json"), ParseError);

  spit(dir / "missing.json", std::string(text).replace(text.find("models.tsv"), 10, "nothere.tsv"));
  EXPECT_THROW(read_manifest(dir / "missing.json"), std::runtime_error);

  spit(dir / "k.json", std::string(text).replace(text.find("\"k_levels\": 3"), 13, "\"k_levels\": 2"));
  try {
    load_dataset(dir / "k.json");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::invalid_levels);
  }
}

TEST(DatasetIo, QueryWithoutEmbeddingIsReferentialError) {
  TempDir dir;
  const auto manifest = write_dataset(small_bundle(), dir.path());
  auto text = slurp(dir / "embeddings.tsv");
  const auto first_row = text.find("\nq00\t");
  ASSERT_NE(first_row, std::string::npos);
  text.replace(first_row + 1, 3, "qzz");
  spit(dir / "embeddings.tsv", text);
  try {
    load_dataset(manifest);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::unknown_id);
    EXPECT_EQ(e.offending_id(), "q00");
  }
}

TEST(DatasetIo, CrlfLinesAreAccepted) {
  std::istringstream in("format_version\t1\r\nk_levels\t2\r\nmodel_id\tq1\r\na\t1\r\n\r\n");
  const auto s = read_scores(in);
  EXPECT_EQ(s.at(0, 0), 1);
}

TEST(DatasetIo, PlanRoundTrip) {
  RoutingPlan plan;
  plan.budget = Decimal::parse("1.5");
  plan.alpha = 0.1;
  plan.feasible = false;
  plan.predictor_overhead = Decimal::parse("0.00001");
  plan.assignments = {
      {"q1", "a", 1.0, Decimal::parse("0.0002")},
      {"q2", "", 0.0, Decimal()},
      {"q3", "b", 0.5, Decimal::parse("0.0009")},
  };
  plan.total_cost = Decimal::parse("0.0011");
  plan.overflow_queries = {"q2"};

  std::stringstream ss;
  write_plan(ss, plan);
  EXPECT_EQ(read_plan(ss), plan);
}

TEST(DatasetIo, PlanWithWrongRunningTotalIsRejected) {
  std::istringstream in(
      "format_version\t1\nbudget\t1\nalpha\t1\nfeasible\ttrue\ntotal_cost\t0.3\npredictor_overhead\t0\n"
      "query_id\tmodel_id\tpredicted_score\tcost\tcumulative_cost\toverflow\n"
      "q1\ta\t1\t0.1\t0.1\t0\n"
      "q2\ta\t1\t0.2\t0.2\t0\n");
  try {
    read_plan(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9u);
  }
}

TEST(DatasetIo, LargeSynthBundleLoadsQuickly) {
  SynthSpec spec;
  spec.models = 56;
  spec.queries = 1000;
  spec.dim = 32;
  spec.seed = 3;
  TempDir dir;
  for (auto format : {EmbeddingFormat::text, EmbeddingFormat::binary}) {
    const auto manifest = write_dataset(synth_generate(spec), dir.path(), format);
    const auto start = std::chrono::steady_clock::now();
    const Dataset d = load_dataset(manifest);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    EXPECT_EQ(d.scores.num_models(), 56u);
    EXPECT_EQ(d.scores.num_queries(), 1000u);
    EXPECT_LT(took.count(), 1.0);
  }
}
