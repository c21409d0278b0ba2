// Copyright 2026 the drselect authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "drselect/corpusio.hpp"
#include "oracles.hpp"

namespace ds = drselect;
namespace fs = std::filesystem;

namespace {

ds::EmbeddingMatrix two_by_three() {
  return {"m", ds::Role::target_docs, 3, {"a", "b"}, {1.0f, 2.0f, 3.0f, -4.5f, 0.0f, 1e-3f}};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

template <typename Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const ds::Error& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST(Embeddings, FileSizesFollowTheFormat) {
  const auto dir = oracle::temp_dir("emb_size");
  ds::write_embeddings(two_by_three(), dir / "x.emb");
  EXPECT_EQ(fs::file_size(dir / "x.emb"), 24u + 24u);
  EXPECT_EQ(ds::detail::read_file((dir / "x.emb.ids").string()), "a\nb\n");
}

TEST(Embeddings, HeaderBytesAreLittleEndian) {
  const auto dir = oracle::temp_dir("emb_header");
  ds::write_embeddings(two_by_three(), dir / "x.emb");
  const auto bytes = ds::detail::read_file((dir / "x.emb").string());
  ASSERT_GE(bytes.size(), 24u);
  EXPECT_EQ(bytes.substr(0, 8), std::string("DREMB1\0\0", 8));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\0\0\0", 4));
  EXPECT_EQ(bytes.substr(12, 4), std::string("\x03\0\0\0", 4));
  EXPECT_EQ(bytes.substr(16, 8), std::string("\x02\0\0\0\0\0\0\0", 8));
  // 1.0f = 0x3f800000
  EXPECT_EQ(bytes.substr(24, 4), std::string("\0\0\x80\x3f", 4));
}

TEST(Embeddings, RoundTripIsBitwiseAndDeterministic) {
  std::mt19937_64 rng(5);
  const auto dir = oracle::temp_dir("emb_roundtrip");
  for (int trial = 0; trial < 20; ++trial) {
    auto m = oracle::random_matrix(rng, 1 + rng() % 40, 1 + rng() % 12);
    m.rows[0] = -0.0f;
    ds::write_embeddings(m, dir / "a.emb");
    ds::write_embeddings(m, dir / "b.emb");
    const auto back = ds::read_embeddings(dir / "a.emb", m.model_id, m.role);
    EXPECT_TRUE(ds::bitwise_equal(m, back));
    EXPECT_EQ(ds::detail::read_file((dir / "a.emb").string()), ds::detail::read_file((dir / "b.emb").string()));
  }
}

TEST(Embeddings, WriteRejectsDuplicateIds) {
  auto m = two_by_three();
  m.ids[1] = "a";
  const auto dir = oracle::temp_dir("emb_dup");
  EXPECT_NE(error_of([&] { ds::write_embeddings(m, dir / "x.emb"); }).find("duplicate id"), std::string::npos);
}

TEST(Embeddings, WriteRejectsZeroDimAndNonFinite) {
  const auto dir = oracle::temp_dir("emb_invalid");
  ds::EmbeddingMatrix zero{"m", ds::Role::target_docs, 0, {}, {}};
  EXPECT_NE(error_of([&] { ds::write_embeddings(zero, dir / "x.emb"); }).find("dim"), std::string::npos);
  auto m = two_by_three();
  m.rows[2] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_NE(error_of([&] { ds::write_embeddings(m, dir / "x.emb"); }).find("non-finite"), std::string::npos);
}

TEST(Embeddings, ReadDetectsTruncationAndBadMagic) {
  const auto dir = oracle::temp_dir("emb_trunc");
  ds::write_embeddings(two_by_three(), dir / "x.emb");
  auto bytes = ds::detail::read_file((dir / "x.emb").string());

  write_text(dir / "x.emb", bytes.substr(0, bytes.size() - 1));
  EXPECT_NE(error_of([&] { ds::read_embeddings(dir / "x.emb"); }).find("truncated payload"), std::string::npos);

  write_text(dir / "x.emb", bytes + "x");
  EXPECT_NE(error_of([&] { ds::read_embeddings(dir / "x.emb"); }).find("trailing"), std::string::npos);

  auto bad = bytes;
  bad[0] = 'X';
  write_text(dir / "x.emb", bad);
  EXPECT_NE(error_of([&] { ds::read_embeddings(dir / "x.emb"); }).find("bad magic"), std::string::npos);
}

TEST(Embeddings, ReadDetectsIdCountMismatchAndNaN) {
  const auto dir = oracle::temp_dir("emb_ids");
  ds::write_embeddings(two_by_three(), dir / "x.emb");
  write_text(dir / "x.emb.ids", "a\nb\nc\n");
  EXPECT_NE(error_of([&] { ds::read_embeddings(dir / "x.emb"); }).find("id count mismatch"), std::string::npos);

  write_text(dir / "x.emb.ids", "a\nb\n");
  auto bytes = ds::detail::read_file((dir / "x.emb").string());
  const std::uint32_t nan_bits = 0x7fc00000;
  for (int i = 0; i < 4; ++i) bytes[24 + i] = static_cast<char>((nan_bits >> (8 * i)) & 0xff);
  write_text(dir / "x.emb", bytes);
  EXPECT_NE(error_of([&] { ds::read_embeddings(dir / "x.emb"); }).find("non-finite"), std::string::npos);
}

TEST(Embeddings, MissingFileIsADataError) {
  try {
    ds::read_embeddings("/nonexistent/x.emb");
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::data);
  }
}

TEST(Embeddings, SelectPicksRowsById) {
  const auto m = two_by_three();
  const std::vector<std::string> want{"b"};
  const auto s = m.select(want);
  ASSERT_EQ(s.count(), 1u);
  EXPECT_EQ(s.rows, (std::vector<float>{-4.5f, 0.0f, 1e-3f}));
  const std::vector<std::string> missing{"zz"};
  EXPECT_THROW(m.select(missing), ds::Error);
}

TEST(Runs, ParsesOneListPerQuery) {
  const auto dir = oracle::temp_dir("run_parse");
  write_text(dir / "r.trec", "q1 Q0 d2 2 0.8 t\nq1 Q0 d1 1 0.9 t\nq2 Q0 d9 1 3 t\n");
  const auto runs = ds::read_run(dir / "r.trec");
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].query_id, "q1");
  ASSERT_EQ(runs[0].items.size(), 2u);
  EXPECT_EQ(runs[0].items[0], (ds::ScoredDoc{"d1", 0.9}));
  EXPECT_EQ(runs[0].items[1], (ds::ScoredDoc{"d2", 0.8}));
  EXPECT_EQ(runs[1].items.size(), 1u);
}

TEST(Runs, RejectsScoreOrderDuplicatesAndMalformedLines) {
  const auto dir = oracle::temp_dir("run_errors");
  write_text(dir / "r.trec", "q1 Q0 d1 1 0.8 t\nq1 Q0 d2 2 0.9 t\n");
  EXPECT_NE(error_of([&] { ds::read_run(dir / "r.trec"); }).find("score order"), std::string::npos);
  write_text(dir / "r.trec", "q1 Q0 d1 1 0.8 t\nq1 Q0 d1 2 0.7 t\n");
  EXPECT_NE(error_of([&] { ds::read_run(dir / "r.trec"); }).find("duplicate"), std::string::npos);
  write_text(dir / "r.trec", "q1 Q0 d1 1 0.8\n");
  EXPECT_NE(error_of([&] { ds::read_run(dir / "r.trec"); }).find("malformed"), std::string::npos);
  write_text(dir / "r.trec", "q1 Q0 d1 one 0.8 t\n");
  EXPECT_NE(error_of([&] { ds::read_run(dir / "r.trec"); }).find("malformed"), std::string::npos);
}

TEST(Runs, EmptyFileGivesNoLists) {
  const auto dir = oracle::temp_dir("run_empty");
  write_text(dir / "r.trec", "");
  EXPECT_TRUE(ds::read_run(dir / "r.trec").empty());
}

TEST(Runs, WriteThenReadPreservesScoresExactly) {
  const auto dir = oracle::temp_dir("run_roundtrip");
  std::vector<ds::RankedList> lists = {
      {"q1", {{"a", 0.1 + 0.2}, {"b", 1.0 / 3.0}, {"c", -1e-300}}, ds::SimilarityKind::dot}};
  std::sort(lists[0].items.begin(), lists[0].items.end(), [](auto& x, auto& y) { return x.score > y.score; });
  ds::write_run(lists, dir / "r.trec", "tag");
  const auto back = ds::read_run(dir / "r.trec");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].items, lists[0].items);
}

TEST(Qrels, ParsesGradesAndRejectsBadInput) {
  const auto dir = oracle::temp_dir("qrels");
  write_text(dir / "q.txt", "q1 0 d1 1\nq1 0 d2 2\n");
  const auto q = ds::read_qrels(dir / "q.txt");
  EXPECT_EQ(q.grade("q1", "d1"), 1);
  EXPECT_EQ(q.grade("q1", "d2"), 2);
  EXPECT_EQ(q.grade("q1", "d3"), 0);

  write_text(dir / "q.txt", "q1 0 d1 1\nq1 0 d1 1\n");
  EXPECT_NE(error_of([&] { ds::read_qrels(dir / "q.txt"); }).find("duplicate"), std::string::npos);
  write_text(dir / "q.txt", "q1 0 d1 -1\n");
  EXPECT_NE(error_of([&] { ds::read_qrels(dir / "q.txt"); }).find("negative"), std::string::npos);
  write_text(dir / "q.txt", "q1 0 d1\n");
  EXPECT_NE(error_of([&] { ds::read_qrels(dir / "q.txt"); }).find("malformed"), std::string::npos);
}

TEST(Effectiveness, CsvRoundTripAndRangeCheck) {
  const auto dir = oracle::temp_dir("eff");
  ds::EffectivenessTable t;
  t.set("m1", "d1", 0.458);
  t.set("m2", "d1", 0.1 + 0.2);
  ds::write_effectiveness(t, dir / "e.csv", "# provenance\n");
  const auto back = ds::read_effectiveness(dir / "e.csv");
  EXPECT_EQ(back.at("m1", "d1"), 0.458);
  EXPECT_EQ(back.at("m2", "d1"), 0.1 + 0.2);
  EXPECT_THROW(back.at("m3", "d1"), ds::Error);
  EXPECT_THROW(t.set("m1", "d2", 1.5), ds::Error);

  write_text(dir / "e.csv", "model,dataset,value\nm1,d1,-0.1\n");
  EXPECT_THROW(ds::read_effectiveness(dir / "e.csv"), ds::Error);
  write_text(dir / "e.csv", "model,value\n");
  EXPECT_THROW(ds::read_effectiveness(dir / "e.csv"), ds::Error);
}

TEST(Registry, RejectsDuplicateIds) {
  const auto j = nlohmann::json::parse(R"([{"id":"a"},{"id":"a","similarity":"cosine"}])");
  EXPECT_THROW(ds::registry_from_json(j), ds::Error);
  for (const char* bad : {"a b", "a,b", "a/b", "..", "q\"x"}) {
    EXPECT_THROW(ds::registry_from_json(nlohmann::json::array({nlohmann::json{{"id", bad}}})), ds::Error) << bad;
  }
  const auto ok = ds::registry_from_json(nlohmann::json::parse(R"([{"id":"a"},{"id":"b","similarity":"cosine"}])"));
  EXPECT_EQ(ok.models[1].similarity, ds::SimilarityKind::cosine);
  EXPECT_EQ(*ok.position("b"), 1u);
}

TEST(QueriesTsv, RejectsEmptyTextAndDuplicates) {
  const auto dir = oracle::temp_dir("tsv");
  write_text(dir / "q.tsv", "q1\thello world\nq2\tsecond\n");
  const auto q = ds::read_queries_tsv(dir / "q.tsv");
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q[0].second, "hello world");
  write_text(dir / "q.tsv", "q1\t  \n");
  EXPECT_THROW(ds::read_queries_tsv(dir / "q.tsv"), ds::Error);
  write_text(dir / "q.tsv", "q1\ta\nq1\tb\n");
  EXPECT_THROW(ds::read_queries_tsv(dir / "q.tsv"), ds::Error);
}

TEST(Bundle, EmbeddingIdsMustMatchBundleIds) {
  const auto dir = oracle::temp_dir("bundle");
  write_text(dir / "queries.tsv", "q1\tone\nq2\ttwo\n");
  write_text(dir / "docs.txt", "a\nb\n");
  fs::create_directories(dir / "embeddings" / "m");
  ds::write_embeddings(two_by_three(), dir / "embeddings" / "m" / "docs.emb");
  ds::EmbeddingMatrix q{"m", ds::Role::target_queries, 3, {"q1", "q3"}, std::vector<float>(6, 1.0f)};
  ds::write_embeddings(q, dir / "embeddings" / "m" / "queries.emb");

  const auto b = ds::load_bundle("t", dir);
  EXPECT_EQ(b.load_docs("m", ds::Role::target_docs).count(), 2u);
  EXPECT_THROW(b.load_queries("m", ds::Role::target_queries), ds::Error);
  EXPECT_NE(error_of([&] { b.load_docs("other", ds::Role::target_docs); }).find("missing embedding file"),
            std::string::npos);
}
