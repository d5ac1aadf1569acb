#include <gtest/gtest.h>

#include <cstring>

#include "ctxprobe/error.hpp"
#include "ctxprobe/io.hpp"
#include "ctxprobe/trace_store.hpp"
#include "fixtures.hpp"
#include "trace_fixtures.hpp"

using namespace ctxprobe;

namespace {

TraceStore sample_store() {
  TraceStore s;
  s.model_checksum = "abc";
  s.dataset_id = "unit";
  s.num_layers = 3;
  s.hidden = 4;
  s.intermediate = 8;
  s.policy.pooling = Pooling::kMeanPieces;
  auto traces = fixtures::random_traces(3, 3, 4, 8, 12);
  for (auto& t : traces) t.policy = s.policy;
  for (int i = 0; i < 4; ++i) {
    StoreEntry e;
    e.sample = {"bank", i % 2 ? "river" : "money", "The bank " + std::to_string(i), 0, DatasetSource::kCPWS, {}};
    e.sentence_id = "s" + std::to_string(i);
    if (i == 2) {
      e.skip_reason = "keyword not found";
    } else {
      e.record = s.traces.size();
      traces[s.traces.size()].sentence_id = e.sentence_id;
      s.traces.push_back(traces[s.traces.size()]);
    }
    s.entries.push_back(e);
  }
  s.manifest = {{"command", "extract"}};
  return s;
}

}  // namespace

TEST(Container, RoundTrip) {
  FloatContainer c{{{"format", "x"}, {"n", 3}}, {1.0f, -2.5f, 3.0f}};
  const auto bytes = serialize_container(c);
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), 8);
  EXPECT_EQ(bytes.size(), 8 + len + 12);
  const auto back = parse_container(bytes);
  EXPECT_EQ(back.payload, c.payload);
  EXPECT_EQ(back.header.at("payload_floats"), 3);
  EXPECT_EQ(back.header.at("format"), "x");
}

TEST(Container, Truncation) {
  FloatContainer c{{{"format", "x"}}, {1.0f, 2.0f}};
  auto bytes = serialize_container(c);
  EXPECT_THROW(parse_container(std::span(bytes).first(5)), ParseError);
  EXPECT_THROW(parse_container(std::span(bytes).first(20)), ParseError);
  bytes.pop_back();
  EXPECT_THROW(parse_container(bytes), ShapeError);
}

TEST(Container, UndeclaredPayloadRunsToEnd) {
  const std::string head = R"({"format":"g"})";
  std::vector<unsigned char> bytes(8);
  const std::uint64_t n = head.size();
  std::memcpy(bytes.data(), &n, 8);
  bytes.insert(bytes.end(), head.begin(), head.end());
  const float v[2] = {4.0f, 5.0f};
  bytes.insert(bytes.end(), reinterpret_cast<const unsigned char*>(v), reinterpret_cast<const unsigned char*>(v) + 8);
  EXPECT_EQ(parse_container(bytes).payload, (std::vector<float>{4.0f, 5.0f}));
  bytes.pop_back();
  EXPECT_THROW(parse_container(bytes), ShapeError);
}

TEST(TraceStore, RoundTripIsExact) {
  fixtures::TempDir tmp("store");
  const auto s = sample_store();
  EXPECT_NO_THROW(s.validate());
  s.write(tmp / "s.ctxs");
  const auto r = TraceStore::read(tmp / "s.ctxs");
  EXPECT_EQ(r.traces, s.traces);
  EXPECT_EQ(r.policy, s.policy);
  EXPECT_EQ(r.entries.size(), 4u);
  EXPECT_EQ(r.skipped(), 1u);
  EXPECT_EQ(r.entries[2].skip_reason, "keyword not found");
  EXPECT_EQ(r.entries[3].record, 2u);
  EXPECT_EQ(r.entries[1].sample, s.entries[1].sample);
  EXPECT_EQ(r.manifest, s.manifest);
  EXPECT_EQ(r.record_floats(), 4u + 3u * (4u + 8u + 4u));
  // Re-serialisation is byte-identical.
  r.write(tmp / "t.ctxs");
  EXPECT_EQ(read_binary_file(tmp / "s.ctxs"), read_binary_file(tmp / "t.ctxs"));
}

TEST(TraceStore, TraceOfSkippedIsCoverageError) {
  const auto s = sample_store();
  EXPECT_EQ(s.trace_of(3).sentence_id, "s3");
  EXPECT_THROW(s.trace_of(2), CoverageError);
  EXPECT_EQ(s.samples().size(), 4u);
}

TEST(TraceStore, TruncatedFileRejected) {
  fixtures::TempDir tmp("store");
  sample_store().write(tmp / "s.ctxs");
  auto bytes = read_binary_file(tmp / "s.ctxs");
  bytes.resize(bytes.size() - 4);
  write_file_atomic(tmp / "bad.ctxs", bytes);
  EXPECT_THROW(TraceStore::read(tmp / "bad.ctxs"), ShapeError);
  EXPECT_THROW(TraceStore::read(tmp / "missing.ctxs"), Error);
}

TEST(TraceStore, WrongFormatRejected) {
  fixtures::TempDir tmp("store");
  write_container(tmp / "g.bin", FloatContainer{{{"format", "other"}}, {}});
  EXPECT_THROW(TraceStore::read(tmp / "g.bin"), ParseError);
  auto c = sample_store().to_container();
  c.header["version"] = 99;
  write_container(tmp / "v.bin", c);
  EXPECT_THROW(TraceStore::read(tmp / "v.bin"), ParseError);
}

TEST(TraceStore, HeaderRecordCountMismatch) {
  auto c = sample_store().to_container();
  c.payload.resize(c.payload.size() - c.header.at("record_floats").get<std::size_t>());
  EXPECT_THROW(TraceStore::from_container(c), ShapeError);
}

TEST(TraceStore, ValidateCatchesIncompleteTraces) {
  auto s = sample_store();
  s.traces[1].layers[2].acts.pop_back();
  EXPECT_THROW(s.validate(), CoverageError);
  auto t = sample_store();
  t.entries[0].record.reset();
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(TraceStore, HeaderDocumentsLayout) {
  const auto c = sample_store().to_container();
  for (const char* k : {"format", "version", "model_checksum", "capture_policy", "dataset_id", "num_layers", "hidden",
                        "intermediate", "record_floats", "num_records", "record_layout", "samples", "num_skipped",
                        "manifest"})
    EXPECT_TRUE(c.header.contains(k)) << k;
  EXPECT_EQ(c.header.at("num_skipped"), 1);
}
