#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "../vendor/json.hpp"
#include "grw/data_io.hpp"
#include "grw/error.hpp"

using namespace grw;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("grwlab_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::InvalidArgument;
}

IdxImages tiny_images() { return IdxImages{2, 2, 2, {0, 255, 17, 128, 3, 4, 5, 200}}; }

void expect_unit_ball(const Dataset& d) {
  double largest = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double n = norm2(d.X.column(i));
    EXPECT_LE(n, 1.0 + 1e-9);
    largest = std::max(largest, n);
  }
  EXPECT_GE(largest, 0.5);
}

}  // namespace

TEST(Idx, ImagesRoundTrip) {
  const IdxImages img = tiny_images();
  const auto bytes = encode_idx_images(img);
  EXPECT_EQ(bytes[2], 0x08);
  EXPECT_EQ(bytes[3], 0x03);
  const IdxImages back = parse_idx_images(bytes);
  EXPECT_EQ(back.count, 2u);
  EXPECT_EQ(back.rows, 2u);
  EXPECT_EQ(back.cols, 2u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Idx, LabelsRoundTrip) {
  const IdxLabels lbl{{7, 0}};
  const auto bytes = encode_idx_labels(lbl);
  EXPECT_EQ(bytes[3], 0x01);
  EXPECT_EQ(parse_idx_labels(bytes).labels, lbl.labels);
}

TEST(Idx, HeaderMagicValues) {
  EXPECT_EQ(kIdxImagesMagic, 2051u);
  EXPECT_EQ(kIdxLabelsMagic, 2049u);
}

TEST(Idx, WrongMagicAndTruncation) {
  auto bytes = encode_idx_images(tiny_images());
  auto bad = bytes;
  bad[3] = 0x01;
  EXPECT_EQ(kind_of([&] { parse_idx_images(bad); }), ErrorKind::FormatError);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_EQ(kind_of([&] { parse_idx_images(cut); }), ErrorKind::FormatError);
  EXPECT_EQ(kind_of([&] { parse_idx_labels(bytes); }), ErrorKind::FormatError);
  EXPECT_EQ(kind_of([] { parse_idx_labels(std::vector<std::uint8_t>{0, 0}); }), ErrorKind::FormatError);
}

TEST(Idx, StoreScalesPixels) {
  const MnistStore s = make_mnist_store(tiny_images(), IdxLabels{{0, 1}});
  ASSERT_EQ(s.images.size(), 2u);
  EXPECT_EQ(s.images[0][1], 1.0);
  EXPECT_EQ(s.images[0][0], 0.0);
  EXPECT_DOUBLE_EQ(s.images[1][3], 200.0 / 255.0);
  EXPECT_EQ(s.labels, (std::vector<int>{0, 1}));
  EXPECT_THROW(make_mnist_store(tiny_images(), IdxLabels{{0}}), Error);
}

TEST(Idx, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([] { read_file_bytes("/nonexistent/grwlab/file"); }), ErrorKind::IoError);
}

TEST(PaperSubset, FromFixture) {
  const fs::path dir = scratch_dir("fixture");
  write_synthetic_idx_fixture(dir, 20, 3);
  const auto d = try_load_paper_subset(dir, false);
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(d->size(), 6u);
  EXPECT_EQ(d->dim(), 784u);
  EXPECT_EQ(d->groups.sizes, (std::vector<std::size_t>{5, 1}));
  EXPECT_EQ(d->Y, (Vector{0, 0, 0, 0, 0, 1}));
  double largest = 0.0;
  for (std::size_t i = 0; i < 6; ++i) largest = std::max(largest, norm2(d->X.column(i)));
  EXPECT_NEAR(largest, 1.0, 1e-15);
  EXPECT_GT(extreme_eigenvalues(gram(d->X)).min, 0.0);

  const auto c = try_load_paper_subset(dir, true);
  ASSERT_TRUE(c.has_value());
  EXPECT_TRUE(c->classification);
  EXPECT_EQ(c->Y, (Vector{1, 1, 1, 1, 1, -1}));
  EXPECT_EQ(c->X, d->X);
  // Deterministic given the same files.
  EXPECT_EQ(try_load_paper_subset(dir, false)->X, d->X);
  fs::remove_all(dir);
}

TEST(PaperSubset, MissingFilesGiveNothing) {
  const fs::path dir = scratch_dir("empty");
  EXPECT_FALSE(try_load_paper_subset(dir, false).has_value());
  fs::remove_all(dir);
}

TEST(PaperSubset, InsufficientDigits) {
  IdxImages img{3, 1, 1, {1, 2, 3}};
  const MnistStore s = make_mnist_store(img, IdxLabels{{0, 0, 1}});
  EXPECT_EQ(kind_of([&] { paper_subset(s, false); }), ErrorKind::InvalidArgument);
}

TEST(SynthGroups, Deterministic) {
  const std::vector<Vector> means{{0.3, 0.0, 0.0}, {-0.3, 0.0, 0.0}};
  const Dataset a = synth_groups(3, {5, 1}, means, 0.1, 42, false);
  const Dataset b = synth_groups(3, {5, 1}, means, 0.1, 42, false);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.Y, b.Y);
  EXPECT_NE(synth_groups(3, {5, 1}, means, 0.1, 43, false).X, a.X);
  expect_unit_ball(a);
}

TEST(SynthGroups, LabelsAndGroups) {
  const std::vector<Vector> means{{0.5, 0.0}, {0.0, 0.5}, {-0.5, 0.0}};
  const Dataset r = synth_groups(2, {2, 3, 1}, means, 0.05, 1, false);
  EXPECT_EQ(r.Y, (Vector{0, 0, 1, 1, 1, 2}));
  const Dataset c = synth_groups(2, {2, 3, 1}, means, 0.05, 1, true);
  EXPECT_EQ(c.Y, (Vector{1, 1, -1, -1, -1, 1}));
  EXPECT_EQ(c.groups.labels, (std::vector<std::size_t>{0, 0, 1, 1, 1, 2}));
}

TEST(SynthGroups, EmptyGroupRejected) {
  EXPECT_EQ(kind_of([] { synth_groups(2, {3, 0}, {{0.1, 0.0}, {0.0, 0.1}}, 0.1, 1, false); }),
            ErrorKind::InvalidArgument);
}

TEST(SynthGroups, NoiselessOppositeMeansGiveMeanDirection) {
  const Dataset d = synth_groups(2, {3, 3}, {{0.6, 0.8}, {-0.6, -0.8}}, 0.0, 5, true);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(d.X(0, i), (i < 3 ? 0.6 : -0.6), 1e-15);
    EXPECT_NEAR(d.X(1, i), (i < 3 ? 0.8 : -0.8), 1e-15);
  }
}

TEST(SynthGroups, MeanRecovery) {
  const double noise = 0.05;
  const std::vector<Vector> means{{0.4, 0.1, -0.2}, {-0.3, 0.3, 0.0}};
  const std::size_t size = 400;
  const Dataset d = synth_groups(3, {size, size}, means, noise, 9, false);
  expect_unit_ball(d);
  std::vector<Vector> emp(2, Vector(3, 0.0));
  for (std::size_t i = 0; i < d.size(); ++i) axpy(1.0 / size, d.X.column(i), emp[d.groups.labels[i]]);
  // Undo the common scale factor before comparing.
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    num += dot(emp[k], means[k]);
    den += dot(means[k], means[k]);
  }
  const double s = num / den;
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_LE(std::abs(emp[k][j] / s - means[k][j]), 4 * noise / std::sqrt(double(size)));
}

TEST(Fallback, Shapes) {
  const Dataset r = fallback_regression_dataset();
  EXPECT_EQ(r.dim(), 784u);
  EXPECT_EQ(r.groups.sizes, (std::vector<std::size_t>{5, 1}));
  expect_unit_ball(r);
  EXPECT_GT(extreme_eigenvalues(gram(r.X)).min, 0.0);
  const Dataset c = fallback_classification_dataset();
  EXPECT_TRUE(c.classification);
  expect_unit_ball(c);
}

TEST(DataDir, HonoursEnvironment) {
  ::setenv("GRWLAB_DATA_DIR", "/tmp/somewhere", 1);
  EXPECT_EQ(data_dir(), fs::path("/tmp/somewhere"));
  ::unsetenv("GRWLAB_DATA_DIR");
  EXPECT_EQ(data_dir(), fs::path("data"));
}

TEST(Trace, EmptyIsHeaderOnly) {
  TrainTrace t;
  t.num_groups = 2;
  EXPECT_EQ(trace_to_csv(t), trace_csv_header(2) + "\n");
  EXPECT_EQ(trace_csv_header(2),
            "epoch,weighted_risk,risk,group_risk_1,group_risk_2,theta_gap_ref,theta_norm,cos_ref,q_group_1,q_group_2");
  EXPECT_TRUE(parse_trace_csv(trace_to_csv(t)).rows.empty());
}

TEST(Trace, OneRowRoundTrip) {
  TrainTrace t;
  t.num_groups = 2;
  TraceRow r;
  r.epoch = 1234;
  r.weighted_risk = 0.1;
  r.risk = 1.0 / 3.0;
  r.group_risks = {std::nextafter(0.2, 1.0), 1e-300};
  r.theta_gap_ref = std::nan("");
  r.theta_norm = 0.63;
  r.cos_ref = -0.999999999999;
  r.q_group = {5.0 / 6.0, 1.0 / 6.0};
  t.rows.push_back(r);
  const TrainTrace back = parse_trace_csv(trace_to_csv(t));
  ASSERT_EQ(back.rows.size(), 1u);
  const TraceRow& b = back.rows[0];
  EXPECT_EQ(b.epoch, r.epoch);
  EXPECT_EQ(b.weighted_risk, r.weighted_risk);
  EXPECT_EQ(b.risk, r.risk);
  EXPECT_EQ(b.group_risks, r.group_risks);
  EXPECT_TRUE(std::isnan(b.theta_gap_ref));
  EXPECT_EQ(b.theta_norm, r.theta_norm);
  EXPECT_EQ(b.cos_ref, r.cos_ref);
  EXPECT_EQ(b.q_group, r.q_group);
}

TEST(Trace, RejectsMalformed) {
  EXPECT_EQ(kind_of([] { parse_trace_csv(""); }), ErrorKind::FormatError);
  EXPECT_EQ(kind_of([] { parse_trace_csv("a,b,c\n"); }), ErrorKind::FormatError);
  EXPECT_EQ(kind_of([] { parse_trace_csv(trace_csv_header(1) + "\n1,2\n"); }), ErrorKind::FormatError);
}

TEST(Trace, ExportJsonAndCsv) {
  const fs::path dir = scratch_dir("trace");
  TrainTrace t;
  t.num_groups = 1;
  TraceRow r;
  r.epoch = 0;
  r.group_risks = {0.5};
  r.q_group = {1.0};
  t.rows.push_back(r);
  export_trace(t, dir / "t.json", TraceFormat::Json, "abc123");
  export_trace(t, dir / "t.csv", TraceFormat::Csv);
  std::ifstream in(dir / "t.json");
  const auto doc = nlohmann::json::parse(in);
  EXPECT_EQ(doc["config_hash"], "abc123");
  EXPECT_EQ(doc["rows"].size(), 1u);
  EXPECT_EQ(doc["rows"][0]["group_risk_1"], 0.5);
  const auto bytes = read_file_bytes(dir / "t.csv");
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), trace_to_csv(t));
  EXPECT_EQ(kind_of([&] { export_trace(t, "/proc/grwlab/none.csv", TraceFormat::Csv); }), ErrorKind::IoError);
  fs::remove_all(dir);
}
