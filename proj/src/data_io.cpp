#include "grw/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "grw/error.hpp"
#include "json.hpp"
#include "parse_util.hpp"

namespace grw {

namespace {

constexpr std::size_t kMnistSide = 28;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) fail(ErrorKind::FormatError, "truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

double label_for_group(std::size_t k) { return k % 2 == 0 ? 1.0 : -1.0; }

// Divides every column by the largest column norm.
void scale_to_unit_ball(Matrix& x) {
  double largest = 0.0;
  for (std::size_t i = 0; i < x.cols(); ++i) largest = std::max(largest, norm2(x.column(i)));
  if (!(largest > 0.0)) fail(ErrorKind::InvalidArgument, "all samples are zero");
  for (double& v : x.data()) v /= largest;
}

Vector unit_gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (double& x : v) x = normal(rng);
  const double n = norm2(v);
  for (double& x : v) x /= n;
  return v;
}

// Unit vector orthogonal to u.
Vector orthogonal_unit(std::mt19937_64& rng, const Vector& u) {
  Vector v = unit_gaussian(rng, u.size());
  axpy(-dot(u, v), u, v);
  const double n = norm2(v);
  for (double& x : v) x /= n;
  return v;
}

std::filesystem::path first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    const auto p = dir / name;
    if (std::filesystem::exists(p)) return p;
  }
  return {};
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = X.cols();
  if (n == 0 || X.rows() == 0) fail(ErrorKind::InvalidArgument, "dataset is empty");
  if (Y.size() != n) fail(ErrorKind::InvalidArgument, "one target per sample expected");
  if (groups.num_samples() != n) fail(ErrorKind::InvalidArgument, "one group label per sample expected");
  groups.validate();
  if (!X.all_finite() || !all_finite(Y)) fail(ErrorKind::InvalidArgument, "dataset has non-finite entries");
  if (classification) {
    for (double y : Y) {
      if (y != 1.0 && y != -1.0) fail(ErrorKind::InvalidArgument, "classification labels must be -1 or +1");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (norm2(X.column(i)) > 1.0 + 1e-9) fail(ErrorKind::InvalidArgument, "sample outside the unit ball");
  }
}

double Dataset::max_column_norm() const {
  double largest = 0.0;
  for (std::size_t i = 0; i < X.cols(); ++i) largest = std::max(largest, norm2(X.column(i)));
  return largest;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) fail(ErrorKind::FormatError, "bad IDX image magic " + std::to_string(magic));
  IdxImages out;
  out.count = read_be32(bytes, 4);
  out.rows = read_be32(bytes, 8);
  out.cols = read_be32(bytes, 12);
  const std::size_t payload = out.count * out.rows * out.cols;
  if (bytes.size() < 16 + payload) fail(ErrorKind::FormatError, "truncated IDX image payload");
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

IdxLabels parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) fail(ErrorKind::FormatError, "bad IDX label magic " + std::to_string(magic));
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() < 8 + count) fail(ErrorKind::FormatError, "truncated IDX label payload");
  IdxLabels out;
  out.labels.assign(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  return out;
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    fail(ErrorKind::InvalidArgument, "pixel count does not match the image dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const IdxLabels& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.labels.size());
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.labels.size()));
  out.insert(out.end(), labels.labels.begin(), labels.labels.end());
  return out;
}

MnistStore make_mnist_store(const IdxImages& images, const IdxLabels& labels) {
  if (images.count != labels.labels.size()) fail(ErrorKind::FormatError, "image and label counts differ");
  MnistStore store;
  store.rows = images.rows;
  store.cols = images.cols;
  const std::size_t size = images.rows * images.cols;
  store.images.reserve(images.count);
  for (std::size_t i = 0; i < images.count; ++i) {
    Vector img(size);
    for (std::size_t p = 0; p < size; ++p) img[p] = images.pixels[i * size + p] / 255.0;
    store.images.push_back(std::move(img));
    store.labels.push_back(labels.labels[i]);
  }
  return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

MnistStore load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return make_mnist_store(parse_idx_images(read_file_bytes(images_path)),
                          parse_idx_labels(read_file_bytes(labels_path)));
}

Dataset paper_subset(const MnistStore& store, bool classification) {
  std::vector<std::size_t> zeros;
  std::optional<std::size_t> one;
  for (std::size_t i = 0; i < store.labels.size() && (zeros.size() < 5 || !one); ++i) {
    if (store.labels[i] == 0 && zeros.size() < 5) zeros.push_back(i);
    if (store.labels[i] == 1 && !one) one = i;
  }
  if (zeros.size() < 5 || !one) fail(ErrorKind::InvalidArgument, "store needs at least five 0s and one 1");
  std::vector<Vector> columns;
  for (std::size_t i : zeros) columns.push_back(store.images[i]);
  columns.push_back(store.images[*one]);

  Dataset data;
  data.X = Matrix::from_columns(columns);
  scale_to_unit_ball(data.X);
  data.groups = GroupInfo::from_sizes({5, 1});
  data.classification = classification;
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t k = data.groups.labels[i];
    data.Y.push_back(classification ? label_for_group(k) : static_cast<double>(k));
  }
  std::ostringstream prov;
  prov << "mnist subset: digit-0 indices";
  for (std::size_t i : zeros) prov << ' ' << i;
  prov << ", digit-1 index " << *one;
  data.provenance = prov.str();
  data.validate();
  return data;
}

Dataset synth_groups(std::size_t d, const std::vector<std::size_t>& sizes, const std::vector<Vector>& means,
                     double noise, std::uint64_t seed, bool classification) {
  if (d == 0) fail(ErrorKind::InvalidArgument, "synth_groups needs d >= 1");
  if (sizes.empty() || sizes.size() != means.size()) {
    fail(ErrorKind::InvalidArgument, "one mean per group expected");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) fail(ErrorKind::InvalidArgument, "noise must be >= 0");
  for (const Vector& m : means) {
    if (m.size() != d) fail(ErrorKind::InvalidArgument, "group mean has the wrong dimension");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> columns;
  Dataset data;
  data.groups = GroupInfo::from_sizes(sizes);
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    for (std::size_t s = 0; s < sizes[k]; ++s) {
      Vector x = means[k];
      for (double& v : x) v += noise * normal(rng);
      columns.push_back(std::move(x));
      data.Y.push_back(classification ? label_for_group(k) : static_cast<double>(k));
    }
  }
  data.X = Matrix::from_columns(columns);
  scale_to_unit_ball(data.X);
  data.classification = classification;
  std::ostringstream prov;
  prov << "synthetic groups: d=" << d << ", noise=" << detail::format_short(noise) << ", seed=" << seed;
  data.provenance = prov.str();
  data.validate();
  return data;
}

Dataset fallback_regression_dataset() {
  constexpr std::size_t d = kMnistSide * kMnistSide;
  std::mt19937_64 rng(1);
  Vector m1 = unit_gaussian(rng, d);
  Vector m2 = orthogonal_unit(rng, m1);
  for (double& v : m1) v *= 0.35;
  for (double& v : m2) v *= 0.35;
  Dataset data = synth_groups(d, {5, 1}, {m1, m2}, 0.9 / std::sqrt(static_cast<double>(d)), 11, false);
  data.provenance = "fallback regression set (" + data.provenance + ")";
  return data;
}

Dataset fallback_classification_dataset() {
  constexpr std::size_t d = kMnistSide * kMnistSide;
  std::mt19937_64 rng(2);
  Vector u = unit_gaussian(rng, d);
  for (double& v : u) v *= 0.4;
  Dataset data = synth_groups(d, {5, 1}, {u, Vector(d, 0.0)}, 0.03, 12, true);
  data.provenance = "fallback classification set (" + data.provenance + ")";
  return data;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("GRWLAB_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

std::optional<Dataset> try_load_paper_subset(const std::filesystem::path& dir, bool classification) {
  const auto images = first_existing(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
  const auto labels = first_existing(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
  if (images.empty() || labels.empty()) return std::nullopt;
  return paper_subset(load_mnist_idx(images, labels), classification);
}

void write_synthetic_idx_fixture(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
  if (count < 6) fail(ErrorKind::InvalidArgument, "fixture needs at least six images");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pixel(0, 255);
  std::uniform_int_distribution<int> digit(0, 9);
  IdxImages images{count, kMnistSide, kMnistSide, {}};
  images.pixels.resize(count * kMnistSide * kMnistSide);
  for (auto& p : images.pixels) p = static_cast<std::uint8_t>(pixel(rng));
  IdxLabels labels;
  for (std::size_t i = 0; i < count; ++i) {
    // Guarantee the five zeros and the one the subset needs, then random digits.
    const int label = i < 5 ? 0 : (i == 5 ? 1 : digit(rng));
    labels.labels.push_back(static_cast<std::uint8_t>(label));
  }
  std::filesystem::create_directories(dir);
  const auto img_bytes = encode_idx_images(images);
  const auto lbl_bytes = encode_idx_labels(labels);
  write_text_file(dir / "train-images-idx3-ubyte",
                  std::string_view(reinterpret_cast<const char*>(img_bytes.data()), img_bytes.size()));
  write_text_file(dir / "train-labels-idx1-ubyte",
                  std::string_view(reinterpret_cast<const char*>(lbl_bytes.data()), lbl_bytes.size()));
}

std::string trace_csv_header(std::size_t num_groups) {
  std::string h = "epoch,weighted_risk,risk";
  for (std::size_t k = 1; k <= num_groups; ++k) h += ",group_risk_" + std::to_string(k);
  h += ",theta_gap_ref,theta_norm,cos_ref";
  for (std::size_t k = 1; k <= num_groups; ++k) h += ",q_group_" + std::to_string(k);
  return h;
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::string out = trace_csv_header(trace.num_groups);
  out += '\n';
  for (const TraceRow& row : trace.rows) {
    out += std::to_string(row.epoch);
    auto put = [&](double v) {
      out += ',';
      out += detail::format_double(v);
    };
    put(row.weighted_risk);
    put(row.risk);
    for (double v : row.group_risks) put(v);
    put(row.theta_gap_ref);
    put(row.theta_norm);
    put(row.cos_ref);
    for (double v : row.q_group) put(v);
    out += '\n';
  }
  return out;
}

std::string trace_to_json(const TrainTrace& trace, std::string_view config_hash) {
  nlohmann::ordered_json doc;
  doc["config_hash"] = std::string(config_hash);
  doc["num_groups"] = trace.num_groups;
  doc["rows"] = nlohmann::ordered_json::array();
  for (const TraceRow& row : trace.rows) {
    nlohmann::ordered_json r;
    r["epoch"] = row.epoch;
    r["weighted_risk"] = row.weighted_risk;
    r["risk"] = row.risk;
    for (std::size_t k = 0; k < row.group_risks.size(); ++k) r["group_risk_" + std::to_string(k + 1)] = row.group_risks[k];
    r["theta_gap_ref"] = row.theta_gap_ref;
    r["theta_norm"] = row.theta_norm;
    r["cos_ref"] = row.cos_ref;
    for (std::size_t k = 0; k < row.q_group.size(); ++k) r["q_group_" + std::to_string(k + 1)] = row.q_group[k];
    doc["rows"].push_back(std::move(r));
  }
  return doc.dump(2) + "\n";
}

TrainTrace parse_trace_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : detail::split(text, '\n')) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) fail(ErrorKind::FormatError, "trace CSV has no header");
  const auto header = detail::split(lines[0], ',');
  if (header.size() < 6 || (header.size() - 6) % 2 != 0) fail(ErrorKind::FormatError, "unexpected trace header");
  TrainTrace trace;
  trace.num_groups = (header.size() - 6) / 2;
  if (lines[0] != trace_csv_header(trace.num_groups)) fail(ErrorKind::FormatError, "unexpected trace header");
  const std::size_t k = trace.num_groups;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto cells = detail::split(lines[l], ',');
    if (cells.size() != header.size()) fail(ErrorKind::FormatError, "trace row has the wrong number of cells");
    TraceRow row;
    row.epoch = detail::parse_uint(cells[0]);
    row.weighted_risk = detail::parse_double(cells[1]);
    row.risk = detail::parse_double(cells[2]);
    for (std::size_t j = 0; j < k; ++j) row.group_risks.push_back(detail::parse_double(cells[3 + j]));
    row.theta_gap_ref = detail::parse_double(cells[3 + k]);
    row.theta_norm = detail::parse_double(cells[4 + k]);
    row.cos_ref = detail::parse_double(cells[5 + k]);
    for (std::size_t j = 0; j < k; ++j) row.q_group.push_back(detail::parse_double(cells[6 + k + j]));
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

void export_trace(const TrainTrace& trace, const std::filesystem::path& path, TraceFormat format,
                  std::string_view config_hash) {
  write_text_file(path, format == TraceFormat::Csv ? trace_to_csv(trace) : trace_to_json(trace, config_hash));
}

}  // namespace grw
