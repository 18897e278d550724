#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grw/dataset.hpp"
#include "grw/trainer.hpp"

namespace grw {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, image-major
};

struct IdxLabels {
  std::vector<std::uint8_t> labels;
};

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
IdxLabels parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(const IdxLabels& labels);

/// Images with pixels rescaled to [0, 1] plus their labels.
struct MnistStore {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Vector> images;
  std::vector<int> labels;
};

MnistStore make_mnist_store(const IdxImages& images, const IdxLabels& labels);
MnistStore load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// First five digit-0 images and first digit-1 image in file order, flattened
/// and scaled by 1 / (largest column norm). Regression targets are the group
/// ids 0 / 1; in classification mode the digit-0 group is labelled +1 and the
/// digit-1 sample -1.
Dataset paper_subset(const MnistStore& store, bool classification);

/// Gaussian blobs: group k has sizes[k] samples mean_k + noise * N(0, I_d)
/// (noise is the per-coordinate standard deviation). All columns are then
/// scaled by one common factor so the largest norm is 1. Regression targets
/// are the group ids; classification labels are +1 for even groups and -1 for
/// odd ones.
Dataset synth_groups(std::size_t d, const std::vector<std::size_t>& sizes, const std::vector<Vector>& means,
                     double noise, std::uint64_t seed, bool classification);

/// Stand-ins for the MNIST subset when no IDX files are available: d = 784,
/// groups of sizes (5, 1).
Dataset fallback_regression_dataset();
Dataset fallback_classification_dataset();

/// $GRWLAB_DATA_DIR, or ./data when unset.
std::filesystem::path data_dir();

/// The MNIST subset from the training files under dir, or nullopt if they are
/// missing.
std::optional<Dataset> try_load_paper_subset(const std::filesystem::path& dir, bool classification);

/// Writes a small deterministic train-images / train-labels IDX pair to dir.
void write_synthetic_idx_fixture(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed);

enum class TraceFormat { Csv, Json };

std::string trace_csv_header(std::size_t num_groups);
std::string trace_to_csv(const TrainTrace& trace);
std::string trace_to_json(const TrainTrace& trace, std::string_view config_hash);
TrainTrace parse_trace_csv(std::string_view text);

void export_trace(const TrainTrace& trace, const std::filesystem::path& path, TraceFormat format,
                  std::string_view config_hash = {});

/// Reads a whole file; io-error when it cannot be opened.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace grw
