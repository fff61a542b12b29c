// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Person re-ID samples: Market1501-style directory ingestion, a procedural
// toy dataset, image decoding/resizing and channel normalization.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gnet/tensor.hpp"

namespace gnet {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { Train, Query, Gallery };

const char* to_string(Split s);

struct ReidSample {
  std::string name;            // file name, also the report key
  std::filesystem::path path;  // empty for in-memory samples
  Tensor pixels;               // 3×H×W in [0, 1]; empty when decoded on demand
  int person_id = 0;           // -1 marks a distractor
  int camera_id = 1;
  Split split = Split::Train;

  bool distractor() const { return person_id == -1; }
};

struct ReidDataset {
  std::vector<ReidSample> train;
  std::vector<ReidSample> query;
  std::vector<ReidSample> gallery;
};

struct SplitCounts {
  std::size_t images = 0;
  std::size_t identities = 0;  // distinct ids, distractors excluded
  std::size_t distractors = 0;
  std::size_t cameras = 0;
};

SplitCounts count_split(const std::vector<ReidSample>& samples);

// "0002_c1s1_000451_03.jpg" -> {2, 1}. Throws DatasetError naming the file.
struct MarketName {
  int person_id = 0;
  int camera_id = 0;
};
MarketName parse_market_filename(std::string_view filename);

// True for the extensions the ingester treats as images.
bool is_image_file(const std::filesystem::path& p);

// Reads bounding_box_train/, query/ and bounding_box_test/ under `root`.
// Files are visited in sorted name order; non-image files are skipped.
ReidDataset ingest_market_layout(const std::filesystem::path& root);

// For protocols published as a file list: one `train|query|gallery <path>`
// line per image, paths relative to `root`, file names in the same grammar.
ReidDataset ingest_split_file(const std::filesystem::path& root, const std::filesystem::path& split_file);

// Procedural toy data: identity fixes clothing colors and texture, camera
// fixes a photometric shift, each sample jitters placement, background and
// noise. Per identity, the first half of the samples train, the next one is
// the query and the rest form the gallery; sample j is seen by camera
// j % cameras + 1.
ReidDataset synth_dataset(std::size_t num_ids, std::size_t per_id, std::size_t cameras, std::uint64_t seed,
                          std::size_t height = 384, std::size_t width = 192);

// Writes the dataset as a Market-style tree of binary PPM files.
void write_market_layout(const ReidDataset& data, const std::filesystem::path& root);

// ---------------------------------------------------------------- images

// Decodes binary PPM (P6, maxval 255) natively; PNG and JPEG when the
// library was built with them. Returns 3×H×W in [0, 1].
Tensor read_image(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);
bool png_supported();
bool jpeg_supported();

// Bilinear resampling with half-pixel centers, edge-clamped.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Sample pixels at the requested size (decoded from disk if needed).
Tensor load_sample(const ReidSample& sample, std::size_t height, std::size_t width);

struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

void normalize_inplace(Tensor& image, const Normalization& norm);

// Stacks equally sized 3×H×W images into N×3×H×W.
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace gnet
