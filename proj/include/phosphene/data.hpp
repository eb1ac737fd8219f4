// Copyright 2026 The Phosphene Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "phosphene/common.hpp"
#include "phosphene/effects.hpp"
#include "phosphene/io.hpp"

namespace phosphene {

// Ordered grayscale targets at percept resolution, pixels in [0, 1].
struct TargetSet {
  std::vector<Percept> images;
  std::vector<int> labels;        // empty when unlabeled
  std::vector<std::string> ids;
  std::string split;              // "train", "test" or empty

  std::size_t size() const { return images.size(); }
  bool labeled() const { return !labels.empty(); }
  // Items at `idx`, in order.
  TargetSet subset(const std::vector<std::size_t>& idx, const std::string& split_name = "") const;
};

// ---- images ---------------------------------------------------------------

// Bilinear resampling with half-pixel centres: output pixel (r, c) samples
// the input at ((r + 0.5) * H_in / H_out - 0.5, ...) with edge clamping.
Image resize_bilinear(const Image& img, int height, int width);

// Grayscale (ITU-R 601 luma for RGB), scaled to [0, 1], resized.
Percept preprocess_image(const RawImage& raw, int height, int width);
Percept preprocess_image(const std::filesystem::path& path, int height, int width);

// IDX digit corpus (optionally gzip-compressed): images are u8 N x 28 x 28
// (magic 0x00000803), labels u8 N (magic 0x00000801). Images are returned at
// native resolution scaled to [0, 1]. `limit` < 0 reads everything.
TargetSet load_idx_digits(const std::filesystem::path& images, const std::filesystem::path& labels,
                          int limit = -1);
void save_idx_digits(const TargetSet& digits, const std::filesystem::path& images,
                     const std::filesystem::path& labels);

TargetSet resize_targets(const TargetSet& set, int height, int width);

// Seeded disjoint split: the first round(train_fraction * n) items of a
// shuffled order form "train", the rest "test".
std::pair<TargetSet, TargetSet> split_targets(const TargetSet& set, double train_fraction, std::uint64_t seed);

// ---- annotations ----------------------------------------------------------

struct ObjectAnnotation {
  std::string category;
  double area_fraction = 0.0;    // [0, 1]
  double mean_brightness = 0.0;  // [0, 255]
  std::string mask;              // PGM path, relative to the manifest directory
};

struct AnnotationRecord {
  std::string image_id;
  std::string image;             // image path, relative to the manifest directory
  int total_object_count = 0;    // objects in the original image
  std::vector<ObjectAnnotation> objects;

  // Throws ParseError unless fractions, brightness and counts are in range.
  void validate() const;
};

// JSON Lines manifest, one record per line:
//   {"image_id": "...", "image": "img/1.pgm", "total_object_count": 3,
//    "objects": [{"category": "dog", "area_fraction": 0.12,
//                 "mean_brightness": 131.0, "mask": "mask/1_0.pgm"}, ...]}
std::vector<AnnotationRecord> read_manifest(std::istream& is);
std::vector<AnnotationRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<AnnotationRecord>& records, std::ostream& os);
void write_manifest(const std::vector<AnnotationRecord>& records, const std::filesystem::path& path);

struct FilterThresholds {
  int max_total_objects = 15;        // criterion 1: more than this is clutter
  double min_area_fraction = 0.04;   // criterion 2: qualifying objects are larger
  int max_qualifying = 5;            // criterion 3: more than this is too many
  double min_brightness = 50.0;      // criterion 4: dimmer objects are dropped
};

struct FilterReport {
  std::vector<AnnotationRecord> kept;
  std::size_t input = 0;
  std::array<std::size_t, 4> removed{};  // per criterion 1..4

  std::size_t removed_total() const { return removed[0] + removed[1] + removed[2] + removed[3]; }
};

// Applies, in order:
//   1. total_object_count > 15                       -> record removed
//   2. no selected-category object with area > 4%    -> record removed
//   3. more than 5 such qualifying objects           -> record removed
//   4. qualifying objects with brightness < 50 are dropped; a record left
//      with none is removed.
// Kept records retain only their surviving qualifying objects; their
// total_object_count is unchanged, so filtering is idempotent.
FilterReport filter_annotations(const std::vector<AnnotationRecord>& records,
                                const std::set<std::string>& categories,
                                const FilterThresholds& thresholds = {});

struct SegmentResult {
  TargetSet targets;
  std::size_t missing_masks = 0;   // records skipped because a file was absent
  std::size_t emptied = 0;         // records whose every object was too dim
};

// Segments the selected-category objects of each record from its image:
// pixels outside the union of surviving masks are zeroed. Mask pixels are
// foreground when nonzero. Object brightness is recomputed on the original
// grayscale pixels under the mask and objects below the threshold dropped
// before resizing.
SegmentResult segment_targets(const std::vector<AnnotationRecord>& records, const std::filesystem::path& root,
                              const std::set<std::string>& categories, int height, int width,
                              const FilterThresholds& thresholds = {});

// ---- patients -------------------------------------------------------------

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Uniform sampling box over patient parameters. Coefficients without a range
// keep their default.
struct PatientRanges {
  Range rho{100.0, 800.0};
  Range lambda{100.0, 2000.0};
  std::vector<std::pair<Coefficient, Range>> coefficients;

  void validate() const;
  static PatientRanges fixed(double rho, double lambda) { return {{rho, rho}, {lambda, lambda}, {}}; }
};

PatientParams sample_patient(const PatientRanges& ranges, Rng& rng);

}  // namespace phosphene
