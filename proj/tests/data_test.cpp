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

#include "phosphene/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gtest/gtest.h"

namespace phosphene {
namespace {

namespace fs = std::filesystem;

const fs::path kData = PHOSPHENE_TEST_DATA_DIR;

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RawImage gray_image(int h, int w, std::uint8_t fill) {
  return RawImage{h, w, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, fill)};
}

// Separable reference: 1-D interpolation matrices applied as R * img * C^T.
Eigen::MatrixXd interp_matrix(int n_in, int n_out) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_out, n_in);
  for (int o = 0; o < n_out; ++o) {
    double src = (o + 0.5) * n_in / n_out - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, n_in - 1);
    m(o, lo) += 1.0 - (src - lo);
    m(o, hi) += src - lo;
  }
  return m;
}

TEST(IdxDigits, LoadsFixture) {
  const auto set = load_idx_digits(kData / "digits64-images-idx3-ubyte", kData / "digits64-labels-idx1-ubyte");
  ASSERT_EQ(set.size(), 64u);
  EXPECT_EQ(set.images[0].rows(), 28);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(set.labels[i], static_cast<int>(i % 10));
    EXPECT_GE(set.images[i].minCoeff(), 0.0);
    EXPECT_LE(set.images[i].maxCoeff(), 1.0);
    EXPECT_GT(set.images[i].maxCoeff(), 0.5);
  }
  EXPECT_EQ(load_idx_digits(kData / "digits64-images-idx3-ubyte", kData / "digits64-labels-idx1-ubyte", 10).size(), 10u);
}

TEST(IdxDigits, GzipRoundTrip) {
  const auto set = load_idx_digits(kData / "digits64-images-idx3-ubyte", kData / "digits64-labels-idx1-ubyte", 12);
  const auto dir = temp_dir("phosphene_idx");
  save_idx_digits(set, dir / "img.gz", dir / "lab.gz");
  const auto back = load_idx_digits(dir / "img.gz", dir / "lab.gz");
  ASSERT_EQ(back.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(back.labels[i], set.labels[i]);
    EXPECT_TRUE(back.images[i].isApprox(set.images[i]));
  }
}

TEST(IdxDigits, BadFilesThrowIoError) {
  EXPECT_THROW(load_idx_digits("/nonexistent/a", "/nonexistent/b"), IoError);
  const auto dir = temp_dir("phosphene_idx_bad");
  { std::ofstream(dir / "x") << "not idx at all"; }
  EXPECT_THROW(load_idx_digits(dir / "x", kData / "digits64-labels-idx1-ubyte"), IoError);
}

TEST(Resize, IdentityWhenShapesMatch) {
  Rng rng(1);
  Image img(49, 49);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = uniform01(rng);
  EXPECT_EQ(resize_bilinear(img, 49, 49), img);
}

TEST(Resize, HalvingCheckerboardAveragesPairs) {
  Image board(98, 98);
  for (int r = 0; r < 98; ++r) {
    for (int c = 0; c < 98; ++c) board(r, c) = (r + c) % 2;
  }
  const Image out = resize_bilinear(board, 49, 49);
  const Image ref = interp_matrix(98, 49) * board * interp_matrix(98, 49).transpose();
  EXPECT_LT((out - ref).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_NEAR(out.minCoeff(), 0.5, 1e-12);
  EXPECT_NEAR(out.maxCoeff(), 0.5, 1e-12);
}

TEST(Resize, MatchesSeparableReference) {
  Rng rng(2);
  for (auto [hi, wi, ho, wo] : {std::array<int, 4>{28, 28, 25, 25}, {28, 28, 49, 49}, {13, 7, 5, 9}}) {
    Image img(hi, wi);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = uniform01(rng);
    const Image ref = interp_matrix(hi, ho) * img * interp_matrix(wi, wo).transpose();
    EXPECT_LT((resize_bilinear(img, ho, wo) - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Preprocess, ConstantWhiteIsOne) {
  const Percept p = preprocess_image(gray_image(31, 17, 255), 49, 49);
  EXPECT_EQ(p.rows(), 49);
  EXPECT_NEAR(p.minCoeff(), 1.0, 1e-12);
  EXPECT_NEAR(p.maxCoeff(), 1.0, 1e-12);
}

TEST(Preprocess, RgbUsesLuma) {
  RawImage rgb{1, 1, 3, {200, 100, 50}};
  EXPECT_NEAR(preprocess_image(rgb, 1, 1)(0, 0), (0.299 * 200 + 0.587 * 100 + 0.114 * 50) / 255.0, 1e-12);
}

TEST(Preprocess, UnreadableImageThrows) {
  EXPECT_THROW(preprocess_image(fs::path("/nonexistent.pgm"), 4, 4), IoError);
}

TEST(Split, DisjointAndSeeded) {
  const auto set = load_idx_digits(kData / "digits64-images-idx3-ubyte", kData / "digits64-labels-idx1-ubyte");
  const auto [train, test] = split_targets(set, 0.75, 3);
  EXPECT_EQ(train.size(), 48u);
  EXPECT_EQ(test.size(), 16u);
  std::set<std::string> ids(train.ids.begin(), train.ids.end());
  for (const auto& id : test.ids) EXPECT_FALSE(ids.count(id));
  EXPECT_EQ(split_targets(set, 0.75, 3).first.ids, train.ids);
  EXPECT_NE(split_targets(set, 0.75, 4).first.ids, train.ids);
  EXPECT_EQ(train.split, "train");
}

AnnotationRecord record(const std::string& id, int total, std::vector<ObjectAnnotation> objects) {
  return AnnotationRecord{id, "img.pgm", total, std::move(objects)};
}

const std::set<std::string> kCats{"person", "dog", "car"};

TEST(Filter, SixteenObjectsIsClutter) {
  const auto r = filter_annotations({record("a", 16, {{"person", 0.3, 200, ""}})}, kCats);
  EXPECT_EQ(r.removed[0], 1u);
  EXPECT_TRUE(r.kept.empty());
}

TEST(Filter, ThreePercentObjectIsTooSmall) {
  const auto r = filter_annotations({record("a", 1, {{"dog", 0.03, 200, ""}})}, kCats);
  EXPECT_EQ(r.removed[1], 1u);
}

TEST(Filter, SixQualifyingIsTooMany) {
  const auto r = filter_annotations({record("a", 6, std::vector<ObjectAnnotation>(6, {"car", 0.1, 200, ""}))}, kCats);
  EXPECT_EQ(r.removed[2], 1u);
}

TEST(Filter, DimObjectsDroppedThenEmptyRecordRemoved) {
  const auto r = filter_annotations({record("a", 2, {{"car", 0.1, 20, ""}, {"dog", 0.2, 80, ""}}),
                                     record("b", 1, {{"car", 0.1, 20, ""}})},
                                    kCats);
  EXPECT_EQ(r.removed[3], 1u);
  ASSERT_EQ(r.kept.size(), 1u);
  ASSERT_EQ(r.kept[0].objects.size(), 1u);
  EXPECT_EQ(r.kept[0].objects[0].category, "dog");
  EXPECT_EQ(r.kept[0].total_object_count, 2);
}

TEST(Filter, RequiresCategories) {
  EXPECT_THROW(filter_annotations({}, {}), InvalidParameter);
}

TEST(Filter, FixtureCountsAreConsistentAndIdempotent) {
  const auto records = read_manifest(kData / "manifest50.jsonl");
  ASSERT_EQ(records.size(), 50u);
  const auto once = filter_annotations(records, kCats);
  EXPECT_EQ(once.input, once.kept.size() + once.removed_total());
  const auto twice = filter_annotations(once.kept, kCats);
  EXPECT_EQ(twice.removed_total(), 0u);
  ASSERT_EQ(twice.kept.size(), once.kept.size());
  for (std::size_t i = 0; i < once.kept.size(); ++i) {
    EXPECT_EQ(twice.kept[i].image_id, once.kept[i].image_id);
    EXPECT_EQ(twice.kept[i].objects.size(), once.kept[i].objects.size());
  }
}

TEST(Manifest, RoundTrip) {
  const auto records = read_manifest(kData / "manifest50.jsonl");
  std::stringstream ss;
  write_manifest(records, ss);
  const auto back = read_manifest(ss);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image_id, records[i].image_id);
    EXPECT_EQ(back[i].total_object_count, records[i].total_object_count);
    ASSERT_EQ(back[i].objects.size(), records[i].objects.size());
  }
}

TEST(Manifest, MalformedLineReportsLineNumber) {
  std::stringstream ss;
  ss << R"({"image_id": "a", "total_object_count": 0, "objects": []})" << '\n'
     << R"({"image_id": "b", "total_object_count": 1, "objects": [{"category": "x", "area_fraction": 1.5, "mean_brightness": 3}]})"
     << '\n';
  try {
    read_manifest(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

class SegmentFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = temp_dir("phosphene_segment");
    // 8 x 8 image: left half 200, right half 30.
    RawImage img = gray_image(8, 8, 200);
    for (int r = 0; r < 8; ++r) {
      for (int c = 4; c < 8; ++c) img.pixels[r * 8 + c] = 30;
    }
    write_pgm(img, dir_ / "img.pgm");
    RawImage bright = gray_image(8, 8, 0), dim = gray_image(8, 8, 0);
    for (int r = 2; r < 5; ++r) {
      bright.pixels[r * 8 + 1] = bright.pixels[r * 8 + 2] = 255;
      dim.pixels[r * 8 + 5] = dim.pixels[r * 8 + 6] = 255;
    }
    write_pgm(bright, dir_ / "bright.pgm");
    write_pgm(dim, dir_ / "dim.pgm");
    write_pgm(gray_image(8, 8, 1), dir_ / "full.pgm");
  }
  fs::path dir_;
};

TEST_F(SegmentFixture, FullMaskEqualsPreprocess) {
  // Annotated brightness passes; the recomputed mean over the full image is
  // (200 + 30) / 2 = 115.
  const auto res = segment_targets({record("a", 1, {{"dog", 1.0, 115, "full.pgm"}})}, dir_, kCats, 8, 8);
  ASSERT_EQ(res.targets.size(), 1u);
  EXPECT_TRUE(res.targets.images[0].isApprox(preprocess_image(dir_ / "img.pgm", 8, 8)));
}

TEST_F(SegmentFixture, OnlyMaskedPixelsSurvive) {
  // The dim object's recomputed brightness is 30 and it is dropped even though
  // its annotation claims otherwise.
  const auto res = segment_targets(
      {record("a", 2, {{"dog", 0.1, 200, "bright.pgm"}, {"car", 0.1, 200, "dim.pgm"}})}, dir_, kCats, 8, 8);
  ASSERT_EQ(res.targets.size(), 1u);
  const Percept& out = res.targets.images[0];
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const bool in_bright = r >= 2 && r < 5 && (c == 1 || c == 2);
      EXPECT_DOUBLE_EQ(out(r, c), in_bright ? 200.0 / 255.0 : 0.0) << r << "," << c;
    }
  }
}

TEST_F(SegmentFixture, AllDimRecordIsExcluded) {
  const auto res = segment_targets({record("a", 1, {{"car", 0.1, 200, "dim.pgm"}})}, dir_, kCats, 8, 8);
  EXPECT_EQ(res.targets.size(), 0u);
  EXPECT_EQ(res.emptied, 1u);
}

TEST_F(SegmentFixture, MissingMaskSkipsRecord) {
  const auto res = segment_targets({record("a", 1, {{"car", 0.1, 200, "nope.pgm"}}),
                                    record("b", 1, {{"dog", 0.1, 200, "bright.pgm"}})},
                                   dir_, kCats, 4, 4);
  EXPECT_EQ(res.missing_masks, 1u);
  ASSERT_EQ(res.targets.size(), 1u);
  EXPECT_EQ(res.targets.ids[0], "b");
  EXPECT_EQ(res.targets.images[0].rows(), 4);
}

TEST(SamplePatient, DegenerateRangeIsConstant) {
  Rng rng(1);
  PatientRanges r;
  r.rho = {300, 300};
  for (int k = 0; k < 100; ++k) EXPECT_EQ(sample_patient(r, rng).rho, 300.0);
}

TEST(SamplePatient, UniformMean) {
  Rng rng(2);
  const PatientRanges r;
  double sum = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) sum += sample_patient(r, rng).rho;
  const double sigma = 700.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(sum / n - 450.0), 3 * sigma);
}

TEST(SamplePatient, DefaultsCoverReportedCorners) {
  const PatientRanges r;
  for (double rho : {150.0, 800.0}) EXPECT_TRUE(rho >= r.rho.lo && rho <= r.rho.hi);
  for (double lam : {100.0, 1500.0}) EXPECT_TRUE(lam >= r.lambda.lo && lam <= r.lambda.hi);
}

TEST(SamplePatient, SeededAndCoefficientRanges) {
  PatientRanges r;
  r.coefficients = {{kAmpGain, {0.2, 0.8}}, {kSizeSlope, {0.1, 0.3}}};
  Rng a(9), b(9);
  for (int k = 0; k < 20; ++k) {
    const auto pa = sample_patient(r, a), pb = sample_patient(r, b);
    EXPECT_EQ(pa, pb);
    EXPECT_GE(pa.a[kAmpGain], 0.2);
    EXPECT_LE(pa.a[kSizeSlope], 0.3);
    EXPECT_EQ(pa.a[kFreqGain], PatientParams::default_coefficients()[kFreqGain]);
  }
}

TEST(SamplePatient, InvertedRangeThrows) {
  Rng rng(3);
  PatientRanges r;
  r.lambda = {900, 100};
  EXPECT_THROW(sample_patient(r, rng), InvalidParameter);
}

}  // namespace
}  // namespace phosphene
