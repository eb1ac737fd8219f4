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

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

namespace phosphene {
namespace {

using json = nlohmann::json;

class GzReader {
 public:
  explicit GzReader(const std::filesystem::path& path) : file_(gzopen(path.string().c_str(), "rb")) {
    if (!file_) throw IoError("cannot open " + path.string());
    path_ = path.string();
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, unsigned n) {
    if (gzread(file_, dst, n) != static_cast<int>(n)) throw IoError("truncated file " + path_);
  }
  std::uint32_t read_be32() {
    unsigned char b[4];
    read(b, 4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

 private:
  gzFile file_;
  std::string path_;
};

void write_be32(gzFile f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  gzwrite(f, b, 4);
}

Image to_gray(const RawImage& raw) {
  if (raw.height < 1 || raw.width < 1) throw IoError("empty image");
  Image g(raw.height, raw.width);
  for (int r = 0; r < raw.height; ++r) {
    for (int c = 0; c < raw.width; ++c) {
      g(r, c) = raw.channels == 1
                    ? raw.at(r, c)
                    : 0.299 * raw.at(r, c, 0) + 0.587 * raw.at(r, c, 1) + 0.114 * raw.at(r, c, 2);
    }
  }
  return g;
}

ObjectAnnotation object_from_json(const json& j) {
  ObjectAnnotation o;
  o.category = j.at("category").get<std::string>();
  o.area_fraction = j.at("area_fraction").get<double>();
  o.mean_brightness = j.at("mean_brightness").get<double>();
  o.mask = j.value("mask", std::string());
  return o;
}

bool qualifies(const ObjectAnnotation& o, const std::set<std::string>& categories, const FilterThresholds& t) {
  return categories.count(o.category) && o.area_fraction > t.min_area_fraction;
}

}  // namespace

TargetSet TargetSet::subset(const std::vector<std::size_t>& idx, const std::string& split_name) const {
  TargetSet out;
  out.split = split_name.empty() ? split : split_name;
  for (std::size_t i : idx) {
    if (i >= images.size()) throw IndexError("target index out of range");
    out.images.push_back(images[i]);
    if (labeled()) out.labels.push_back(labels[i]);
    if (!ids.empty()) out.ids.push_back(ids[i]);
  }
  return out;
}

// ---- images ---------------------------------------------------------------

Image resize_bilinear(const Image& img, int height, int width) {
  if (img.size() == 0) throw InvalidParameter("cannot resize an empty image");
  if (height < 1 || width < 1) throw InvalidParameter("resize target must be nonempty");
  const int hi = static_cast<int>(img.rows()), wi = static_cast<int>(img.cols());
  if (hi == height && wi == width) return img;
  const double sy = static_cast<double>(hi) / height, sx = static_cast<double>(wi) / width;
  Image out(height, width);
  for (int r = 0; r < height; ++r) {
    const double y = std::max(0.0, (r + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(y), hi - 1), y1 = std::min(y0 + 1, hi - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::max(0.0, (c + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(x), wi - 1), x1 = std::min(x0 + 1, wi - 1);
      const double fx = x - x0;
      out(r, c) = (1 - fy) * ((1 - fx) * img(y0, x0) + fx * img(y0, x1)) +
                  fy * ((1 - fx) * img(y1, x0) + fx * img(y1, x1));
    }
  }
  return out;
}

Percept preprocess_image(const RawImage& raw, int height, int width) {
  const Image gray = to_gray(raw) / 255.0;
  return resize_bilinear(gray, height, width).cwiseMax(0.0).cwiseMin(1.0);
}

Percept preprocess_image(const std::filesystem::path& path, int height, int width) {
  return preprocess_image(read_netpbm(path), height, width);
}

TargetSet load_idx_digits(const std::filesystem::path& images, const std::filesystem::path& labels, int limit) {
  GzReader img(images), lab(labels);
  if (img.read_be32() != 0x00000803) throw IoError("bad IDX image magic in " + images.string());
  if (lab.read_be32() != 0x00000801) throw IoError("bad IDX label magic in " + labels.string());
  const std::uint32_t n = img.read_be32(), rows = img.read_be32(), cols = img.read_be32();
  if (lab.read_be32() != n) throw IoError("IDX image and label counts differ");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) throw IoError("bad IDX image shape");
  const std::uint32_t count = limit < 0 ? n : std::min<std::uint32_t>(n, static_cast<std::uint32_t>(limit));
  TargetSet set;
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(buf.data(), static_cast<unsigned>(buf.size()));
    Percept p(rows, cols);
    for (std::size_t k = 0; k < buf.size(); ++k) p.data()[k] = buf[k] / 255.0;
    unsigned char label = 0;
    lab.read(&label, 1);
    set.images.push_back(std::move(p));
    set.labels.push_back(label);
    set.ids.push_back(std::to_string(i));
  }
  return set;
}

void save_idx_digits(const TargetSet& digits, const std::filesystem::path& images,
                     const std::filesystem::path& labels) {
  if (digits.size() == 0 || !digits.labeled()) throw InvalidParameter("need a nonempty labeled digit set");
  const bool gz_img = images.extension() == ".gz", gz_lab = labels.extension() == ".gz";
  gzFile fi = gzopen(images.string().c_str(), gz_img ? "wb9" : "wbT");
  gzFile fl = gzopen(labels.string().c_str(), gz_lab ? "wb9" : "wbT");
  if (!fi || !fl) throw IoError("cannot write IDX files");
  const auto rows = static_cast<std::uint32_t>(digits.images[0].rows());
  const auto cols = static_cast<std::uint32_t>(digits.images[0].cols());
  write_be32(fi, 0x00000803);
  write_be32(fi, static_cast<std::uint32_t>(digits.size()));
  write_be32(fi, rows);
  write_be32(fi, cols);
  write_be32(fl, 0x00000801);
  write_be32(fl, static_cast<std::uint32_t>(digits.size()));
  for (std::size_t i = 0; i < digits.size(); ++i) {
    for (Eigen::Index k = 0; k < digits.images[i].size(); ++k) {
      const auto v = static_cast<unsigned char>(std::lround(std::clamp(digits.images[i].data()[k], 0.0, 1.0) * 255));
      gzwrite(fi, &v, 1);
    }
    const auto l = static_cast<unsigned char>(digits.labels[i]);
    gzwrite(fl, &l, 1);
  }
  gzclose(fi);
  gzclose(fl);
}

TargetSet resize_targets(const TargetSet& set, int height, int width) {
  TargetSet out = set;
  for (auto& img : out.images) img = resize_bilinear(img, height, width).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

std::pair<TargetSet, TargetSet> split_targets(const TargetSet& set, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw InvalidParameter("train fraction must be in [0, 1]");
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(set.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {set.subset(train, "train"), set.subset(test, "test")};
}

// ---- annotations ----------------------------------------------------------

void AnnotationRecord::validate() const {
  if (image_id.empty()) throw ParseError("record without image_id");
  if (total_object_count < static_cast<int>(objects.size())) {
    throw ParseError("record " + image_id + ": total_object_count below the listed objects");
  }
  for (const auto& o : objects) {
    if (!(o.area_fraction >= 0.0 && o.area_fraction <= 1.0)) {
      throw ParseError("record " + image_id + ": area_fraction outside [0, 1]");
    }
    if (!(o.mean_brightness >= 0.0 && o.mean_brightness <= 255.0)) {
      throw ParseError("record " + image_id + ": mean_brightness outside [0, 255]");
    }
  }
}

std::vector<AnnotationRecord> read_manifest(std::istream& is) {
  std::vector<AnnotationRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AnnotationRecord rec;
      rec.image_id = j.at("image_id").is_string() ? j.at("image_id").get<std::string>()
                                                  : j.at("image_id").dump();
      rec.image = j.value("image", std::string());
      rec.total_object_count = j.at("total_object_count").get<int>();
      for (const auto& o : j.at("objects")) rec.objects.push_back(object_from_json(o));
      rec.validate();
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AnnotationRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  return read_manifest(is);
}

void write_manifest(const std::vector<AnnotationRecord>& records, std::ostream& os) {
  for (const auto& r : records) {
    json objects = json::array();
    for (const auto& o : r.objects) {
      objects.push_back({{"category", o.category},
                         {"area_fraction", o.area_fraction},
                         {"mean_brightness", o.mean_brightness},
                         {"mask", o.mask}});
    }
    const json j = {{"image_id", r.image_id},
                    {"image", r.image},
                    {"total_object_count", r.total_object_count},
                    {"objects", objects}};
    os << j.dump() << '\n';
  }
}

void write_manifest(const std::vector<AnnotationRecord>& records, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest " + path.string());
  write_manifest(records, os);
}

FilterReport filter_annotations(const std::vector<AnnotationRecord>& records,
                                const std::set<std::string>& categories, const FilterThresholds& t) {
  if (categories.empty()) throw InvalidParameter("at least one category must be selected");
  FilterReport report;
  report.input = records.size();
  for (const auto& rec : records) {
    if (rec.total_object_count > t.max_total_objects) {
      ++report.removed[0];
      continue;
    }
    std::vector<ObjectAnnotation> qualifying;
    for (const auto& o : rec.objects) {
      if (qualifies(o, categories, t)) qualifying.push_back(o);
    }
    if (qualifying.empty()) {
      ++report.removed[1];
      continue;
    }
    if (static_cast<int>(qualifying.size()) > t.max_qualifying) {
      ++report.removed[2];
      continue;
    }
    std::erase_if(qualifying, [&](const ObjectAnnotation& o) { return o.mean_brightness < t.min_brightness; });
    if (qualifying.empty()) {
      ++report.removed[3];
      continue;
    }
    AnnotationRecord kept = rec;
    kept.objects = std::move(qualifying);
    report.kept.push_back(std::move(kept));
  }
  return report;
}

SegmentResult segment_targets(const std::vector<AnnotationRecord>& records, const std::filesystem::path& root,
                              const std::set<std::string>& categories, int height, int width,
                              const FilterThresholds& t) {
  SegmentResult res;
  for (const auto& rec : records) {
    Image gray;
    std::vector<RawImage> masks;
    try {
      gray = to_gray(read_netpbm(root / rec.image));
      for (const auto& o : rec.objects) {
        if (!qualifies(o, categories, t)) continue;
        if (o.mask.empty()) throw IoError("record " + rec.image_id + " has an object without a mask");
        masks.push_back(read_netpbm(root / o.mask));
      }
    } catch (const IoError&) {
      ++res.missing_masks;
      continue;
    }
    Image keep = Image::Zero(gray.rows(), gray.cols());
    bool any = false;
    for (const auto& m : masks) {
      if (m.height != gray.rows() || m.width != gray.cols()) throw DimensionError("mask shape differs from image");
      double sum = 0.0;
      int count = 0;
      for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
          if (m.at(r, c) == 0) continue;
          sum += gray(r, c);
          ++count;
        }
      }
      if (count == 0 || sum / count < t.min_brightness) continue;
      for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
          if (m.at(r, c) != 0) keep(r, c) = 1.0;
        }
      }
      any = true;
    }
    if (!any) {
      ++res.emptied;
      continue;
    }
    const Image segmented = gray.cwiseProduct(keep) / 255.0;
    res.targets.images.push_back(resize_bilinear(segmented, height, width).cwiseMax(0.0).cwiseMin(1.0));
    res.targets.ids.push_back(rec.image_id);
  }
  return res;
}

// ---- patients -------------------------------------------------------------

void PatientRanges::validate() const {
  auto check = [](const Range& r, const std::string& what) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
      throw InvalidParameter("invalid range for " + what);
    }
  };
  check(rho, "rho");
  check(lambda, "lambda");
  if (rho.lo <= 0 || lambda.lo <= 0) throw InvalidParameter("rho and lambda ranges must be positive");
  for (const auto& [c, r] : coefficients) check(r, "a" + std::to_string(static_cast<int>(c)));
}

PatientParams sample_patient(const PatientRanges& ranges, Rng& rng) {
  ranges.validate();
  PatientParams p;
  p.rho = uniform(rng, ranges.rho.lo, ranges.rho.hi);
  p.lambda = uniform(rng, ranges.lambda.lo, ranges.lambda.hi);
  for (const auto& [c, r] : ranges.coefficients) p.a[c] = uniform(rng, r.lo, r.hi);
  p.validate();
  return p;
}

}  // namespace phosphene
