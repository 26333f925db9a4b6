#include "lpatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lpatch/errors.hpp"

namespace lpatch {

namespace fs = std::filesystem;
using nlohmann::json;

BBox LetterboxRecord::forward(const BBox& b) const {
  const auto s = static_cast<float>(scale);
  return {b.x_min * s + pad_left, b.y_min * s + pad_top, b.x_max * s + pad_left,
          b.y_max * s + pad_top};
}

BBox LetterboxRecord::inverse(const BBox& b) const {
  const auto s = static_cast<float>(scale);
  return {(b.x_min - pad_left) / s, (b.y_min - pad_top) / s, (b.x_max - pad_left) / s,
          (b.y_max - pad_top) / s};
}

std::vector<Annotation> parse_annotations(const json& doc) {
  if (!doc.is_array()) throw ParseError("annotation file must hold a top-level list");
  std::vector<Annotation> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& entry = doc[i];
    const std::string where = "entry " + std::to_string(i);
    if (!entry.is_object() || !entry.contains("image") || !entry["image"].is_string()) {
      throw ParseError(where + ": missing string field \"image\"");
    }
    Annotation ann;
    ann.image_id = entry["image"].get<std::string>();
    const std::string named = where + " (" + ann.image_id + ")";
    if (!entry.contains("boxes") || !entry["boxes"].is_array()) {
      throw ParseError(named + ": missing list field \"boxes\"");
    }
    for (const json& b : entry["boxes"]) {
      if (!b.is_array() || b.size() != 4 ||
          !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); })) {
        throw ParseError(named + ": box must be [x_min, y_min, x_max, y_max]");
      }
      BBox box{b[0].get<float>(), b[1].get<float>(), b[2].get<float>(), b[3].get<float>()};
      if (!box.valid() || box.x_min < 0.f || box.y_min < 0.f) {
        throw ParseError(named + ": invalid box [" + b.dump() + "]");
      }
      ann.boxes.push_back(box);
    }
    out.push_back(std::move(ann));
  }
  return out;
}

std::vector<Annotation> parse_annotations(const fs::path& annotation_file) {
  std::ifstream in(annotation_file);
  if (!in) throw IngestionError("cannot open annotation file " + annotation_file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(annotation_file.string() + ": " + e.what());
  }
  auto annotations = parse_annotations(doc);
  const fs::path root = annotation_file.parent_path();
  for (const auto& ann : annotations) {
    if (!fs::exists(root / ann.image_id)) {
      throw IngestionError("missing image file " + (root / ann.image_id).string());
    }
  }
  return annotations;
}

json annotations_to_json(std::span<const Annotation> annotations) {
  json doc = json::array();
  for (const auto& ann : annotations) {
    json boxes = json::array();
    for (const auto& b : ann.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    doc.push_back({{"image", ann.image_id}, {"boxes", boxes}});
  }
  return doc;
}

void write_annotations(const fs::path& file, std::span<const Annotation> annotations) {
  std::ofstream out(file);
  if (!out) throw IngestionError("cannot write " + file.string());
  out << annotations_to_json(annotations).dump(1) << '\n';
}

Letterboxed letterbox_resize(const Image& image, std::span<const BBox> boxes, int target) {
  if (target <= 0) throw ValidationError("letterbox target must be positive");
  if (image.empty()) throw ValidationError("letterbox: zero-area image");
  const int h = image.height();
  const int w = image.width();
  LetterboxRecord rec;
  rec.original_height = h;
  rec.original_width = w;
  rec.scale = static_cast<double>(target) / std::max(h, w);
  const int new_h = std::clamp(static_cast<int>(std::lround(h * rec.scale)), 1, target);
  const int new_w = std::clamp(static_cast<int>(std::lround(w * rec.scale)), 1, target);
  rec.pad_left = (target - new_w) / 2;
  rec.pad_top = (target - new_h) / 2;

  Letterboxed out{Image(target, target, kLetterboxFill), {}, rec};
  const Image scaled = resize_area(image, new_h, new_w);
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x)
      for (int c = 0; c < 3; ++c)
        out.image.at(y + rec.pad_top, x + rec.pad_left, c) = scaled.at(y, x, c);

  const auto lim = static_cast<float>(target);
  for (const BBox& b : boxes) {
    BBox m = rec.forward(b);
    m.x_min = std::clamp(m.x_min, 0.f, lim);
    m.y_min = std::clamp(m.y_min, 0.f, lim);
    m.x_max = std::clamp(m.x_max, 0.f, lim);
    m.y_max = std::clamp(m.y_max, 0.f, lim);
    out.boxes.push_back(m);
  }
  return out;
}

std::vector<Annotation> filter_small_objects(std::span<const Annotation> annotations,
                                             const std::map<std::string, double>& image_areas,
                                             double threshold) {
  std::vector<Annotation> out;
  for (const auto& ann : annotations) {
    const auto it = image_areas.find(ann.image_id);
    if (it == image_areas.end() || it->second <= 0.0) continue;
    Annotation kept{ann.image_id, {}, ann.class_id};
    for (const auto& b : ann.boxes) {
      if (!(b.area() / it->second < threshold)) kept.boxes.push_back(b);
    }
    if (!kept.boxes.empty()) out.push_back(std::move(kept));
  }
  return out;
}

namespace {

bool overlaps_with_margin(const BBox& a, const BBox& b, float margin) {
  return a.x_min < b.x_max + margin && b.x_min < a.x_max + margin &&
         a.y_min < b.y_max + margin && b.y_min < a.y_max + margin;
}

}  // namespace

SyntheticScene generate_synthetic_scene(Rng& rng, const SyntheticSceneOptions& opt) {
  if (opt.size < 64) throw ValidationError("synthetic scene size must be >= 64");
  if (opt.min_ships < 0 || opt.max_ships < opt.min_ships) {
    throw ValidationError("invalid ship count range");
  }
  const int size = opt.size;
  SyntheticScene scene{Image(size, size), {}};

  // Sea: a base level with a slight blue tint and low-amplitude noise.
  const float sea = static_cast<float>(rng.uniform(0.12, 0.25));
  const float tint[3] = {-0.02f, 0.f, 0.04f};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const float n = static_cast<float>(rng.uniform(-0.03, 0.03));
      for (int c = 0; c < 3; ++c) scene.image.at(y, x, c) = std::clamp(sea + tint[c] + n, 0.f, 1.f);
    }

  const int n_ships = rng.uniform_int(opt.min_ships, opt.max_ships);
  std::vector<BBox> boxes;
  for (int k = 0; k < n_ships; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < opt.max_attempts && !placed; ++attempt) {
      const double length = rng.uniform(opt.min_length_frac, opt.max_length_frac) * size;
      const double aspect = rng.uniform(opt.min_aspect, opt.max_aspect);
      int len = std::max(4, static_cast<int>(std::lround(length)));
      int wid = std::max(3, static_cast<int>(std::lround(length / aspect)));
      const bool vertical = rng.uniform() < 0.5;
      const int bw = vertical ? wid : len;
      const int bh = vertical ? len : wid;
      if (bw >= size - 2 || bh >= size - 2) continue;
      const int x0 = rng.uniform_int(1, size - 1 - bw);
      const int y0 = rng.uniform_int(1, size - 1 - bh);
      const BBox box{static_cast<float>(x0), static_cast<float>(y0), static_cast<float>(x0 + bw),
                     static_cast<float>(y0 + bh)};
      const bool clash = std::any_of(boxes.begin(), boxes.end(), [&](const BBox& o) {
        return overlaps_with_margin(box, o, static_cast<float>(opt.margin));
      });
      if (clash) continue;
      boxes.push_back(box);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("could not place ship " + std::to_string(k + 1) + " of " +
                            std::to_string(n_ships) + " without overlap");
    }
  }

  for (const BBox& box : boxes) {
    const float hull = static_cast<float>(rng.uniform(0.6, 0.85));
    for (int y = static_cast<int>(box.y_min); y < static_cast<int>(box.y_max); ++y)
      for (int x = static_cast<int>(box.x_min); x < static_cast<int>(box.x_max); ++x) {
        const float n = static_cast<float>(rng.uniform(-0.05, 0.05));
        for (int c = 0; c < 3; ++c) scene.image.at(y, x, c) = std::clamp(hull + n, 0.f, 1.f);
      }
  }
  scene.annotation.boxes = std::move(boxes);
  return scene;
}

namespace {

std::string synthetic_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%05d.png", index);
  return buf;
}

}  // namespace

Dataset make_synthetic_dataset(int count, std::uint64_t seed, const SyntheticSceneOptions& opt) {
  Dataset out;
  out.reserve(std::max(count, 0));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "synth", static_cast<std::uint64_t>(i)));
    auto scene = generate_synthetic_scene(rng, opt);
    scene.annotation.image_id = synthetic_name(i);
    out.push_back({std::move(scene.image), std::move(scene.annotation)});
  }
  return out;
}

std::vector<Annotation> write_synthetic_dataset(const fs::path& dir, int count, std::uint64_t seed,
                                                const SyntheticSceneOptions& opt) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IngestionError("cannot create " + (dir / "images").string() + ": " + ec.message());
  std::vector<Annotation> annotations;
  for (auto& sample : make_synthetic_dataset(count, seed, opt)) {
    write_image(dir / sample.annotation.image_id, sample.image);
    annotations.push_back(std::move(sample.annotation));
  }
  write_annotations(dir / "annotations.json", annotations);
  return annotations;
}

Dataset load_dataset(const fs::path& dir, const LoadOptions& options) {
  const fs::path file = dir / options.annotation_file;
  if (!fs::exists(file)) throw IngestionError("no annotation file at " + file.string());
  const auto annotations = parse_annotations(file);

  std::map<std::string, Image> images;
  std::map<std::string, double> areas;
  for (const auto& ann : annotations) {
    Image img = read_image(dir / ann.image_id);
    for (const auto& b : ann.boxes) {
      if (!b.inside(img.height(), img.width())) {
        throw IngestionError(ann.image_id + ": box outside the image bounds");
      }
    }
    areas[ann.image_id] = static_cast<double>(img.height()) * img.width();
    images.emplace(ann.image_id, std::move(img));
  }

  Dataset out;
  for (auto& ann : filter_small_objects(annotations, areas, options.small_object_threshold)) {
    auto boxed = letterbox_resize(images.at(ann.image_id), ann.boxes, options.input_size);
    std::erase_if(boxed.boxes, [](const BBox& b) { return !b.valid(); });
    ann.boxes = std::move(boxed.boxes);
    out.push_back({std::move(boxed.image), std::move(ann)});
  }
  return out;
}

}  // namespace lpatch
