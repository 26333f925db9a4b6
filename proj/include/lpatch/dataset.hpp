#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpatch/image.hpp"
#include "lpatch/rng.hpp"

namespace lpatch {

inline constexpr int kShipClass = 0;

struct Annotation {
  std::string image_id;  // image path relative to the annotation file
  std::vector<BBox> boxes;
  int class_id = kShipClass;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct LetterboxRecord {
  double scale = 1.0;
  int pad_left = 0;
  int pad_top = 0;
  int original_height = 0;
  int original_width = 0;

  BBox forward(const BBox& box) const;
  BBox inverse(const BBox& box) const;
};

struct Letterboxed {
  Image image;
  std::vector<BBox> boxes;
  LetterboxRecord record;
};

inline constexpr float kLetterboxFill = 0.5f;

// Annotation file: [{"image": "<relative path>", "boxes": [[x0,y0,x1,y1], ...]}, ...]
std::vector<Annotation> parse_annotations(const nlohmann::json& doc);
// Also checks that every referenced image exists next to the file.
std::vector<Annotation> parse_annotations(const std::filesystem::path& annotation_file);
nlohmann::json annotations_to_json(std::span<const Annotation> annotations);
void write_annotations(const std::filesystem::path& file, std::span<const Annotation> annotations);

Letterboxed letterbox_resize(const Image& image, std::span<const BBox> boxes, int target = 640);

// Drops boxes whose area / image area < threshold, then images left empty.
// image_areas is keyed by Annotation::image_id.
std::vector<Annotation> filter_small_objects(std::span<const Annotation> annotations,
                                             const std::map<std::string, double>& image_areas,
                                             double threshold = 0.0005);

struct SyntheticSceneOptions {
  int size = 96;
  int min_ships = 1;
  int max_ships = 3;
  float min_length_frac = 0.25f;  // ship length as a fraction of the image side
  float max_length_frac = 0.5f;
  float min_aspect = 2.f;
  float max_aspect = 6.f;
  int margin = 3;  // clearance between ships, pixels
  int max_attempts = 200;
};

struct SyntheticScene {
  Image image;
  Annotation annotation;
};

SyntheticScene generate_synthetic_scene(Rng& rng, const SyntheticSceneOptions& options);

// An image paired with its (preprocessed) annotation.
struct Sample {
  Image image;
  Annotation annotation;
};
using Dataset = std::vector<Sample>;

struct LoadOptions {
  int input_size = 96;
  double small_object_threshold = 0.0005;
  std::string annotation_file = "annotations.json";
};

// Parse, filter on original image area, then letterbox every image.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

// Writes images/NNNNN.png plus annotations.json; returns the annotations written.
std::vector<Annotation> write_synthetic_dataset(const std::filesystem::path& dir, int count,
                                                std::uint64_t seed,
                                                const SyntheticSceneOptions& options = {});

// In-memory equivalent of write_synthetic_dataset (same seed -> same scenes).
Dataset make_synthetic_dataset(int count, std::uint64_t seed,
                               const SyntheticSceneOptions& options = {});

}  // namespace lpatch
