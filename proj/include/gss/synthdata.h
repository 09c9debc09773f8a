#pragma once

#include <vector>

#include "gss/core.h"

namespace gss {

enum class ShapeKind { kRectangle, kDisk, kTriangle };

struct ClassTexture {
  Color base{};
  double noise_sigma = 0.0;
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  int num_classes = 8;
  int min_shapes = 2;
  int max_shapes = 5;
  std::vector<ShapeKind> kinds{ShapeKind::kRectangle, ShapeKind::kDisk, ShapeKind::kTriangle};
  // One entry per class.
  std::vector<ClassTexture> textures;
  double unlabeled_fraction = 0.0;
  uint64_t seed = 0;

  // Random, well-separated base colors drawn from `seed` (independently of
  // any maskige palette) with a shared noise level.
  static SceneSpec Default(int width, int height, int num_classes, double noise_sigma,
                           double unlabeled_fraction, uint64_t seed);
};

struct Sample {
  RgbImage image;
  LabelMap labels;
};

std::optional<std::string> Validate(const SceneSpec& spec, int patch = 0);

// Class 0 fills the background; shapes of random class in [1, K) are painted
// back to front. Image pixels are the class base color plus Gaussian noise,
// rounded to integers in [0, 255]. Unlabeled areas are unions of random disks
// covering the requested fraction; their labels become the sentinel K while
// the image keeps the underlying appearance.
std::vector<Sample> GenerateScenes(const SceneSpec& spec, int count, Rng& rng);

}  // namespace gss
