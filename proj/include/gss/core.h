#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gss {

// Every failure carries a short machine-parsable code ("palette_overflow",
// "rank_deficient", ...) next to the human message. The CLI prints
// `code: message`.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

using Color = std::array<double, 3>;

// Per-pixel class ids in [0, K]; the value K marks an unlabeled pixel.
// Row-major, origin top-left.
struct LabelMap {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int w, int h, int k, int fill = 0)
      : width(w), height(h), num_classes(k),
        labels(static_cast<size_t>(w) * h, fill) {}

  int unlabeled() const { return num_classes; }
  size_t size() const { return labels.size(); }
  int& at(int x, int y) { return labels[static_cast<size_t>(y) * width + x]; }
  int at(int x, int y) const {
    return labels[static_cast<size_t>(y) * width + x];
  }
  bool IsLabeled(size_t i) const { return labels[i] != num_classes; }
  bool operator==(const LabelMap&) const = default;
};

// Real-valued three-channel raster, row-major with interleaved RGB. Used both
// for input images and for maskiges; canonical range [0, 255].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  RgbImage() = default;
  RgbImage(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<size_t>(w) * h * 3, fill) {}

  size_t pixels() const { return static_cast<size_t>(width) * height; }
  double* pixel(size_t i) { return &values[3 * i]; }
  const double* pixel(size_t i) const { return &values[3 * i]; }
  double* pixel(int x, int y) {
    return pixel(static_cast<size_t>(y) * width + x);
  }
  const double* pixel(int x, int y) const {
    return pixel(static_cast<size_t>(y) * width + x);
  }
  bool operator==(const RgbImage&) const = default;
};

// x^(c) = c * beta: one palette color per pixel.
using Maskige = RgbImage;

// The K x 3 color matrix beta.
struct Palette {
  std::vector<Color> colors;

  Palette() = default;
  explicit Palette(std::vector<Color> c) : colors(std::move(c)) {}

  int num_classes() const { return static_cast<int>(colors.size()); }
  bool operator==(const Palette&) const = default;
};

// The 3 x K matrix gamma, row-major: weights[c * K + k].
struct InversePalette {
  int num_classes = 0;
  std::vector<double> weights;

  double at(int channel, int k) const {
    return weights[static_cast<size_t>(channel) * num_classes + k];
  }
  bool operator==(const InversePalette&) const = default;
};

// Grid of token ids; one token per p x p patch.
struct LatentGrid {
  int grid_w = 0;
  int grid_h = 0;
  std::vector<int> tokens;

  int at(int gx, int gy) const {
    return tokens[static_cast<size_t>(gy) * grid_w + gx];
  }
  bool operator==(const LatentGrid&) const = default;
};

// Dense H x W x K one-hot tensor. Unlabeled pixels are all-zero rows.
struct OneHot {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<uint8_t> data;

  uint8_t at(size_t pixel, int k) const {
    return data[pixel * num_classes + k];
  }
};

OneHot ToOneHot(const LabelMap& map);

// Returns the first violated invariant, or nullopt. With patch > 0 the
// dimensions must also be divisible by the patch size.
std::optional<std::string> Validate(const LabelMap& map, int patch = 0);

// Throws Error("invalid_label_map") when Validate reports a violation.
void CheckValid(const LabelMap& map, int patch = 0);

std::optional<std::string> Validate(const RgbImage& image);

std::optional<std::string> Validate(const Palette& palette);

// Deterministic generator: std::mt19937_64 (bit-exact by the standard) with
// hand-written distribution transforms, so identical seeds give identical
// streams with any standard library.
//
// Uniform() uses the top 53 bits; Normal() is Box-Muller with a cached spare;
// UniformInt() uses rejection on the raw 64-bit draw.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t seed() const { return seed_; }

  uint64_t NextU64() { return engine_(); }
  // [0, 1)
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Inclusive range [lo, hi].
  int64_t UniformInt(int64_t lo, int64_t hi);
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }
  // Standard Gumbel(0, 1).
  double Gumbel();

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<size_t>(UniformInt(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Child seed for a named component: splitmix64(root ^ fnv1a64(name)).
uint64_t DeriveSeed(uint64_t root, std::string_view component);

inline double Clamp255(double v) { return v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v); }

}  // namespace gss
