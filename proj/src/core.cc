#include "gss/core.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace gss {

OneHot ToOneHot(const LabelMap& map) {
  OneHot out;
  out.width = map.width;
  out.height = map.height;
  out.num_classes = map.num_classes;
  out.data.assign(map.size() * map.num_classes, 0);
  for (size_t i = 0; i < map.size(); ++i) {
    const int label = map.labels[i];
    if (label >= 0 && label < map.num_classes) {
      out.data[i * map.num_classes + label] = 1;
    }
  }
  return out;
}

std::optional<std::string> Validate(const LabelMap& map, int patch) {
  if (map.width <= 0 || map.height <= 0) return "nonpositive dimension";
  if (map.num_classes <= 0) return "nonpositive class count";
  if (map.labels.size() != static_cast<size_t>(map.width) * map.height) {
    return "label buffer size mismatch";
  }
  for (int label : map.labels) {
    if (label < 0 || label > map.num_classes) return "label out of range";
  }
  if (patch > 0 && (map.width % patch != 0 || map.height % patch != 0)) {
    return "dimension not divisible by patch";
  }
  return std::nullopt;
}

void CheckValid(const LabelMap& map, int patch) {
  if (auto violation = Validate(map, patch)) {
    throw Error("invalid_label_map", *violation);
  }
}

std::optional<std::string> Validate(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) return "nonpositive dimension";
  if (image.values.size() != image.pixels() * 3) {
    return "pixel buffer size mismatch";
  }
  for (double v : image.values) {
    if (!std::isfinite(v)) return "non-finite value";
  }
  return std::nullopt;
}

std::optional<std::string> Validate(const Palette& palette) {
  if (palette.colors.empty()) return "empty palette";
  std::set<Color> seen;
  for (const Color& c : palette.colors) {
    for (double v : c) {
      if (!std::isfinite(v) || v < 0.0 || v > 255.0) {
        return "color value outside [0, 255]";
      }
    }
    if (!seen.insert(c).second) return "duplicate color";
  }
  return std::nullopt;
}

Rng::Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

double Rng::Uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

int64_t Rng::UniformInt(int64_t lo, int64_t hi) {
  if (hi < lo) throw Error("invalid_argument", "UniformInt: empty range");
  const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
  if (range == 0) return static_cast<int64_t>(engine_());  // full 64-bit span
  const uint64_t limit = std::numeric_limits<uint64_t>::max() -
                         std::numeric_limits<uint64_t>::max() % range;
  uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return lo + static_cast<int64_t>(draw % range);
}

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

double Rng::Gumbel() {
  double u;
  do {
    u = Uniform();
  } while (u <= 0.0);
  return -std::log(-std::log(u));
}

uint64_t DeriveSeed(uint64_t root, std::string_view component) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : component) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  uint64_t z = root ^ hash;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace gss
