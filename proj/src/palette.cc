#include "gss/palette.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace gss {
namespace {

constexpr int kLatticeStep = 15;
constexpr int kJitterRetries = 64;
constexpr Color kGray{128.0, 128.0, 128.0};

}  // namespace

double Distance(const Color& a, const Color& b) {
  const double dr = a[0] - b[0];
  const double dg = a[1] - b[1];
  const double db = a[2] - b[2];
  return std::sqrt(dr * dr + dg * dg + db * db);
}

PaletteSpec PaletteSpec::ForClasses(int num_classes) {
  PaletteSpec spec;
  spec.num_classes = num_classes;
  spec.starts = {0, 1, 2};
  spec.jitter_bound = 15.0;
  int per_channel = 1;
  while (per_channel * per_channel * per_channel < num_classes) ++per_channel;
  const int span = 255 - 2 - static_cast<int>(spec.jitter_bound);
  const int interval = per_channel > 1 ? span / (per_channel - 1) : 255;
  spec.intervals = {interval, interval, interval};
  return spec;
}

std::array<int, 3> SequenceLengths(const PaletteSpec& spec) {
  std::array<int, 3> lengths{};
  for (int m = 0; m < 3; ++m) {
    if (spec.intervals[m] <= 0) {
      throw Error("invalid_spec", "palette interval must be positive");
    }
    if (spec.starts[m] < 0 || spec.starts[m] > 255) {
      lengths[m] = 0;
      continue;
    }
    lengths[m] = (255 - spec.starts[m]) / spec.intervals[m] + 1;
  }
  return lengths;
}

std::vector<Color> BaseColors(const PaletteSpec& spec) {
  if (spec.num_classes < 1) {
    throw Error("invalid_spec", "palette needs at least one class");
  }
  const auto lengths = SequenceLengths(spec);
  const long long capacity =
      static_cast<long long>(lengths[0]) * lengths[1] * lengths[2];
  if (capacity < spec.num_classes) {
    throw Error("palette_overflow",
                "only " + std::to_string(capacity) + " colors fit in [0,255]^3 for " +
                    std::to_string(spec.num_classes) + " classes");
  }
  std::vector<Color> colors;
  colors.reserve(spec.num_classes);
  for (int r = 0; r < lengths[0]; ++r) {
    for (int g = 0; g < lengths[1]; ++g) {
      for (int b = 0; b < lengths[2]; ++b) {
        if (static_cast<int>(colors.size()) == spec.num_classes) return colors;
        colors.push_back({static_cast<double>(spec.starts[0] + r * spec.intervals[0]),
                          static_cast<double>(spec.starts[1] + g * spec.intervals[1]),
                          static_cast<double>(spec.starts[2] + b * spec.intervals[2])});
      }
    }
  }
  return colors;
}

Palette GenerateMaxDistance(const PaletteSpec& spec, Rng& rng) {
  if (spec.jitter_bound < 0.0) {
    throw Error("invalid_spec", "jitter bound must be nonnegative");
  }
  const std::vector<Color> base = BaseColors(spec);
  std::vector<Color> colors;
  colors.reserve(base.size());
  std::set<Color> used;
  for (const Color& b : base) {
    Color c = b;
    for (int attempt = 0;; ++attempt) {
      if (spec.jitter_bound > 0.0) {
        for (int m = 0; m < 3; ++m) {
          c[m] = Clamp255(b[m] + rng.Uniform(0.0, spec.jitter_bound));
        }
      }
      if (!used.contains(c)) break;
      if (spec.jitter_bound == 0.0 || attempt + 1 >= kJitterRetries) {
        throw Error("palette_collision", "could not make palette colors distinct");
      }
    }
    used.insert(c);
    colors.push_back(c);
  }
  Palette palette(std::move(colors));
  if (!spec.refine_classes.empty()) {
    palette = Refine(palette, spec.refine_classes, spec.gray_exclusion_radius);
  }
  return palette;
}

Palette GenerateRandom(int num_classes, Rng& rng) {
  if (num_classes < 1) throw Error("invalid_spec", "palette needs at least one class");
  std::set<Color> used;
  std::vector<Color> colors;
  colors.reserve(num_classes);
  while (static_cast<int>(colors.size()) < num_classes) {
    Color c{static_cast<double>(rng.UniformInt(0, 255)),
            static_cast<double>(rng.UniformInt(0, 255)),
            static_cast<double>(rng.UniformInt(0, 255))};
    if (used.insert(c).second) colors.push_back(c);
  }
  return Palette(std::move(colors));
}

double MinDistanceToOthers(const Palette& palette, int k) {
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < palette.num_classes(); ++j) {
    if (j != k) best = std::min(best, Distance(palette.colors[k], palette.colors[j]));
  }
  return best;
}

Palette Refine(const Palette& palette, const std::vector<int>& class_ids,
               double gray_exclusion_radius) {
  for (int id : class_ids) {
    if (id < 0 || id >= palette.num_classes()) {
      throw Error("invalid_class", "refine class id " + std::to_string(id) + " out of range");
    }
  }
  if (class_ids.empty()) return palette;

  std::vector<Color> candidates;
  for (int r = 0; r <= 255; r += kLatticeStep) {
    for (int g = 0; g <= 255; g += kLatticeStep) {
      for (int b = 0; b <= 255; b += kLatticeStep) {
        Color c{static_cast<double>(r), static_cast<double>(g), static_cast<double>(b)};
        if (Distance(c, kGray) >= gray_exclusion_radius) candidates.push_back(c);
      }
    }
  }
  if (candidates.empty()) {
    throw Error("infeasible_refinement",
                "no lattice color lies at least " + std::to_string(gray_exclusion_radius) +
                    " from gray");
  }

  Palette out = palette;
  for (int id : class_ids) {
    double best_score = -1.0;
    Color best{};
    for (const Color& c : candidates) {
      double score = std::numeric_limits<double>::infinity();
      for (int j = 0; j < out.num_classes(); ++j) {
        if (j != id) score = std::min(score, Distance(c, out.colors[j]));
      }
      if (score <= 0.0) continue;  // would duplicate another color
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    if (best_score < 0.0) {
      throw Error("infeasible_refinement", "every admissible lattice color is taken");
    }
    const Color current = out.colors[id];
    const bool current_admissible = Distance(current, kGray) >= gray_exclusion_radius;
    if (current_admissible && MinDistanceToOthers(out, id) >= best_score) continue;
    out.colors[id] = best;
  }
  return out;
}

double MinPairwiseDistance(const Palette& palette) {
  if (palette.num_classes() < 2) {
    throw Error("degenerate", "min pairwise distance needs at least two colors");
  }
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < palette.num_classes(); ++i) {
    for (int j = i + 1; j < palette.num_classes(); ++j) {
      best = std::min(best, Distance(palette.colors[i], palette.colors[j]));
    }
  }
  return best;
}

}  // namespace gss
