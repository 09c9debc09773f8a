#include "gss/synthdata.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gss {
namespace {

constexpr double kMinTextureDistance = 70.0;

struct Point {
  double x;
  double y;
};

double Cross(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool InTriangle(Point p, Point a, Point b, Point c) {
  const double d1 = Cross(a, b, p);
  const double d2 = Cross(b, c, p);
  const double d3 = Cross(c, a, p);
  const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(has_neg && has_pos);
}

void PaintShape(LabelMap& map, ShapeKind kind, int label, Rng& rng) {
  const int w = map.width;
  const int h = map.height;
  const int min_extent = std::max(2, std::min(w, h) / 8);
  const int max_extent = std::max(min_extent, std::min(w, h) / 2);
  switch (kind) {
    case ShapeKind::kRectangle: {
      const int rw = static_cast<int>(rng.UniformInt(min_extent, max_extent));
      const int rh = static_cast<int>(rng.UniformInt(min_extent, max_extent));
      const int x0 = static_cast<int>(rng.UniformInt(-rw / 2, w - rw / 2));
      const int y0 = static_cast<int>(rng.UniformInt(-rh / 2, h - rh / 2));
      for (int y = std::max(0, y0); y < std::min(h, y0 + rh); ++y) {
        for (int x = std::max(0, x0); x < std::min(w, x0 + rw); ++x) map.at(x, y) = label;
      }
      break;
    }
    case ShapeKind::kDisk: {
      const double r = rng.Uniform(min_extent / 2.0, max_extent / 2.0);
      const double cx = rng.Uniform(0.0, w);
      const double cy = rng.Uniform(0.0, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double dx = x + 0.5 - cx;
          const double dy = y + 0.5 - cy;
          if (dx * dx + dy * dy <= r * r) map.at(x, y) = label;
        }
      }
      break;
    }
    case ShapeKind::kTriangle: {
      const double size = rng.Uniform(min_extent, max_extent);
      const double ox = rng.Uniform(-size / 2.0, w - size / 2.0);
      const double oy = rng.Uniform(-size / 2.0, h - size / 2.0);
      Point v[3];
      for (Point& p : v) p = {ox + rng.Uniform(0.0, size), oy + rng.Uniform(0.0, size)};
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (InTriangle({x + 0.5, y + 0.5}, v[0], v[1], v[2])) map.at(x, y) = label;
        }
      }
      break;
    }
  }
}

// Adds disks until the covered fraction reaches the target; each disk is no
// larger than the remaining deficit so the overshoot stays small.
std::vector<uint8_t> UnlabeledMask(int w, int h, double fraction, Rng& rng) {
  std::vector<uint8_t> mask(static_cast<size_t>(w) * h, 0);
  if (fraction <= 0.0) return mask;
  const double target = fraction * w * h;
  const double max_radius = std::max(2.0, std::min(w, h) / 8.0);
  double covered = 0.0;
  while (covered < target) {
    const double deficit = target - covered;
    const double cap = std::clamp(std::sqrt(deficit / std::numbers::pi), 0.5, max_radius);
    const double r = rng.Uniform(std::min(1.0, cap), cap);
    const double cx = rng.Uniform(0.0, w);
    const double cy = rng.Uniform(0.0, h);
    const int x_lo = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + r)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + r)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        uint8_t& m = mask[static_cast<size_t>(y) * w + x];
        if (!m && dx * dx + dy * dy <= r * r) {
          m = 1;
          covered += 1.0;
        }
      }
    }
  }
  return mask;
}

}  // namespace

SceneSpec SceneSpec::Default(int width, int height, int num_classes, double noise_sigma,
                             double unlabeled_fraction, uint64_t seed) {
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.num_classes = num_classes;
  spec.unlabeled_fraction = unlabeled_fraction;
  spec.seed = seed;
  Rng rng(DeriveSeed(seed, "scene_textures"));
  double min_distance = kMinTextureDistance;
  for (int attempt = 0; static_cast<int>(spec.textures.size()) < num_classes; ++attempt) {
    if (attempt > 0 && attempt % 10000 == 0) min_distance *= 0.8;
    Color c{rng.Uniform(20.0, 235.0), rng.Uniform(20.0, 235.0), rng.Uniform(20.0, 235.0)};
    for (double& v : c) v = std::round(v);
    bool far_enough = true;
    for (const ClassTexture& t : spec.textures) {
      const double dr = t.base[0] - c[0], dg = t.base[1] - c[1], db = t.base[2] - c[2];
      if (std::sqrt(dr * dr + dg * dg + db * db) < min_distance) {
        far_enough = false;
        break;
      }
    }
    if (far_enough) spec.textures.push_back({c, noise_sigma});
  }
  return spec;
}

std::optional<std::string> Validate(const SceneSpec& spec, int patch) {
  if (spec.width <= 0 || spec.height <= 0) return "nonpositive dimension";
  if (spec.num_classes < 2) return "need at least two classes";
  if (static_cast<int>(spec.textures.size()) != spec.num_classes) return "one texture per class required";
  if (spec.unlabeled_fraction < 0.0 || spec.unlabeled_fraction >= 1.0) {
    return "unlabeled fraction must lie in [0, 1)";
  }
  if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes) return "invalid shape count range";
  if (spec.kinds.empty() && spec.max_shapes > 0) return "no shape kinds";
  if (patch > 0 && (spec.width % patch != 0 || spec.height % patch != 0)) {
    return "dimension not divisible by patch";
  }
  return std::nullopt;
}

std::vector<Sample> GenerateScenes(const SceneSpec& spec, int count, Rng& rng) {
  if (auto violation = Validate(spec)) throw Error("invalid_spec", *violation);
  std::vector<Sample> out;
  out.reserve(count);
  for (int n = 0; n < count; ++n) {
    Rng local(DeriveSeed(rng.NextU64(), "scene"));
    Sample s;
    s.labels = LabelMap(spec.width, spec.height, spec.num_classes, 0);
    const int shapes = static_cast<int>(local.UniformInt(spec.min_shapes, spec.max_shapes));
    for (int i = 0; i < shapes; ++i) {
      const ShapeKind kind =
          spec.kinds[static_cast<size_t>(local.UniformInt(0, static_cast<int64_t>(spec.kinds.size()) - 1))];
      const int label = static_cast<int>(local.UniformInt(1, spec.num_classes - 1));
      PaintShape(s.labels, kind, label, local);
    }
    s.image = RgbImage(spec.width, spec.height);
    for (size_t i = 0; i < s.labels.size(); ++i) {
      const ClassTexture& tex = spec.textures[s.labels.labels[i]];
      double* px = s.image.pixel(i);
      for (int c = 0; c < 3; ++c) {
        const double noise = tex.noise_sigma > 0.0 ? local.Normal(0.0, tex.noise_sigma) : 0.0;
        px[c] = Clamp255(std::round(tex.base[c] + noise));
      }
    }
    const std::vector<uint8_t> mask =
        UnlabeledMask(spec.width, spec.height, spec.unlabeled_fraction, local);
    for (size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) s.labels.labels[i] = spec.num_classes;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gss
