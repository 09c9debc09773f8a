#include "gss/codec.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace gss {
namespace {

constexpr double kPivotTolerance = 1e-9;

using Mat3 = std::array<std::array<double, 3>, 3>;

void CheckClassCount(int a, int b) {
  if (a != b) throw Error("class_count_mismatch", "label map and palette disagree on K");
}

// beta^T beta
Mat3 Gram(const Palette& palette) {
  Mat3 g{};
  for (const Color& c : palette.colors) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) g[i][j] += c[i] * c[j];
    }
  }
  return g;
}

}  // namespace

Maskige Encode(const LabelMap& map, const Palette& palette) {
  CheckValid(map);
  CheckClassCount(map.num_classes, palette.num_classes());
  Maskige out(map.width, map.height);
  for (size_t i = 0; i < map.size(); ++i) {
    const int label = map.labels[i];
    if (label == map.unlabeled()) {
      throw Error("unlabeled_pixel", "encode requires a fully labeled map");
    }
    const Color& c = palette.colors[label];
    double* px = out.pixel(i);
    px[0] = c[0];
    px[1] = c[1];
    px[2] = c[2];
  }
  return out;
}

InversePalette LeastSquaresInverse(const Palette& palette) {
  const int k = palette.num_classes();
  if (k == 0) throw Error("rank_deficient", "empty palette");
  Mat3 a = Gram(palette);
  // Right-hand side beta^T, 3 x K.
  std::vector<std::array<double, 3>> rhs(k);
  for (int j = 0; j < k; ++j) rhs[j] = palette.colors[j];

  double scale = 0.0;
  for (const auto& row : a) {
    for (double v : row) scale = std::max(scale, std::abs(v));
  }
  if (scale == 0.0) throw Error("rank_deficient", "palette is all zeros");

  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) <= kPivotTolerance * scale) {
      throw Error("rank_deficient", "beta^T beta is singular (palette colors are coplanar with the origin)");
    }
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      for (auto& r : rhs) std::swap(r[pivot], r[col]);
    }
    for (int r = col + 1; r < 3; ++r) {
      const double factor = a[r][col] / a[col][col];
      for (int c = col; c < 3; ++c) a[r][c] -= factor * a[col][c];
      for (auto& v : rhs) v[r] -= factor * v[col];
    }
  }

  InversePalette out;
  out.num_classes = k;
  out.weights.assign(3 * static_cast<size_t>(k), 0.0);
  for (int j = 0; j < k; ++j) {
    std::array<double, 3> x{};
    for (int r = 2; r >= 0; --r) {
      double s = rhs[j][r];
      for (int c = r + 1; c < 3; ++c) s -= a[r][c] * x[c];
      x[r] = s / a[r][r];
    }
    for (int r = 0; r < 3; ++r) out.weights[static_cast<size_t>(r) * k + j] = x[r];
  }
  return out;
}

double InverseResidual(const Palette& palette, const InversePalette& inverse) {
  const int k = palette.num_classes();
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const Color& c = palette.colors[i];
    for (int j = 0; j < k; ++j) {
      const double v = c[0] * inverse.at(0, j) + c[1] * inverse.at(1, j) +
                       c[2] * inverse.at(2, j) - (i == j ? 1.0 : 0.0);
      total += v * v;
    }
  }
  return total;
}

double NormalEquationError(const Palette& palette, const InversePalette& inverse) {
  const Mat3 g = Gram(palette);
  double worst = 0.0;
  for (int r = 0; r < 3; ++r) {
    for (int j = 0; j < palette.num_classes(); ++j) {
      const double lhs = g[r][0] * inverse.at(0, j) + g[r][1] * inverse.at(1, j) +
                         g[r][2] * inverse.at(2, j);
      worst = std::max(worst, std::abs(lhs - palette.colors[j][r]));
    }
  }
  return worst;
}

bool LinearDecodeIsExact(const Palette& palette, const InversePalette& inverse) {
  Maskige probe(palette.num_classes(), 1);
  LabelMap expected(palette.num_classes(), 1, palette.num_classes());
  for (int k = 0; k < palette.num_classes(); ++k) {
    expected.labels[k] = k;
    std::copy(palette.colors[k].begin(), palette.colors[k].end(), probe.pixel(k));
  }
  return DecodeLinear(probe, inverse) == expected;
}

LabelMap DecodeLinear(const Maskige& maskige, const InversePalette& inverse) {
  const int k = inverse.num_classes;
  LabelMap out(maskige.width, maskige.height, k);
  for (size_t i = 0; i < maskige.pixels(); ++i) {
    const double* px = maskige.pixel(i);
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double s = px[0] * inverse.at(0, j) + px[1] * inverse.at(1, j) + px[2] * inverse.at(2, j);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    out.labels[i] = best;
  }
  return out;
}

LabelMap DecodeNearest(const Maskige& maskige, const Palette& palette) {
  const int k = palette.num_classes();
  LabelMap out(maskige.width, maskige.height, k);
  for (size_t i = 0; i < maskige.pixels(); ++i) {
    const double* px = maskige.pixel(i);
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const Color& c = palette.colors[j];
      const double d0 = px[0] - c[0];
      const double d1 = px[1] - c[1];
      const double d2 = px[2] - c[2];
      const double d = d0 * d0 + d1 * d1 + d2 * d2;
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    out.labels[i] = best;
  }
  return out;
}

LabelMap DecodeProjected(const Maskige& maskige, const Palette& palette,
                         const InversePalette& inverse) {
  const int k = palette.num_classes();
  CheckClassCount(k, inverse.num_classes);
  // Class codes beta_k * gamma, K x K.
  std::vector<double> codes(static_cast<size_t>(k) * k);
  for (int i = 0; i < k; ++i) {
    const Color& c = palette.colors[i];
    for (int j = 0; j < k; ++j) {
      codes[static_cast<size_t>(i) * k + j] =
          c[0] * inverse.at(0, j) + c[1] * inverse.at(1, j) + c[2] * inverse.at(2, j);
    }
  }
  LabelMap out(maskige.width, maskige.height, k);
  std::vector<double> scores(k);
  for (size_t p = 0; p < maskige.pixels(); ++p) {
    const double* px = maskige.pixel(p);
    for (int j = 0; j < k; ++j) {
      scores[j] = px[0] * inverse.at(0, j) + px[1] * inverse.at(1, j) + px[2] * inverse.at(2, j);
    }
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      const double* code = &codes[static_cast<size_t>(i) * k];
      double d = 0.0;
      for (int j = 0; j < k; ++j) {
        const double diff = scores[j] - code[j];
        d += diff * diff;
      }
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    out.labels[p] = best;
  }
  return out;
}

TrainedWindowClassifier TrainWindowInverse(std::span<const Maskige> maskiges,
                                           std::span<const LabelMap> labels,
                                           const WindowInverseOptions& options, Rng& rng) {
  if (maskiges.empty()) throw Error("empty_samples", "empty sample set");
  WindowTrainOptions train;
  train.window = options.window;
  train.epochs = options.epochs;
  train.learning_rate = options.learning_rate;
  train.batch_size = options.batch_size;
  train.max_pixels = options.max_pixels;
  return TrainWindowClassifier(maskiges, labels, train, rng);
}

LabelMap ApplyWindowInverse(const WindowInverseModel& model, const Maskige& maskige) {
  return PredictLabels(model, maskige);
}

WindowInverseModel WindowModelFromInverse(const InversePalette& inverse) {
  WindowInverseModel model(1, inverse.num_classes);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < inverse.num_classes; ++k) model.weight(c, k) = 255.0 * inverse.at(c, k);
  }
  return model;
}

Maskige AddGaussianNoise(const Maskige& maskige, double sigma, Rng& rng) {
  Maskige out = maskige;
  for (double& v : out.values) v = Clamp255(v + rng.Normal(0.0, sigma));
  return out;
}

}  // namespace gss
