#pragma once

#include <span>
#include <vector>

#include "gss/core.h"
#include "gss/window_classifier.h"

namespace gss {

// The trainable local-window inverse: class scores from a w x w maskige
// neighbourhood.
using WindowInverseModel = WindowClassifier;

// x^(c) = c * beta. Requires a fully labeled map with map.K == palette.K.
Maskige Encode(const LabelMap& map, const Palette& palette);

// gamma = (beta^T beta)^-1 beta^T via Gaussian elimination with partial
// pivoting on the 3x3 normal equations. Throws "rank_deficient" when a pivot
// falls below 1e-9 times the largest entry of beta^T beta.
InversePalette LeastSquaresInverse(const Palette& palette);

// || beta * gamma - I_K ||_F^2
double InverseResidual(const Palette& palette, const InversePalette& inverse);

// Largest |(beta^T beta gamma - beta^T)_ij|.
double NormalEquationError(const Palette& palette, const InversePalette& inverse);

// True when row k of beta * gamma peaks at column k for every k, i.e. when
// the argmax rule of DecodeLinear inverts Encode exactly.
bool LinearDecodeIsExact(const Palette& palette, const InversePalette& inverse);

// Scores = pixel * gamma; label = argmax, ties to the lowest class id.
LabelMap DecodeLinear(const Maskige& maskige, const InversePalette& inverse);

// Label = nearest palette color (Euclidean), ties to the lowest class id.
LabelMap DecodeNearest(const Maskige& maskige, const Palette& palette);

// Maps each pixel through gamma and snaps the K-dimensional score vector to
// the nearest class code beta_k * gamma. Equivalent to nearest-color decoding
// under the metric (beta^T beta)^-1; exact on encoded maskiges.
LabelMap DecodeProjected(const Maskige& maskige, const Palette& palette,
                         const InversePalette& inverse);

struct WindowInverseOptions {
  int window = 5;
  int epochs = 10;
  double learning_rate = 0.5;
  int batch_size = 32;
  size_t max_pixels = 0;
};

// Trains the window inverse on (noisy maskige, label map) pairs with
// per-pixel softmax cross-entropy over labeled pixels.
TrainedWindowClassifier TrainWindowInverse(std::span<const Maskige> maskiges,
                                           std::span<const LabelMap> labels,
                                           const WindowInverseOptions& options, Rng& rng);

LabelMap ApplyWindowInverse(const WindowInverseModel& model, const Maskige& maskige);

// A 1x1 window model reproducing DecodeLinear: weights are 255 * gamma and
// the bias is zero.
WindowInverseModel WindowModelFromInverse(const InversePalette& inverse);

// Adds i.i.d. Gaussian noise (sigma in [0, 255] units) to every channel and
// clamps to [0, 255].
Maskige AddGaussianNoise(const Maskige& maskige, double sigma, Rng& rng);

}  // namespace gss
