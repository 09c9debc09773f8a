#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gss/codec.h"
#include "gss/core.h"
#include "gss/palette.h"
#include "gss/vq.h"

namespace gss {

// GSS-[F/T][F/T]: whether the palette (first letter) and the inverse (second)
// are free of training or trained. FF-R uses a random palette.
enum class Variant { kFF, kFFR, kFT, kTF, kTT };

std::string VariantName(Variant v);
Variant ParseVariant(const std::string& name);

// How the linear variants turn gamma scores into labels.
//   kArgmax: label = argmax(pixel * gamma).
//   kProjected: snap pixel * gamma to the nearest class code beta_k * gamma.
enum class LinearDecodeRule { kArgmax, kProjected };

std::string DecodeRuleName(LinearDecodeRule rule);
LinearDecodeRule ParseDecodeRule(const std::string& name);

struct VqConfig {
  int patch = 4;
  int vocab = 512;
  int max_iters = 100;
  double tol = 1e-6;
};

struct FtConfig {
  int window = 5;
  int epochs = 10;
  double learning_rate = 0.5;
  int batch_size = 32;
  size_t max_pixels = 200000;
  // Gaussian channel noise in [0, 255] units (25 == 25/255 normalized).
  double noise_sigma = 25.0;
};

struct TfConfig {
  int steps = 100;
  double learning_rate = 0.05;
  double gumbel_scale = 0.0;
  // Weight of the ||C beta gamma - C|| term relative to the reconstruction
  // term in the cascaded bound.
  double bound_ratio = 1.0;
  int batch_maps = 8;
  QuantizerGradient estimator{QuantizerGradient::Kind::kSoft, 0.05};
};

struct Stage1Config {
  Variant variant = Variant::kFF;
  // Defaults to PaletteSpec::ForClasses(K).
  std::optional<PaletteSpec> palette_spec;
  VqConfig vq;
  std::optional<FtConfig> ft;
  std::optional<TfConfig> tf;
  LinearDecodeRule linear_rule = LinearDecodeRule::kProjected;
  uint64_t seed = 0;
};

struct ReconstructionReport {
  double miou = 0.0;
  double macc = 0.0;
  std::vector<double> per_class_iou;
};

struct Stage1Artifacts {
  Variant variant = Variant::kFF;
  Palette palette;
  // FF, FF-R, TF.
  std::optional<InversePalette> inverse;
  // FT, TT.
  std::optional<WindowInverseModel> window_inverse;
  LinearDecodeRule linear_rule = LinearDecodeRule::kProjected;
  Codebook codebook;
  QuantizeReport quantize_report;
  ReconstructionReport report;
  // Every SGD update taken while building the artifacts (palette and inverse
  // training); zero for the training-free variants.
  long gradient_steps = 0;
  // TF / TT per-step batch losses.
  std::vector<double> loss_curve;
  uint64_t seed = 0;
};

// gamma for the linear variants: the closed form when beta^T beta is
// invertible, the minimum-norm pseudo-inverse when K < 3 makes it singular by
// construction. Rank-deficient palettes with K >= 3 throw "rank_deficient".
InversePalette PaletteInverse(const Palette& palette);

Stage1Artifacts RunStage1(std::span<const LabelMap> train, std::span<const LabelMap> heldout,
                          const Stage1Config& config);

// Variant-specific X^-1 applied to a (reconstructed) maskige.
LabelMap DecodeMaskige(const Maskige& maskige, const Stage1Artifacts& artifacts);

// Decode(Detokenize(Tokenize(Encode(map)))).
LabelMap Reconstruct(const LabelMap& map, const Stage1Artifacts& artifacts);

ReconstructionReport EvaluateReconstruction(std::span<const LabelMap> maps,
                                            const Stage1Artifacts& artifacts);

// ---- Cascaded palette optimization (TF) ----------------------------------

struct BoundOptions {
  double bound_ratio = 1.0;
  QuantizerGradient estimator;
};

struct BoundEvaluation {
  double loss = 0.0;
  double reconstruction = 0.0;  // ||X_hat - C beta|| / sqrt(N), normalized units
  double residual = 0.0;        // ||C beta gamma - C|| / sqrt(N)
  // d loss / d (beta / 255), K x 3 row-major; filled on request.
  std::vector<double> gradient;
};

// (||X_hat - C beta|| ||gamma|| + ratio ||C beta gamma - C||)^2 over the batch
// with colors normalized to [0, 1], X_hat the quantized maskige. With
// gumbel_scale > 0 the quantizer is Gumbel-perturbed using `rng`.
// For K >= 3 the gradient differentiates gamma as the closed form of beta
// (the passed inverse must be PaletteInverse(palette)); the quantizer part
// goes through options.estimator. For K < 3 gamma is held fixed.
BoundEvaluation EvaluateBound(const Palette& palette, const InversePalette& inverse,
                              std::span<const LabelMap> batch, const Codebook& codebook,
                              const BoundOptions& options, bool with_gradient,
                              double gumbel_scale = 0.0, Rng* rng = nullptr);

struct CascadedStepResult {
  Palette palette;
  InversePalette inverse;
  double loss = 0.0;  // bound at (beta_{t+1}, gamma_{t+1}) on the same batch
  double learning_rate = 0.0;
  int retries = 0;
};

// One minibatch gradient step on beta through the quantizer followed by the
// closed-form gamma of the new beta. Halves the step (up to 10 times) when
// the new beta is rank deficient; then throws "persistent_singularity".
CascadedStepResult CascadedStep(const Palette& palette, std::span<const LabelMap> batch,
                                const Codebook& codebook, double learning_rate,
                                double gumbel_scale, Rng& rng, const BoundOptions& options = {});

}  // namespace gss
