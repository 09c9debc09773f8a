#pragma once

#include <span>
#include <vector>

#include "gss/core.h"

namespace gss {

// Discrete latent space: V codewords, each a normalized ([0, 1]) p x p RGB
// patch flattened row-major with interleaved channels.
struct Codebook {
  int patch = 4;
  int vocab = 0;
  std::vector<double> codewords;  // vocab x dim()

  int dim() const { return 3 * patch * patch; }
  const double* codeword(int v) const { return &codewords[static_cast<size_t>(v) * dim()]; }
  bool operator==(const Codebook&) const = default;
};

struct QuantizeReport {
  // Weighted sum of squared assignment distances after the initial
  // assignment and after every Lloyd iteration.
  std::vector<double> objective;
  int iterations = 0;
  int requested_vocab = 0;
  // Equals requested_vocab unless the corpus has fewer distinct patches.
  int vocab = 0;
  size_t distinct_patches = 0;
  bool converged = false;
};

struct CodebookFit {
  Codebook codebook;
  QuantizeReport report;
};

struct KMeansOptions {
  int patch = 4;
  int vocab = 512;
  int max_iters = 100;
  double tol = 1e-6;
};

// k-means with k-means++ seeding over all p x p patches of the corpus.
// Identical patches are merged into one weighted point, which leaves the
// objective and the fixed points unchanged. Empty clusters are re-seeded to
// the patch farthest from its centroid. When the corpus holds fewer distinct
// patches than requested codewords the vocabulary shrinks to that count.
CodebookFit FitCodebook(std::span<const Maskige> maskiges, const KMeansOptions& options,
                        Rng& rng);

// Normalized patches of one maskige, grid order, each dim() long.
std::vector<double> ExtractPatches(const Maskige& maskige, int patch);

// Nearest codeword per patch (Euclidean, ties to the lowest id). `patches`
// holds count x dim values.
std::vector<int> NearestCodewords(std::span<const double> patches, const Codebook& codebook);

LatentGrid Tokenize(const Maskige& maskige, const Codebook& codebook);

Maskige Detokenize(const LatentGrid& grid, const Codebook& codebook);

// Squared error (in normalized units) between a maskige and its
// quantized reconstruction.
double QuantizationError(const Maskige& maskige, const Codebook& codebook);

// Backward rule for the quantizer.
//   kIdentity: straight-through, d L / d input = d L / d output.
//   kSoft: hard Gumbel-softmax, forward stays hard while the backward pass
//     differentiates the soft assignment sum_v softmax_v(-(d_v - g G_v) / T) e_v.
struct QuantizerGradient {
  enum class Kind { kIdentity, kSoft };
  Kind kind = Kind::kIdentity;
  double temperature = 0.05;
};

struct RoundtripResult {
  Maskige quantized;
  LatentGrid tokens;
  // Gumbel perturbation per (patch, codeword), scaled; empty when disabled.
  std::vector<double> perturbation;
};

// Forward: Detokenize(Tokenize(m)). With gumbel_scale > 0 each patch picks
// argmin_v (d_v - gumbel_scale * G_v) with G ~ Gumbel(0, 1) from `rng`.
RoundtripResult StraightThroughRoundtrip(const Maskige& maskige, const Codebook& codebook,
                                         double gumbel_scale = 0.0, Rng* rng = nullptr);

// Gradient of a downstream loss w.r.t. the input maskige given its gradient
// w.r.t. the quantized output (both in [0, 255] units).
std::vector<double> StraightThroughBackward(const Maskige& input, const Codebook& codebook,
                                            const RoundtripResult& forward,
                                            std::span<const double> grad_output,
                                            const QuantizerGradient& rule);

// The soft relaxation used by kSoft, exposed for gradient checking.
Maskige SoftRoundtrip(const Maskige& maskige, const Codebook& codebook, double temperature,
                      std::span<const double> perturbation = {});

std::vector<double> SoftRoundtripBackward(const Maskige& maskige, const Codebook& codebook,
                                          double temperature,
                                          std::span<const double> grad_output,
                                          std::span<const double> perturbation = {});

// Smallest distance between two codewords (normalized units).
double MinCodewordGap(const Codebook& codebook);

}  // namespace gss
