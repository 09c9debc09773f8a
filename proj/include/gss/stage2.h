#pragma once

#include <span>
#include <vector>

#include "gss/core.h"
#include "gss/stage1.h"
#include "gss/window_classifier.h"

namespace gss {

// c~ = M_u * pseudo + (1 - M_u) * c.
struct ComposedLabels {
  LabelMap labels;
  std::vector<uint8_t> pseudo_mask;  // M_u, 1 where the label came from pseudo
};

ComposedLabels ComposeLabels(const LabelMap& labels, const LabelMap& pseudo);

// Pseudo-labels unlabeled areas from local image appearance.
using AuxiliaryHead = WindowClassifier;

TrainedWindowClassifier TrainAuxiliary(std::span<const RgbImage> images,
                                       std::span<const LabelMap> labels,
                                       const WindowTrainOptions& options, Rng& rng);

// Per-pixel softmax classifier on the image (the discriminative comparison).
// Same architecture and training loop as the auxiliary head.
TrainedWindowClassifier DiscriminativeBaseline(std::span<const RgbImage> images,
                                               std::span<const LabelMap> labels,
                                               const WindowTrainOptions& options, Rng& rng);

// Image-conditioned categorical over the V codebook tokens, one per p x p
// cell. Features are the normalized cell pixels plus a bias.
//   hidden == 0: logits = f W1               (W1: F x V)
//   hidden  > 0: logits = [tanh(f W1), 1] W2  (W1: F x h, W2: (h + 1) x V)
struct TokenPredictor {
  int patch = 4;
  int vocab = 0;
  int hidden = 0;
  std::vector<double> w1;
  std::vector<double> w2;

  TokenPredictor() = default;
  TokenPredictor(int patch, int vocab, int hidden);

  int num_features() const { return 3 * patch * patch + 1; }
  size_t num_params() const { return w1.size() + w2.size(); }
  bool operator==(const TokenPredictor&) const = default;
};

struct PredictorOptions {
  int epochs = 20;
  double learning_rate = 0.5;
  int batch_size = 64;
  double momentum = 0.0;
  double weight_decay = 0.0;
  // -1: train linear first, switch to `hidden_units` when its final loss
  // stays above 0.5 ln V. 0: linear only. > 0: always that many units.
  int hidden = -1;
  int hidden_units = 64;
};

struct TrainedTokenPredictor {
  TokenPredictor model;
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;
  long gradient_steps = 0;
  // Final epoch loss of the linear attempt when the auto rule fired.
  std::optional<double> linear_plateau;

  double final_loss() const { return epoch_losses.empty() ? initial_loss : epoch_losses.back(); }
};

// Cells x num_features, grid order.
std::vector<double> CellFeatures(const RgbImage& image, int patch);

// Cells x V softmax probabilities.
std::vector<double> PredictDistribution(const TokenPredictor& model, std::span<const double> features);

// Per-cell argmax, ties to the lowest token id.
LatentGrid PredictTokens(const TokenPredictor& model, const RgbImage& image);

// Mean per-cell cross-entropy -log p(target | x). With `grad` non-null it
// receives d loss / d params laid out as [w1, w2].
double PredictorLoss(const TokenPredictor& model, std::span<const double> features,
                     std::span<const int> targets, std::vector<double>* grad = nullptr);

// Targets are Tokenize(Encode(c~)) under the stage I artifacts.
std::vector<int> TokenTargets(const LabelMap& composed, const Stage1Artifacts& artifacts);

TrainedTokenPredictor TrainTokenPredictor(std::span<const RgbImage> images,
                                          std::span<const LabelMap> composed,
                                          const Stage1Artifacts& artifacts,
                                          const PredictorOptions& options, Rng& rng);

}  // namespace gss
