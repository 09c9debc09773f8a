#pragma once

#include <span>
#include <vector>

#include "gss/core.h"

namespace gss {

// Linear softmax classifier over a w x w RGB neighbourhood (clamp-to-edge
// padding). Inputs are normalized to [0, 1]; the last feature is a constant
// bias. This one architecture backs the non-linear maskige inverse, the
// unlabeled-area auxiliary head and the discriminative baseline.
struct WindowClassifier {
  int window = 1;
  int num_classes = 0;
  // num_features() x num_classes, row-major; the last row is the bias.
  std::vector<double> weights;

  WindowClassifier() = default;
  WindowClassifier(int w, int k);

  int num_features() const { return 3 * window * window + 1; }
  double& weight(int feature, int k) {
    return weights[static_cast<size_t>(feature) * num_classes + k];
  }
  double weight(int feature, int k) const {
    return weights[static_cast<size_t>(feature) * num_classes + k];
  }
  bool operator==(const WindowClassifier&) const = default;
};

struct WindowTrainOptions {
  int window = 5;
  int epochs = 10;
  double learning_rate = 0.5;
  int batch_size = 32;
  // Upper bound on labeled pixels visited per epoch (0 = all). The subset is
  // drawn once from the rng before training.
  size_t max_pixels = 0;
};

struct TrainingReport {
  double initial_loss = 0.0;
  // Mean minibatch loss over each epoch.
  std::vector<double> epoch_losses;
  long gradient_steps = 0;

  double final_loss() const {
    return epoch_losses.empty() ? initial_loss : epoch_losses.back();
  }
};

struct TrainedWindowClassifier {
  WindowClassifier model;
  TrainingReport report;
};

void SoftmaxInPlace(std::span<double> logits);

// Writes the normalized window features of pixel (x, y) into `out`
// (size num_features).
void ExtractWindowFeatures(const RgbImage& image, int window, int x, int y,
                           std::span<double> out);

void ClassScores(const WindowClassifier& model, const RgbImage& image, int x,
                 int y, std::span<double> scores);

// Per-pixel argmax, ties to the lowest class id.
LabelMap PredictLabels(const WindowClassifier& model, const RgbImage& image);

// Minibatch SGD on per-pixel softmax cross-entropy over labeled pixels,
// starting from all-zero weights.
TrainedWindowClassifier TrainWindowClassifier(std::span<const RgbImage> images,
                                              std::span<const LabelMap> labels,
                                              const WindowTrainOptions& options,
                                              Rng& rng);

// Mean cross-entropy over every labeled pixel. When `weight_grad` is non-null
// it receives d loss / d weights (same layout as weights).
double WindowLoss(const WindowClassifier& model, std::span<const RgbImage> images,
                  std::span<const LabelMap> labels,
                  std::vector<double>* weight_grad = nullptr);

// d loss / d pixel values (in [0, 255] units) of the mean cross-entropy over
// the labeled pixels of one image; same layout as image.values. Adds the
// weight gradient into `weight_grad` when non-null. Returns the loss.
double WindowLossInputGradient(const WindowClassifier& model, const RgbImage& image,
                               const LabelMap& labels, std::vector<double>& input_grad,
                               std::vector<double>* weight_grad = nullptr);

}  // namespace gss
