#include "gss/window_classifier.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gss {
namespace {

void CheckCompatible(std::span<const RgbImage> images, std::span<const LabelMap> labels) {
  if (images.size() != labels.size()) {
    throw Error("shape_mismatch", "image and label counts differ");
  }
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != labels[i].width || images[i].height != labels[i].height) {
      throw Error("shape_mismatch", "image and label dimensions differ");
    }
  }
}

struct PixelRef {
  uint32_t sample;
  uint32_t pixel;
};

// -log p[label], clamped away from log(0).
double CrossEntropy(std::span<const double> probs, int label) {
  return -std::log(std::max(probs[label], 1e-300));
}

}  // namespace

WindowClassifier::WindowClassifier(int w, int k) : window(w), num_classes(k) {
  if (w < 1 || w % 2 == 0) throw Error("invalid_window", "window must be odd and >= 1");
  if (k < 1) throw Error("invalid_argument", "class count must be positive");
  weights.assign(static_cast<size_t>(num_features()) * k, 0.0);
}

void SoftmaxInPlace(std::span<double> logits) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double v : logits) max_logit = std::max(max_logit, v);
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - max_logit);
    total += v;
  }
  for (double& v : logits) v /= total;
}

void ExtractWindowFeatures(const RgbImage& image, int window, int x, int y,
                           std::span<double> out) {
  const int radius = window / 2;
  size_t f = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    const int yy = std::clamp(y + dy, 0, image.height - 1);
    for (int dx = -radius; dx <= radius; ++dx) {
      const int xx = std::clamp(x + dx, 0, image.width - 1);
      const double* px = image.pixel(xx, yy);
      out[f++] = px[0] / 255.0;
      out[f++] = px[1] / 255.0;
      out[f++] = px[2] / 255.0;
    }
  }
  out[f] = 1.0;
}

void ClassScores(const WindowClassifier& model, const RgbImage& image, int x, int y,
                 std::span<double> scores) {
  std::vector<double> features(model.num_features());
  ExtractWindowFeatures(image, model.window, x, y, features);
  std::fill(scores.begin(), scores.end(), 0.0);
  for (int f = 0; f < model.num_features(); ++f) {
    const double v = features[f];
    if (v == 0.0) continue;
    const double* row = &model.weights[static_cast<size_t>(f) * model.num_classes];
    for (int k = 0; k < model.num_classes; ++k) scores[k] += v * row[k];
  }
}

LabelMap PredictLabels(const WindowClassifier& model, const RgbImage& image) {
  LabelMap out(image.width, image.height, model.num_classes);
  std::vector<double> scores(model.num_classes);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      ClassScores(model, image, x, y, scores);
      int best = 0;
      for (int k = 1; k < model.num_classes; ++k) {
        if (scores[k] > scores[best]) best = k;
      }
      out.at(x, y) = best;
    }
  }
  return out;
}

TrainedWindowClassifier TrainWindowClassifier(std::span<const RgbImage> images,
                                              std::span<const LabelMap> labels,
                                              const WindowTrainOptions& options,
                                              Rng& rng) {
  if (images.empty()) throw Error("empty_samples", "no training samples");
  CheckCompatible(images, labels);
  const int num_classes = labels.front().num_classes;
  for (const LabelMap& map : labels) {
    if (map.num_classes != num_classes) {
      throw Error("class_count_mismatch", "training samples disagree on K");
    }
    if (options.window > map.width || options.window > map.height) {
      throw Error("window_exceeds_image", "window larger than training image");
    }
  }

  TrainedWindowClassifier result{WindowClassifier(options.window, num_classes), {}};
  WindowClassifier& model = result.model;

  std::vector<PixelRef> pixels;
  for (size_t s = 0; s < labels.size(); ++s) {
    for (size_t i = 0; i < labels[s].size(); ++i) {
      if (labels[s].IsLabeled(i)) {
        pixels.push_back({static_cast<uint32_t>(s), static_cast<uint32_t>(i)});
      }
    }
  }
  if (pixels.empty()) throw Error("no_labeled_pixels", "training set has no labeled pixels");
  if (options.max_pixels > 0 && pixels.size() > options.max_pixels) {
    rng.Shuffle(pixels);
    pixels.resize(options.max_pixels);
  }

  // All-zero weights give uniform scores.
  result.report.initial_loss = std::log(static_cast<double>(num_classes));

  const int num_features = model.num_features();
  const int batch = std::max(1, options.batch_size);
  std::vector<double> features(static_cast<size_t>(batch) * num_features);
  std::vector<double> probs(static_cast<size_t>(batch) * num_classes);
  std::vector<int> targets(batch);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.Shuffle(pixels);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < pixels.size(); start += batch) {
      const size_t count = std::min<size_t>(batch, pixels.size() - start);
      for (size_t b = 0; b < count; ++b) {
        const PixelRef ref = pixels[start + b];
        const RgbImage& image = images[ref.sample];
        const int x = static_cast<int>(ref.pixel % image.width);
        const int y = static_cast<int>(ref.pixel / image.width);
        std::span<double> feat(&features[b * num_features], num_features);
        ExtractWindowFeatures(image, model.window, x, y, feat);
        std::span<double> p(&probs[b * num_classes], num_classes);
        std::fill(p.begin(), p.end(), 0.0);
        for (int f = 0; f < num_features; ++f) {
          const double v = feat[f];
          if (v == 0.0) continue;
          const double* row = &model.weights[static_cast<size_t>(f) * num_classes];
          for (int k = 0; k < num_classes; ++k) p[k] += v * row[k];
        }
        SoftmaxInPlace(p);
        targets[b] = labels[ref.sample].labels[ref.pixel];
        epoch_loss += CrossEntropy(p, targets[b]);
        p[targets[b]] -= 1.0;
      }
      const double scale = options.learning_rate / static_cast<double>(count);
      for (size_t b = 0; b < count; ++b) {
        const double* feat = &features[b * num_features];
        const double* delta = &probs[b * num_classes];
        for (int f = 0; f < num_features; ++f) {
          const double v = feat[f];
          if (v == 0.0) continue;
          double* row = &model.weights[static_cast<size_t>(f) * num_classes];
          for (int k = 0; k < num_classes; ++k) row[k] -= scale * v * delta[k];
        }
      }
      ++result.report.gradient_steps;
    }
    result.report.epoch_losses.push_back(epoch_loss / static_cast<double>(pixels.size()));
  }
  return result;
}

double WindowLoss(const WindowClassifier& model, std::span<const RgbImage> images,
                  std::span<const LabelMap> labels, std::vector<double>* weight_grad) {
  CheckCompatible(images, labels);
  const int num_features = model.num_features();
  const int num_classes = model.num_classes;
  if (weight_grad) weight_grad->assign(model.weights.size(), 0.0);
  std::vector<double> features(num_features);
  std::vector<double> probs(num_classes);
  double total = 0.0;
  size_t count = 0;
  for (size_t s = 0; s < images.size(); ++s) {
    const RgbImage& image = images[s];
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const int label = labels[s].at(x, y);
        if (label == labels[s].unlabeled()) continue;
        ExtractWindowFeatures(image, model.window, x, y, features);
        std::fill(probs.begin(), probs.end(), 0.0);
        for (int f = 0; f < num_features; ++f) {
          for (int k = 0; k < num_classes; ++k) probs[k] += features[f] * model.weight(f, k);
        }
        SoftmaxInPlace(probs);
        total += CrossEntropy(probs, label);
        ++count;
        if (weight_grad) {
          probs[label] -= 1.0;
          for (int f = 0; f < num_features; ++f) {
            for (int k = 0; k < num_classes; ++k) {
              (*weight_grad)[static_cast<size_t>(f) * num_classes + k] += features[f] * probs[k];
            }
          }
        }
      }
    }
  }
  if (count == 0) throw Error("no_labeled_pixels", "no labeled pixels to score");
  if (weight_grad) {
    for (double& g : *weight_grad) g /= static_cast<double>(count);
  }
  return total / static_cast<double>(count);
}

double WindowLossInputGradient(const WindowClassifier& model, const RgbImage& image,
                               const LabelMap& labels, std::vector<double>& input_grad,
                               std::vector<double>* weight_grad) {
  if (image.width != labels.width || image.height != labels.height) {
    throw Error("shape_mismatch", "image and label dimensions differ");
  }
  const int num_features = model.num_features();
  const int num_classes = model.num_classes;
  const int radius = model.window / 2;
  input_grad.assign(image.values.size(), 0.0);
  std::vector<double> features(num_features);
  std::vector<double> probs(num_classes);
  std::vector<double> feature_grad(num_features);
  std::vector<double> local_weight_grad;
  if (weight_grad) local_weight_grad.assign(model.weights.size(), 0.0);

  double total = 0.0;
  size_t count = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int label = labels.at(x, y);
      if (label == labels.unlabeled()) continue;
      ExtractWindowFeatures(image, model.window, x, y, features);
      std::fill(probs.begin(), probs.end(), 0.0);
      for (int f = 0; f < num_features; ++f) {
        for (int k = 0; k < num_classes; ++k) probs[k] += features[f] * model.weight(f, k);
      }
      SoftmaxInPlace(probs);
      total += CrossEntropy(probs, label);
      ++count;
      probs[label] -= 1.0;
      for (int f = 0; f < num_features; ++f) {
        double g = 0.0;
        for (int k = 0; k < num_classes; ++k) g += model.weight(f, k) * probs[k];
        feature_grad[f] = g;
        if (weight_grad) {
          for (int k = 0; k < num_classes; ++k) {
            local_weight_grad[static_cast<size_t>(f) * num_classes + k] += features[f] * probs[k];
          }
        }
      }
      size_t f = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = std::clamp(y + dy, 0, image.height - 1);
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = std::clamp(x + dx, 0, image.width - 1);
          const size_t base = 3 * (static_cast<size_t>(yy) * image.width + xx);
          for (int c = 0; c < 3; ++c) input_grad[base + c] += feature_grad[f++] / 255.0;
        }
      }
    }
  }
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (double& g : input_grad) g *= inv;
  if (weight_grad) {
    if (weight_grad->size() != model.weights.size()) weight_grad->assign(model.weights.size(), 0.0);
    for (size_t i = 0; i < local_weight_grad.size(); ++i) (*weight_grad)[i] += local_weight_grad[i] * inv;
  }
  return total * inv;
}

}  // namespace gss
