#include "gss/stage2.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gss/codec.h"
#include "gss/vq.h"

namespace gss {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

void RowSoftmax(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

struct Forward {
  Matrix hidden;  // b x (h + 1), last column 1; empty for linear models
  Matrix probs;   // b x V
};

Forward Run(const TokenPredictor& model, const Eigen::Ref<const Matrix>& x) {
  const int f = model.num_features();
  Forward out;
  if (model.hidden == 0) {
    out.probs = x * ConstMatrixMap(model.w1.data(), f, model.vocab);
  } else {
    const int h = model.hidden;
    out.hidden.resize(x.rows(), h + 1);
    out.hidden.leftCols(h) = (x * ConstMatrixMap(model.w1.data(), f, h)).array().tanh().matrix();
    out.hidden.col(h).setOnes();
    out.probs = out.hidden * ConstMatrixMap(model.w2.data(), h + 1, model.vocab);
  }
  RowSoftmax(out.probs);
  return out;
}

// Mean loss of a batch; optionally writes d loss / d [w1, w2].
double BatchLossGradient(const TokenPredictor& model, const Eigen::Ref<const Matrix>& x,
                         std::span<const int> targets, std::vector<double>* grad) {
  const Forward fw = Run(model, x);
  const double n = static_cast<double>(x.rows());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    loss -= std::log(std::max(fw.probs(r, targets[r]), 1e-300));
  }
  loss /= n;
  if (!grad) return loss;

  Matrix g = fw.probs;
  for (Eigen::Index r = 0; r < x.rows(); ++r) g(r, targets[r]) -= 1.0;
  g /= n;
  grad->assign(model.num_params(), 0.0);
  const int f = model.num_features();
  if (model.hidden == 0) {
    MatrixMap(grad->data(), f, model.vocab).noalias() = x.transpose() * g;
  } else {
    const int h = model.hidden;
    MatrixMap(grad->data() + model.w1.size(), h + 1, model.vocab).noalias() =
        fw.hidden.transpose() * g;
    Matrix dh = g * ConstMatrixMap(model.w2.data(), h + 1, model.vocab).topRows(h).transpose();
    dh.array() *= 1.0 - fw.hidden.leftCols(h).array().square();
    MatrixMap(grad->data(), f, h).noalias() = x.transpose() * dh;
  }
  return loss;
}

TrainedTokenPredictor TrainWithShape(const Matrix& features, std::span<const int> targets,
                                     int patch, int vocab, int hidden,
                                     const PredictorOptions& options, Rng& rng) {
  TrainedTokenPredictor result;
  result.model = TokenPredictor(patch, vocab, hidden);
  TokenPredictor& model = result.model;
  if (hidden > 0) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(model.num_features()));
    for (double& w : model.w1) w = rng.Normal(0.0, scale);
  }
  // Zero output weights: uniform prediction.
  result.initial_loss = std::log(static_cast<double>(vocab));

  const size_t n = targets.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  const int batch = std::max(1, options.batch_size);
  std::vector<double> grad;
  std::vector<double> velocity(model.num_params(), 0.0);
  Matrix xb(batch, model.num_features());
  std::vector<int> tb(batch);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.Shuffle(order);
    double total = 0.0;
    for (size_t start = 0; start < n; start += batch) {
      const size_t count = std::min<size_t>(batch, n - start);
      if (static_cast<Eigen::Index>(count) != xb.rows()) xb.resize(count, model.num_features());
      for (size_t b = 0; b < count; ++b) {
        xb.row(b) = features.row(order[start + b]);
        tb[b] = targets[order[start + b]];
      }
      total += BatchLossGradient(model, xb, std::span<const int>(tb.data(), count), &grad) * count;
      size_t i = 0;
      for (std::vector<double>* w : {&model.w1, &model.w2}) {
        for (double& v : *w) {
          const double g = grad[i] + options.weight_decay * v;
          velocity[i] = options.momentum * velocity[i] + g;
          v -= options.learning_rate * velocity[i];
          ++i;
        }
      }
      ++result.gradient_steps;
      if (xb.rows() != batch) xb.resize(batch, model.num_features());
    }
    result.epoch_losses.push_back(total / static_cast<double>(n));
  }
  return result;
}

}  // namespace

ComposedLabels ComposeLabels(const LabelMap& labels, const LabelMap& pseudo) {
  if (labels.width != pseudo.width || labels.height != pseudo.height) {
    throw Error("shape_mismatch", "labels and pseudo labels differ in size");
  }
  if (labels.num_classes != pseudo.num_classes) {
    throw Error("class_count_mismatch", "labels and pseudo labels disagree on K");
  }
  ComposedLabels out{labels, std::vector<uint8_t>(labels.size(), 0)};
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels.IsLabeled(i)) continue;
    if (!pseudo.IsLabeled(i)) throw Error("pseudo_incomplete", "pseudo labels incomplete");
    out.labels.labels[i] = pseudo.labels[i];
    out.pseudo_mask[i] = 1;
  }
  return out;
}

TrainedWindowClassifier TrainAuxiliary(std::span<const RgbImage> images,
                                       std::span<const LabelMap> labels,
                                       const WindowTrainOptions& options, Rng& rng) {
  return TrainWindowClassifier(images, labels, options, rng);
}

TrainedWindowClassifier DiscriminativeBaseline(std::span<const RgbImage> images,
                                               std::span<const LabelMap> labels,
                                               const WindowTrainOptions& options, Rng& rng) {
  return TrainWindowClassifier(images, labels, options, rng);
}

TokenPredictor::TokenPredictor(int p, int v, int h) : patch(p), vocab(v), hidden(h) {
  if (p < 1 || v < 1 || h < 0) throw Error("invalid_argument", "bad token predictor shape");
  if (h == 0) {
    w1.assign(static_cast<size_t>(num_features()) * v, 0.0);
  } else {
    w1.assign(static_cast<size_t>(num_features()) * h, 0.0);
    w2.assign(static_cast<size_t>(h + 1) * v, 0.0);
  }
}

std::vector<double> CellFeatures(const RgbImage& image, int patch) {
  if (image.width % patch != 0 || image.height % patch != 0) {
    throw Error("patch_mismatch", "dimension not divisible by patch");
  }
  const int gw = image.width / patch;
  const int gh = image.height / patch;
  const int f = 3 * patch * patch + 1;
  std::vector<double> out(static_cast<size_t>(gw) * gh * f);
  size_t o = 0;
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          const double* px = image.pixel(gx * patch + x, gy * patch + y);
          for (int c = 0; c < 3; ++c) out[o++] = px[c] / 255.0;
        }
      }
      out[o++] = 1.0;
    }
  }
  return out;
}

std::vector<double> PredictDistribution(const TokenPredictor& model, std::span<const double> features) {
  const int f = model.num_features();
  const Eigen::Index n = static_cast<Eigen::Index>(features.size() / f);
  const Forward fw = Run(model, ConstMatrixMap(features.data(), n, f));
  return std::vector<double>(fw.probs.data(), fw.probs.data() + fw.probs.size());
}

LatentGrid PredictTokens(const TokenPredictor& model, const RgbImage& image) {
  const std::vector<double> features = CellFeatures(image, model.patch);
  const std::vector<double> probs = PredictDistribution(model, features);
  LatentGrid grid;
  grid.grid_w = image.width / model.patch;
  grid.grid_h = image.height / model.patch;
  grid.tokens.resize(static_cast<size_t>(grid.grid_w) * grid.grid_h);
  for (size_t cell = 0; cell < grid.tokens.size(); ++cell) {
    const double* row = &probs[cell * model.vocab];
    // First maximum wins.
    grid.tokens[cell] = static_cast<int>(std::max_element(row, row + model.vocab) - row);
  }
  return grid;
}

double PredictorLoss(const TokenPredictor& model, std::span<const double> features,
                     std::span<const int> targets, std::vector<double>* grad) {
  const int f = model.num_features();
  if (features.size() != targets.size() * static_cast<size_t>(f)) {
    throw Error("shape_mismatch", "feature and target counts differ");
  }
  if (targets.empty()) throw Error("empty_samples", "no cells");
  return BatchLossGradient(model, ConstMatrixMap(features.data(), targets.size(), f), targets, grad);
}

std::vector<int> TokenTargets(const LabelMap& composed, const Stage1Artifacts& artifacts) {
  return Tokenize(Encode(composed, artifacts.palette), artifacts.codebook).tokens;
}

TrainedTokenPredictor TrainTokenPredictor(std::span<const RgbImage> images,
                                          std::span<const LabelMap> composed,
                                          const Stage1Artifacts& artifacts,
                                          const PredictorOptions& options, Rng& rng) {
  if (images.empty()) throw Error("empty_samples", "no training images");
  if (images.size() != composed.size()) throw Error("shape_mismatch", "image and label counts differ");
  const int patch = artifacts.codebook.patch;
  const int f = 3 * patch * patch + 1;
  std::vector<double> all_features;
  std::vector<int> targets;
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != composed[i].width || images[i].height != composed[i].height) {
      throw Error("shape_mismatch", "image and label dimensions differ");
    }
    const std::vector<double> feats = CellFeatures(images[i], patch);
    all_features.insert(all_features.end(), feats.begin(), feats.end());
    const std::vector<int> t = TokenTargets(composed[i], artifacts);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  const Matrix features = ConstMatrixMap(all_features.data(), targets.size(), f);
  const int vocab = artifacts.codebook.vocab;

  if (options.hidden > 0) {
    return TrainWithShape(features, targets, patch, vocab, options.hidden, options, rng);
  }
  TrainedTokenPredictor linear = TrainWithShape(features, targets, patch, vocab, 0, options, rng);
  if (options.hidden == 0 || linear.final_loss() <= 0.5 * std::log(static_cast<double>(vocab))) {
    return linear;
  }
  TrainedTokenPredictor deep =
      TrainWithShape(features, targets, patch, vocab, options.hidden_units, options, rng);
  deep.linear_plateau = linear.final_loss();
  deep.gradient_steps += linear.gradient_steps;
  return deep;
}

}  // namespace gss
