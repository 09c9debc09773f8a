#include "gss/stage1.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "gss/metrics.h"

namespace gss {
namespace {

constexpr int kMaxStepRetries = 10;

std::vector<Maskige> EncodeAll(std::span<const LabelMap> maps, const Palette& palette) {
  std::vector<Maskige> out;
  out.reserve(maps.size());
  for (const LabelMap& m : maps) out.push_back(Encode(m, palette));
  return out;
}

Codebook FitFor(std::span<const LabelMap> train, const Palette& palette, const VqConfig& vq,
                Rng& rng, QuantizeReport* report) {
  const std::vector<Maskige> maskiges = EncodeAll(train, palette);
  KMeansOptions options;
  options.patch = vq.patch;
  options.vocab = vq.vocab;
  options.max_iters = vq.max_iters;
  options.tol = vq.tol;
  CodebookFit fit = FitCodebook(maskiges, options, rng);
  if (report) *report = fit.report;
  return std::move(fit.codebook);
}

std::vector<LabelMap> SampleBatch(std::span<const LabelMap> maps, int size, Rng& rng) {
  std::vector<LabelMap> batch;
  batch.reserve(size);
  for (int i = 0; i < size; ++i) {
    batch.push_back(maps[static_cast<size_t>(rng.UniformInt(0, static_cast<int64_t>(maps.size()) - 1))]);
  }
  return batch;
}

Palette ClampedStep(const Palette& palette, std::span<const double> gradient, double step) {
  Palette out = palette;
  for (int k = 0; k < palette.num_classes(); ++k) {
    for (int c = 0; c < 3; ++c) {
      out.colors[k][c] = Clamp255(palette.colors[k][c] - step * gradient[3 * k + c]);
    }
  }
  return out;
}

void CheckMaps(std::span<const LabelMap> maps, int num_classes, int patch) {
  for (const LabelMap& m : maps) {
    CheckValid(m, patch);
    if (m.num_classes != num_classes) {
      throw Error("class_count_mismatch", "maps disagree on K");
    }
    for (size_t i = 0; i < m.size(); ++i) {
      if (!m.IsLabeled(i)) throw Error("unlabeled_pixel", "stage I maps must be fully labeled");
    }
  }
}

}  // namespace

std::string VariantName(Variant v) {
  switch (v) {
    case Variant::kFF: return "FF";
    case Variant::kFFR: return "FF-R";
    case Variant::kFT: return "FT";
    case Variant::kTF: return "TF";
    case Variant::kTT: return "TT";
  }
  return "?";
}

Variant ParseVariant(const std::string& name) {
  if (name == "FF") return Variant::kFF;
  if (name == "FF-R") return Variant::kFFR;
  if (name == "FT") return Variant::kFT;
  if (name == "TF") return Variant::kTF;
  if (name == "TT") return Variant::kTT;
  throw Error("config_parse", "unknown variant '" + name + "'");
}

std::string DecodeRuleName(LinearDecodeRule rule) {
  return rule == LinearDecodeRule::kArgmax ? "argmax" : "projected";
}

LinearDecodeRule ParseDecodeRule(const std::string& name) {
  if (name == "argmax") return LinearDecodeRule::kArgmax;
  if (name == "projected") return LinearDecodeRule::kProjected;
  throw Error("config_parse", "unknown linear decode rule '" + name + "'");
}

InversePalette PaletteInverse(const Palette& palette) {
  if (palette.num_classes() >= 3) return LeastSquaresInverse(palette);
  const int k = palette.num_classes();
  Eigen::MatrixXd beta(k, 3);
  for (int i = 0; i < k; ++i) {
    for (int c = 0; c < 3; ++c) beta(i, c) = palette.colors[i][c];
  }
  const Eigen::MatrixXd pinv = beta.completeOrthogonalDecomposition().pseudoInverse();
  InversePalette out;
  out.num_classes = k;
  out.weights.resize(3 * static_cast<size_t>(k));
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < k; ++i) out.weights[static_cast<size_t>(c) * k + i] = pinv(c, i);
  }
  return out;
}

LabelMap DecodeMaskige(const Maskige& maskige, const Stage1Artifacts& artifacts) {
  if (artifacts.window_inverse) return ApplyWindowInverse(*artifacts.window_inverse, maskige);
  if (!artifacts.inverse) throw Error("invalid_artifacts", "stage I artifacts carry no inverse");
  if (artifacts.linear_rule == LinearDecodeRule::kArgmax) {
    return DecodeLinear(maskige, *artifacts.inverse);
  }
  return DecodeProjected(maskige, artifacts.palette, *artifacts.inverse);
}

LabelMap Reconstruct(const LabelMap& map, const Stage1Artifacts& artifacts) {
  const Maskige encoded = Encode(map, artifacts.palette);
  const Maskige decoded = Detokenize(Tokenize(encoded, artifacts.codebook), artifacts.codebook);
  return DecodeMaskige(decoded, artifacts);
}

ReconstructionReport EvaluateReconstruction(std::span<const LabelMap> maps,
                                            const Stage1Artifacts& artifacts) {
  if (maps.empty()) throw Error("empty_split", "no held-out maps");
  ConfusionMatrix confusion(maps.front().num_classes);
  for (const LabelMap& m : maps) confusion.Add(Reconstruct(m, artifacts), m);
  ReconstructionReport report;
  report.miou = MeanIou(confusion);
  report.macc = MeanAccuracy(confusion);
  report.per_class_iou = PerClassIou(confusion);
  return report;
}

BoundEvaluation EvaluateBound(const Palette& palette, const InversePalette& inverse,
                              std::span<const LabelMap> batch, const Codebook& codebook,
                              const BoundOptions& options, bool with_gradient,
                              double gumbel_scale, Rng* rng) {
  if (batch.empty()) throw Error("empty_samples", "empty batch");
  const int k = palette.num_classes();
  // gamma in normalized units: gamma(beta / 255) = 255 gamma(beta).
  std::vector<double> gamma(inverse.weights.size());
  double gamma_norm2 = 0.0;
  for (size_t i = 0; i < gamma.size(); ++i) {
    gamma[i] = 255.0 * inverse.weights[i];
    gamma_norm2 += gamma[i] * gamma[i];
  }
  const double gamma_norm = std::sqrt(gamma_norm2);

  std::vector<double> class_pixels(k, 0.0);
  double pixels = 0.0;
  double recon2 = 0.0;
  std::vector<RoundtripResult> forwards;
  std::vector<Maskige> encoded;
  for (const LabelMap& m : batch) {
    encoded.push_back(Encode(m, palette));
    forwards.push_back(StraightThroughRoundtrip(encoded.back(), codebook, gumbel_scale, rng));
    const Maskige& x = encoded.back();
    const Maskige& q = forwards.back().quantized;
    for (size_t i = 0; i < x.values.size(); ++i) {
      const double e = (q.values[i] - x.values[i]) / 255.0;
      recon2 += e * e;
    }
    for (int label : m.labels) class_pixels[label] += 1.0;
    pixels += static_cast<double>(m.size());
  }

  // Row k of (B gamma - I), shared by every pixel of class k.
  std::vector<double> code_error(static_cast<size_t>(k) * k);
  double residual2 = 0.0;
  for (int a = 0; a < k; ++a) {
    const Color& c = palette.colors[a];
    for (int j = 0; j < k; ++j) {
      const double v = (c[0] * gamma[j] + c[1] * gamma[k + j] + c[2] * gamma[2 * k + j]) / 255.0 -
                       (a == j ? 1.0 : 0.0);
      code_error[static_cast<size_t>(a) * k + j] = v;
      residual2 += class_pixels[a] * v * v;
    }
  }

  BoundEvaluation out;
  out.reconstruction = std::sqrt(recon2 / pixels);
  out.residual = std::sqrt(residual2 / pixels);
  const double inner = out.reconstruction * gamma_norm + options.bound_ratio * out.residual;
  out.loss = inner * inner;
  if (!with_gradient) return out;

  out.gradient.assign(static_cast<size_t>(k) * 3, 0.0);
  if (inner == 0.0) return out;
  const double coef = 2.0 * inner;

  if (out.reconstruction > 0.0 && options.estimator.kind == QuantizerGradient::Kind::kSoft) {
    // d ||E|| / d X with E = Q(X) - X: J^T G - G, G = E / (||E|| sqrt(N)).
    const double scale = 1.0 / (out.reconstruction * pixels);
    for (size_t b = 0; b < batch.size(); ++b) {
      const Maskige& x = encoded[b];
      const Maskige& q = forwards[b].quantized;
      std::vector<double> g(x.values.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = (q.values[i] - x.values[i]) / 255.0 * scale;
      const std::vector<double> through =
          StraightThroughBackward(x, codebook, forwards[b], g, options.estimator);
      for (size_t p = 0; p < batch[b].size(); ++p) {
        const int label = batch[b].labels[p];
        for (int c = 0; c < 3; ++c) {
          out.gradient[3 * label + c] += coef * gamma_norm * (through[3 * p + c] - g[3 * p + c]);
        }
      }
    }
  }

  if (k < 3) {
    // Pseudo-inverse regime: gamma held fixed.
    if (out.residual > 0.0) {
      const double scale = coef * options.bound_ratio / (out.residual * pixels);
      for (int a = 0; a < k; ++a) {
        if (class_pixels[a] == 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int j = 0; j < k; ++j) s += code_error[static_cast<size_t>(a) * k + j] * gamma[c * k + j];
          out.gradient[3 * a + c] += scale * class_pixels[a] * s;
        }
      }
    }
    return out;
  }

  // gamma = (B^T B)^-1 B^T is a function of B = beta / 255, so both
  // ||gamma|| and the residual are differentiated through it.
  //   d ||gamma||^2 / dB = -2 B M^-2
  //   d tr((P - I) W (P - I)) / dB = 4 (S B M^-1 - B M^-1 B^T S B M^-1)
  // with M = B^T B, P = B M^-1 B^T, W = diag(class pixels), S = sym(W (P - I)).
  Eigen::MatrixXd b(k, 3);
  for (int a = 0; a < k; ++a) {
    for (int c = 0; c < 3; ++c) b(a, c) = palette.colors[a][c] / 255.0;
  }
  const Eigen::Matrix3d m_inv = (b.transpose() * b).inverse();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(k, 3);
  if (out.reconstruction > 0.0 && gamma_norm > 0.0) {
    grad += coef * out.reconstruction * (-b * m_inv * m_inv / gamma_norm);
  }
  if (out.residual > 0.0) {
    Eigen::MatrixXd s_mat(k, k);
    for (int a = 0; a < k; ++a) {
      for (int j = 0; j < k; ++j) s_mat(a, j) = class_pixels[a] * code_error[static_cast<size_t>(a) * k + j];
    }
    s_mat = 0.5 * (s_mat + s_mat.transpose()).eval();
    const Eigen::MatrixXd sbm = s_mat * b * m_inv;
    const Eigen::MatrixXd d_trace = 4.0 * (sbm - b * m_inv * b.transpose() * sbm);
    grad += coef * options.bound_ratio / (2.0 * out.residual * pixels) * d_trace;
  }
  for (int a = 0; a < k; ++a) {
    for (int c = 0; c < 3; ++c) out.gradient[3 * a + c] += grad(a, c);
  }
  return out;
}

CascadedStepResult CascadedStep(const Palette& palette, std::span<const LabelMap> batch,
                                const Codebook& codebook, double learning_rate,
                                double gumbel_scale, Rng& rng, const BoundOptions& options) {
  const InversePalette inverse = PaletteInverse(palette);
  const BoundEvaluation eval =
      EvaluateBound(palette, inverse, batch, codebook, options, true, gumbel_scale, &rng);

  CascadedStepResult result;
  double lr = learning_rate;
  for (int attempt = 0;; ++attempt) {
    // Gradient is w.r.t. beta / 255, so a step of lr in normalized units is
    // 255 * lr in color units.
    Palette next = ClampedStep(palette, eval.gradient, 255.0 * lr);
    try {
      if (auto violation = Validate(next)) throw Error("rank_deficient", *violation);
      result.inverse = PaletteInverse(next);
      result.palette = std::move(next);
      result.learning_rate = lr;
      result.retries = attempt;
      break;
    } catch (const Error& e) {
      if (e.code() != "rank_deficient") throw;
      if (attempt >= kMaxStepRetries) {
        throw Error("persistent_singularity", "beta^T beta stayed singular after halving the step " +
                                                  std::to_string(kMaxStepRetries) + " times");
      }
      lr *= 0.5;
    }
  }
  result.loss = EvaluateBound(result.palette, result.inverse, batch, codebook, options, false).loss;
  return result;
}

Stage1Artifacts RunStage1(std::span<const LabelMap> train, std::span<const LabelMap> heldout,
                          const Stage1Config& config) {
  if (train.empty()) throw Error("empty_split", "empty training split");
  if (heldout.empty()) throw Error("empty_split", "empty held-out split");
  const int k = train.front().num_classes;
  CheckMaps(train, k, config.vq.patch);
  CheckMaps(heldout, k, config.vq.patch);
  const bool needs_ft = config.variant == Variant::kFT || config.variant == Variant::kTT;
  const bool needs_tf = config.variant == Variant::kTF || config.variant == Variant::kTT;
  if ((needs_ft && !config.ft) || (needs_tf && !config.tf)) {
    throw Error("variant_mismatch", "variant " + VariantName(config.variant) +
                                        " requires its training sub-config");
  }

  Stage1Artifacts art;
  art.variant = config.variant;
  art.seed = config.seed;
  art.linear_rule = config.linear_rule;

  Rng palette_rng(DeriveSeed(config.seed, "palette"));
  if (config.variant == Variant::kFFR) {
    art.palette = GenerateRandom(k, palette_rng);
  } else {
    PaletteSpec spec = config.palette_spec.value_or(PaletteSpec::ForClasses(k));
    spec.num_classes = k;
    art.palette = GenerateMaxDistance(spec, palette_rng);
  }

  Rng codebook_rng(DeriveSeed(config.seed, "codebook"));
  art.codebook = FitFor(train, art.palette, config.vq, codebook_rng, &art.quantize_report);

  switch (config.variant) {
    case Variant::kFF:
    case Variant::kFFR:
      art.inverse = PaletteInverse(art.palette);
      break;

    case Variant::kFT: {
      const FtConfig& ft = *config.ft;
      Rng noise_rng(DeriveSeed(config.seed, "ft_noise"));
      std::vector<Maskige> corpus;
      std::vector<LabelMap> labels;
      corpus.reserve(2 * train.size());
      labels.reserve(2 * train.size());
      for (const LabelMap& m : train) {
        const Maskige encoded = Encode(m, art.palette);
        Maskige rec = Detokenize(Tokenize(encoded, art.codebook), art.codebook);
        corpus.push_back(AddGaussianNoise(rec, ft.noise_sigma, noise_rng));
        labels.push_back(m);
        corpus.push_back(std::move(rec));
        labels.push_back(m);
      }
      WindowInverseOptions options;
      options.window = ft.window;
      options.epochs = ft.epochs;
      options.learning_rate = ft.learning_rate;
      options.batch_size = ft.batch_size;
      options.max_pixels = ft.max_pixels;
      Rng train_rng(DeriveSeed(config.seed, "ft_train"));
      TrainedWindowClassifier trained = TrainWindowInverse(corpus, labels, options, train_rng);
      art.gradient_steps += trained.report.gradient_steps;
      art.loss_curve = trained.report.epoch_losses;
      art.window_inverse = std::move(trained.model);
      break;
    }

    case Variant::kTF: {
      const TfConfig& tf = *config.tf;
      BoundOptions options{tf.bound_ratio, tf.estimator};
      Rng step_rng(DeriveSeed(config.seed, "tf_steps"));
      for (int step = 0; step < tf.steps; ++step) {
        const std::vector<LabelMap> batch = SampleBatch(train, tf.batch_maps, step_rng);
        CascadedStepResult r = CascadedStep(art.palette, batch, art.codebook, tf.learning_rate,
                                            tf.gumbel_scale, step_rng, options);
        art.palette = std::move(r.palette);
        art.loss_curve.push_back(r.loss);
        ++art.gradient_steps;
      }
      art.inverse = PaletteInverse(art.palette);
      Rng refit_rng(DeriveSeed(config.seed, "codebook_final"));
      art.codebook = FitFor(train, art.palette, config.vq, refit_rng, &art.quantize_report);
      break;
    }

    case Variant::kTT: {
      const FtConfig& ft = *config.ft;
      const TfConfig& tf = *config.tf;
      Rng step_rng(DeriveSeed(config.seed, "tt_steps"));
      WindowInverseModel model(ft.window, k);
      std::vector<double> weight_grad, input_grad;
      for (int step = 0; step < tf.steps; ++step) {
        const std::vector<LabelMap> batch = SampleBatch(train, tf.batch_maps, step_rng);
        std::vector<double> total_weight_grad(model.weights.size(), 0.0);
        std::vector<double> palette_grad(static_cast<size_t>(k) * 3, 0.0);
        double loss = 0.0;
        for (const LabelMap& m : batch) {
          const Maskige x = Encode(m, art.palette);
          const RoundtripResult fwd = StraightThroughRoundtrip(x, art.codebook, tf.gumbel_scale, &step_rng);
          weight_grad.assign(model.weights.size(), 0.0);
          loss += WindowLossInputGradient(model, fwd.quantized, m, input_grad, &weight_grad);
          const std::vector<double> through =
              StraightThroughBackward(x, art.codebook, fwd, input_grad, tf.estimator);
          for (size_t i = 0; i < weight_grad.size(); ++i) total_weight_grad[i] += weight_grad[i];
          for (size_t p = 0; p < m.size(); ++p) {
            for (int c = 0; c < 3; ++c) palette_grad[3 * m.labels[p] + c] += through[3 * p + c];
          }
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (size_t i = 0; i < model.weights.size(); ++i) {
          model.weights[i] -= tf.learning_rate * total_weight_grad[i] * inv;
        }
        // palette_grad is d loss / d beta; normalized-unit step: beta -= 255^2 lr g.
        for (double& g : palette_grad) g *= inv;
        Palette next = ClampedStep(art.palette, palette_grad, 255.0 * 255.0 * tf.learning_rate);
        if (!Validate(next)) art.palette = std::move(next);
        art.loss_curve.push_back(loss * inv);
        ++art.gradient_steps;
      }
      art.window_inverse = std::move(model);
      Rng refit_rng(DeriveSeed(config.seed, "codebook_final"));
      art.codebook = FitFor(train, art.palette, config.vq, refit_rng, &art.quantize_report);
      break;
    }
  }

  art.report = EvaluateReconstruction(heldout, art);
  return art;
}

}  // namespace gss
