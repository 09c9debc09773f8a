#include "gss/vq.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_map>

namespace gss {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr size_t kBlockRows = 2048;

void CheckPatchable(const Maskige& maskige, int patch) {
  if (patch < 1) throw Error("invalid_patch", "patch size must be positive");
  if (maskige.width % patch != 0 || maskige.height % patch != 0) {
    throw Error("patch_mismatch", "dimension not divisible by patch");
  }
}

double SquaredDistance(const double* a, const double* b, int dim) {
  double d = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

// Nearest centroid for each row of `points`. Candidates come from the
// expanded form |x|^2 - 2 x.c + |c|^2 evaluated blockwise with a GEMM; every
// candidate within rounding slack of the best is re-scored exactly so ties
// resolve to the lowest id on exact distances.
void AssignNearest(const double* points, size_t count, int dim, const double* centroids,
                   int vocab, std::vector<int>& ids, std::vector<double>& dists) {
  ids.resize(count);
  dists.resize(count);
  if (count == 0) return;
  Eigen::Map<const RowMatrix> c(centroids, vocab, dim);
  const Eigen::VectorXd c_norm = c.rowwise().squaredNorm();
  const double c_norm_max = c_norm.maxCoeff();
  RowMatrix dots;
  for (size_t start = 0; start < count; start += kBlockRows) {
    const size_t rows = std::min(kBlockRows, count - start);
    Eigen::Map<const RowMatrix> x(points + start * dim, static_cast<Eigen::Index>(rows), dim);
    dots.noalias() = x * c.transpose();
    for (size_t r = 0; r < rows; ++r) {
      const double x_norm = x.row(static_cast<Eigen::Index>(r)).squaredNorm();
      double best_approx = std::numeric_limits<double>::infinity();
      for (int v = 0; v < vocab; ++v) {
        const double approx = x_norm - 2.0 * dots(static_cast<Eigen::Index>(r), v) + c_norm[v];
        best_approx = std::min(best_approx, approx);
      }
      const double slack = 1e-9 * (x_norm + c_norm_max + 1.0);
      const double* point = points + (start + r) * dim;
      int best = -1;
      double best_exact = std::numeric_limits<double>::infinity();
      for (int v = 0; v < vocab; ++v) {
        const double approx = x_norm - 2.0 * dots(static_cast<Eigen::Index>(r), v) + c_norm[v];
        if (approx > best_approx + slack) continue;
        const double exact = SquaredDistance(point, centroids + static_cast<size_t>(v) * dim, dim);
        if (exact < best_exact) {
          best_exact = exact;
          best = v;
        }
      }
      ids[start + r] = best;
      dists[start + r] = best_exact;
    }
  }
}

struct WeightedPoints {
  std::vector<double> values;  // count x dim
  std::vector<double> weights;
  size_t count() const { return weights.size(); }
};

WeightedPoints MergeDuplicates(std::span<const Maskige> maskiges, int patch) {
  const int dim = 3 * patch * patch;
  WeightedPoints out;
  std::unordered_map<std::string, size_t> index;
  for (const Maskige& m : maskiges) {
    const std::vector<double> patches = ExtractPatches(m, patch);
    for (size_t p = 0; p < patches.size(); p += dim) {
      std::string key(reinterpret_cast<const char*>(&patches[p]), dim * sizeof(double));
      auto [it, inserted] = index.try_emplace(std::move(key), out.count());
      if (inserted) {
        out.values.insert(out.values.end(), patches.begin() + static_cast<long>(p),
                          patches.begin() + static_cast<long>(p) + dim);
        out.weights.push_back(1.0);
      } else {
        out.weights[it->second] += 1.0;
      }
    }
  }
  return out;
}

size_t SampleProportional(const std::vector<double>& mass, Rng& rng) {
  long double total = 0.0L;
  for (double m : mass) total += m;
  const long double target = static_cast<long double>(rng.Uniform()) * total;
  long double running = 0.0L;
  size_t last_positive = 0;
  for (size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0.0) continue;
    last_positive = i;
    running += mass[i];
    if (running > target) return i;
  }
  return last_positive;
}

// Correctly rounded sum of doubles (Shewchuk's partials). Rounding is
// monotone, so the reported objective can only move when the exact one does.
class ExactSum {
 public:
  void Add(double x) {
    size_t used = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[used++] = lo;
      x = hi;
    }
    partials_.resize(used);
    partials_.push_back(x);
  }

  double Value() const {
    double total = 0.0;
    for (auto it = partials_.rbegin(); it != partials_.rend(); ++it) {
      const double next = total + *it;
      const double lo = *it - (next - total);
      total = next;
      if (lo != 0.0) {
        // Half-way correction for round-half-even across partials.
        auto rest = it + 1;
        if (rest != partials_.rend() && ((lo < 0.0 && *rest < 0.0) || (lo > 0.0 && *rest > 0.0))) {
          const double twice = 2.0 * lo;
          const double adjusted = total + twice;
          if (twice == adjusted - total) total = adjusted;
        }
        break;
      }
    }
    return total;
  }

 private:
  std::vector<double> partials_;
};

double WeightedObjective(const std::vector<double>& weights, const std::vector<double>& dists) {
  ExactSum total;
  for (size_t i = 0; i < weights.size(); ++i) total.Add(weights[i] * dists[i]);
  return total.Value();
}

}  // namespace

std::vector<double> ExtractPatches(const Maskige& maskige, int patch) {
  CheckPatchable(maskige, patch);
  const int gw = maskige.width / patch;
  const int gh = maskige.height / patch;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(gw) * gh * 3 * patch * patch);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      for (int dy = 0; dy < patch; ++dy) {
        for (int dx = 0; dx < patch; ++dx) {
          const double* px = maskige.pixel(gx * patch + dx, gy * patch + dy);
          out.push_back(px[0] / 255.0);
          out.push_back(px[1] / 255.0);
          out.push_back(px[2] / 255.0);
        }
      }
    }
  }
  return out;
}

CodebookFit FitCodebook(std::span<const Maskige> maskiges, const KMeansOptions& options,
                        Rng& rng) {
  if (options.vocab < 1) throw Error("invalid_argument", "vocabulary must be positive");
  size_t total_patches = 0;
  for (const Maskige& m : maskiges) {
    CheckPatchable(m, options.patch);
    total_patches += (m.width / options.patch) * static_cast<size_t>(m.height / options.patch);
  }
  if (total_patches < static_cast<size_t>(options.vocab)) {
    throw Error("insufficient_patches", "corpus has " + std::to_string(total_patches) +
                                            " patches for " + std::to_string(options.vocab) +
                                            " codewords");
  }

  const int dim = 3 * options.patch * options.patch;
  WeightedPoints points = MergeDuplicates(maskiges, options.patch);
  const size_t n = points.count();
  const int vocab = static_cast<int>(std::min<size_t>(options.vocab, n));

  CodebookFit fit;
  fit.report.requested_vocab = options.vocab;
  fit.report.vocab = vocab;
  fit.report.distinct_patches = n;
  Codebook& cb = fit.codebook;
  cb.patch = options.patch;
  cb.vocab = vocab;
  cb.codewords.assign(static_cast<size_t>(vocab) * dim, 0.0);

  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<double> mass(n);
  for (int v = 0; v < vocab; ++v) {
    size_t chosen;
    if (v == 0) {
      chosen = SampleProportional(points.weights, rng);
    } else {
      for (size_t i = 0; i < n; ++i) mass[i] = points.weights[i] * nearest[i];
      chosen = SampleProportional(mass, rng);
    }
    double* center = &cb.codewords[static_cast<size_t>(v) * dim];
    std::copy_n(&points.values[chosen * dim], dim, center);
    for (size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], SquaredDistance(&points.values[i * dim], center, dim));
    }
  }

  std::vector<int> assign;
  std::vector<double> dists;
  AssignNearest(points.values.data(), n, dim, cb.codewords.data(), vocab, assign, dists);
  fit.report.objective.push_back(WeightedObjective(points.weights, dists));

  std::vector<int> candidate;
  std::vector<double> candidate_dists;
  std::vector<double> sums(static_cast<size_t>(vocab) * dim);
  std::vector<double> totals(vocab);
  std::vector<ExactSum> cost_change(vocab);
  std::vector<double> updated(dim);
  for (int iter = 0; iter < options.max_iters; ++iter) {
    // Update step: weighted means, keeping the old centroid if rounding would
    // make the cluster cost go up.
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(totals.begin(), totals.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double w = points.weights[i];
      double* s = &sums[static_cast<size_t>(assign[i]) * dim];
      const double* x = &points.values[i * dim];
      for (int d = 0; d < dim; ++d) s[d] += w * x[d];
      totals[assign[i]] += w;
    }
    std::vector<double> proposed = cb.codewords;
    for (int v = 0; v < vocab; ++v) {
      if (totals[v] == 0.0) continue;
      for (int d = 0; d < dim; ++d) {
        proposed[static_cast<size_t>(v) * dim + d] = sums[static_cast<size_t>(v) * dim + d] / totals[v];
      }
    }
    std::fill(cost_change.begin(), cost_change.end(), ExactSum());
    for (size_t i = 0; i < n; ++i) {
      const int v = assign[i];
      const double* x = &points.values[i * dim];
      const double w = points.weights[i];
      cost_change[v].Add(w * SquaredDistance(x, &proposed[static_cast<size_t>(v) * dim], dim));
      cost_change[v].Add(-(w * dists[i]));
    }
    for (int v = 0; v < vocab; ++v) {
      if (totals[v] > 0.0 && cost_change[v].Value() <= 0.0) {
        std::copy_n(&proposed[static_cast<size_t>(v) * dim], dim, &cb.codewords[static_cast<size_t>(v) * dim]);
      }
    }
    for (size_t i = 0; i < n; ++i) {
      dists[i] = SquaredDistance(&points.values[i * dim], cb.codeword(assign[i]), dim);
    }

    // Re-seed empty clusters at the farthest patch.
    for (int v = 0; v < vocab; ++v) {
      if (totals[v] > 0.0) continue;
      size_t far = 0;
      for (size_t i = 1; i < n; ++i) {
        if (dists[i] > dists[far]) far = i;
      }
      std::copy_n(&points.values[far * dim], dim, &cb.codewords[static_cast<size_t>(v) * dim]);
      assign[far] = v;
      dists[far] = 0.0;
      totals[v] = points.weights[far];
    }

    // Assignment step: move a point only when strictly closer.
    AssignNearest(points.values.data(), n, dim, cb.codewords.data(), vocab, candidate, candidate_dists);
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      if (candidate[i] != assign[i] && candidate_dists[i] < dists[i]) {
        assign[i] = candidate[i];
        dists[i] = candidate_dists[i];
        changed = true;
      }
    }

    const double previous = fit.report.objective.back();
    const double current = WeightedObjective(points.weights, dists);
    fit.report.objective.push_back(current);
    fit.report.iterations = iter + 1;
    const bool centroids_settled = !changed;
    if (centroids_settled && current == previous) {
      fit.report.converged = true;
      break;
    }
    if (previous <= 0.0 || (previous - current) / previous < options.tol) {
      fit.report.converged = !changed;
      break;
    }
  }
  return fit;
}

std::vector<int> NearestCodewords(std::span<const double> patches, const Codebook& codebook) {
  const int dim = codebook.dim();
  std::vector<int> ids;
  std::vector<double> dists;
  AssignNearest(patches.data(), patches.size() / dim, dim, codebook.codewords.data(),
                codebook.vocab, ids, dists);
  return ids;
}

LatentGrid Tokenize(const Maskige& maskige, const Codebook& codebook) {
  const std::vector<double> patches = ExtractPatches(maskige, codebook.patch);
  LatentGrid grid;
  grid.grid_w = maskige.width / codebook.patch;
  grid.grid_h = maskige.height / codebook.patch;
  grid.tokens = NearestCodewords(patches, codebook);
  return grid;
}

Maskige Detokenize(const LatentGrid& grid, const Codebook& codebook) {
  const int p = codebook.patch;
  Maskige out(grid.grid_w * p, grid.grid_h * p);
  for (int gy = 0; gy < grid.grid_h; ++gy) {
    for (int gx = 0; gx < grid.grid_w; ++gx) {
      const int token = grid.at(gx, gy);
      if (token < 0 || token >= codebook.vocab) {
        throw Error("token_out_of_range", "token " + std::to_string(token) + " outside vocabulary");
      }
      const double* cw = codebook.codeword(token);
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          double* px = out.pixel(gx * p + dx, gy * p + dy);
          const double* src = cw + 3 * (dy * p + dx);
          px[0] = 255.0 * src[0];
          px[1] = 255.0 * src[1];
          px[2] = 255.0 * src[2];
        }
      }
    }
  }
  return out;
}

double QuantizationError(const Maskige& maskige, const Codebook& codebook) {
  const std::vector<double> patches = ExtractPatches(maskige, codebook.patch);
  const std::vector<int> ids = NearestCodewords(patches, codebook);
  const int dim = codebook.dim();
  double total = 0.0;
  for (size_t i = 0; i < ids.size(); ++i) {
    total += SquaredDistance(&patches[i * dim], codebook.codeword(ids[i]), dim);
  }
  return total;
}

RoundtripResult StraightThroughRoundtrip(const Maskige& maskige, const Codebook& codebook,
                                         double gumbel_scale, Rng* rng) {
  RoundtripResult result;
  if (gumbel_scale <= 0.0) {
    result.tokens = Tokenize(maskige, codebook);
  } else {
    if (rng == nullptr) throw Error("invalid_argument", "Gumbel perturbation needs an rng");
    const std::vector<double> patches = ExtractPatches(maskige, codebook.patch);
    const int dim = codebook.dim();
    const size_t count = patches.size() / dim;
    result.perturbation.resize(count * codebook.vocab);
    result.tokens.grid_w = maskige.width / codebook.patch;
    result.tokens.grid_h = maskige.height / codebook.patch;
    result.tokens.tokens.resize(count);
    for (size_t i = 0; i < count; ++i) {
      int best = 0;
      double best_score = std::numeric_limits<double>::infinity();
      for (int v = 0; v < codebook.vocab; ++v) {
        const double noise = gumbel_scale * rng->Gumbel();
        result.perturbation[i * codebook.vocab + v] = noise;
        const double score = SquaredDistance(&patches[i * dim], codebook.codeword(v), dim) - noise;
        if (score < best_score) {
          best_score = score;
          best = v;
        }
      }
      result.tokens.tokens[i] = best;
    }
  }
  result.quantized = Detokenize(result.tokens, codebook);
  return result;
}

std::vector<double> StraightThroughBackward(const Maskige& input, const Codebook& codebook,
                                            const RoundtripResult& forward,
                                            std::span<const double> grad_output,
                                            const QuantizerGradient& rule) {
  if (grad_output.size() != input.values.size()) {
    throw Error("shape_mismatch", "gradient does not match maskige size");
  }
  if (rule.kind == QuantizerGradient::Kind::kIdentity) {
    return std::vector<double>(grad_output.begin(), grad_output.end());
  }
  return SoftRoundtripBackward(input, codebook, rule.temperature, grad_output, forward.perturbation);
}

namespace {

// Soft assignment weights of one patch.
void SoftWeights(const double* patch, const Codebook& codebook, double temperature,
                 const double* perturbation, std::vector<double>& weights) {
  const int dim = codebook.dim();
  weights.resize(codebook.vocab);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < codebook.vocab; ++v) {
    double d = SquaredDistance(patch, codebook.codeword(v), dim);
    if (perturbation) d -= perturbation[v];
    weights[v] = -d / temperature;
    max_logit = std::max(max_logit, weights[v]);
  }
  double total = 0.0;
  for (double& w : weights) {
    w = std::exp(w - max_logit);
    total += w;
  }
  for (double& w : weights) w /= total;
}

// Writes normalized patch values back into maskige layout, scaled.
void ScatterPatch(const double* values, int patch, int width, int gx, int gy, double scale,
                  std::vector<double>& out) {
  for (int dy = 0; dy < patch; ++dy) {
    for (int dx = 0; dx < patch; ++dx) {
      const size_t base = 3 * (static_cast<size_t>(gy * patch + dy) * width + gx * patch + dx);
      const double* src = values + 3 * (dy * patch + dx);
      out[base] = scale * src[0];
      out[base + 1] = scale * src[1];
      out[base + 2] = scale * src[2];
    }
  }
}

}  // namespace

Maskige SoftRoundtrip(const Maskige& maskige, const Codebook& codebook, double temperature,
                      std::span<const double> perturbation) {
  if (temperature <= 0.0) throw Error("invalid_argument", "temperature must be positive");
  const std::vector<double> patches = ExtractPatches(maskige, codebook.patch);
  const int dim = codebook.dim();
  const int gw = maskige.width / codebook.patch;
  Maskige out(maskige.width, maskige.height);
  std::vector<double> weights;
  std::vector<double> mixed(dim);
  for (size_t i = 0; i < patches.size() / dim; ++i) {
    SoftWeights(&patches[i * dim], codebook, temperature,
                perturbation.empty() ? nullptr : &perturbation[i * codebook.vocab], weights);
    std::fill(mixed.begin(), mixed.end(), 0.0);
    for (int v = 0; v < codebook.vocab; ++v) {
      const double* cw = codebook.codeword(v);
      for (int d = 0; d < dim; ++d) mixed[d] += weights[v] * cw[d];
    }
    ScatterPatch(mixed.data(), codebook.patch, maskige.width, static_cast<int>(i) % gw,
                 static_cast<int>(i) / gw, 255.0, out.values);
  }
  return out;
}

std::vector<double> SoftRoundtripBackward(const Maskige& maskige, const Codebook& codebook,
                                          double temperature,
                                          std::span<const double> grad_output,
                                          std::span<const double> perturbation) {
  if (temperature <= 0.0) throw Error("invalid_argument", "temperature must be positive");
  const std::vector<double> patches = ExtractPatches(maskige, codebook.patch);
  const Maskige grad_image = [&] {
    Maskige g(maskige.width, maskige.height);
    g.values.assign(grad_output.begin(), grad_output.end());
    return g;
  }();
  // Upstream gradient in normalized units: d L / d y_norm = 255 d L / d y.
  std::vector<double> upstream = ExtractPatches(grad_image, codebook.patch);
  for (double& g : upstream) g *= 255.0 * 255.0;

  const int dim = codebook.dim();
  const int gw = maskige.width / codebook.patch;
  std::vector<double> result(maskige.values.size(), 0.0);
  std::vector<double> weights;
  std::vector<double> mixed(dim), projections(codebook.vocab), grad_patch(dim);
  for (size_t i = 0; i < patches.size() / dim; ++i) {
    const double* g = &upstream[i * dim];
    SoftWeights(&patches[i * dim], codebook, temperature,
                perturbation.empty() ? nullptr : &perturbation[i * codebook.vocab], weights);
    double g_dot_y = 0.0;
    for (int v = 0; v < codebook.vocab; ++v) {
      const double* cw = codebook.codeword(v);
      double s = 0.0;
      for (int d = 0; d < dim; ++d) s += g[d] * cw[d];
      projections[v] = s;
      g_dot_y += weights[v] * s;
    }
    // d L / d x_norm = (2 / T) sum_v w_v (g.e_v - g.y) e_v
    std::fill(grad_patch.begin(), grad_patch.end(), 0.0);
    for (int v = 0; v < codebook.vocab; ++v) {
      const double a = weights[v] * (projections[v] - g_dot_y);
      if (a == 0.0) continue;
      const double* cw = codebook.codeword(v);
      for (int d = 0; d < dim; ++d) grad_patch[d] += a * cw[d];
    }
    // Back to [0, 255] units: d x_norm / d x = 1 / 255.
    ScatterPatch(grad_patch.data(), codebook.patch, maskige.width, static_cast<int>(i) % gw,
                 static_cast<int>(i) / gw, 2.0 / temperature / 255.0, result);
  }
  return result;
}

double MinCodewordGap(const Codebook& codebook) {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < codebook.vocab; ++a) {
    for (int b = a + 1; b < codebook.vocab; ++b) {
      best = std::min(best, std::sqrt(SquaredDistance(codebook.codeword(a), codebook.codeword(b),
                                                      codebook.dim())));
    }
  }
  return best;
}

}  // namespace gss
