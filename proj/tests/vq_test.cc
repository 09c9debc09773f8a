#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gss/codec.h"
#include "gss/palette.h"
#include "gss/vq.h"
#include "test_util.h"

namespace gss {
namespace {

// Maskiges whose 4x4 patches are all flat, drawn from `colors`.
std::vector<Maskige> FlatPatchCorpus(const std::vector<Color>& colors, int maps, Rng& rng) {
  std::vector<Maskige> out;
  for (int m = 0; m < maps; ++m) {
    Maskige x(16, 16);
    for (int gy = 0; gy < 4; ++gy) {
      for (int gx = 0; gx < 4; ++gx) {
        const Color& c = colors[rng.UniformInt(0, static_cast<int64_t>(colors.size()) - 1)];
        for (int dy = 0; dy < 4; ++dy) {
          for (int dx = 0; dx < 4; ++dx) {
            double* px = x.pixel(gx * 4 + dx, gy * 4 + dy);
            px[0] = c[0];
            px[1] = c[1];
            px[2] = c[2];
          }
        }
      }
    }
    out.push_back(x);
  }
  return out;
}

std::vector<Maskige> RandomCorpus(int maps, int size, Rng& rng) {
  std::vector<Maskige> out;
  for (int i = 0; i < maps; ++i) out.push_back(testing::RandomImage(size, size, rng));
  return out;
}

double Objective(std::span<const Maskige> corpus, const Codebook& cb) {
  double total = 0.0;
  for (const Maskige& m : corpus) total += QuantizationError(m, cb);
  return total;
}

TEST(FitCodebook, ExactVocabularyGivesZeroObjective) {
  Rng rng(1);
  const std::vector<Color> colors = {{0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {10, 20, 30}, {200, 200, 200}};
  const std::vector<Maskige> corpus = FlatPatchCorpus(colors, 10, rng);
  KMeansOptions options;
  options.vocab = 5;
  const CodebookFit fit = FitCodebook(corpus, options, rng);
  EXPECT_EQ(fit.report.vocab, 5);
  EXPECT_EQ(fit.report.objective.back(), 0.0);
  EXPECT_EQ(Objective(corpus, fit.codebook), 0.0);
}

TEST(FitCodebook, SingleCodewordIsMean) {
  Rng rng(2);
  const std::vector<Maskige> corpus = RandomCorpus(3, 8, rng);
  KMeansOptions options;
  options.vocab = 1;
  const CodebookFit fit = FitCodebook(corpus, options, rng);
  std::vector<double> mean(48, 0.0);
  int count = 0;
  for (const Maskige& m : corpus) {
    const std::vector<double> patches = ExtractPatches(m, 4);
    for (size_t i = 0; i < patches.size(); ++i) mean[i % 48] += patches[i];
    count += static_cast<int>(patches.size() / 48);
  }
  for (int d = 0; d < 48; ++d) EXPECT_NEAR(fit.codebook.codewords[d], mean[d] / count, 1e-12);
}

TEST(FitCodebook, ObjectiveNonIncreasing) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::vector<Maskige> corpus = RandomCorpus(4, 16, rng);
    KMeansOptions options;
    options.vocab = 7;
    const CodebookFit fit = FitCodebook(corpus, options, rng);
    for (size_t i = 1; i < fit.report.objective.size(); ++i) {
      EXPECT_LE(fit.report.objective[i], fit.report.objective[i - 1]);
    }
    EXPECT_NEAR(fit.report.objective.back(), Objective(corpus, fit.codebook), 1e-9);
  }
}

TEST(FitCodebook, ConvergedFitIsLloydFixedPoint) {
  // Oracle: no single patch reassignment or centroid recomputation lowers
  // the objective.
  Rng rng(3);
  const std::vector<Maskige> corpus = RandomCorpus(3, 16, rng);  // 48 patches
  KMeansOptions options;
  options.vocab = 5;
  options.max_iters = 1000;
  options.tol = 0.0;
  const CodebookFit fit = FitCodebook(corpus, options, rng);
  ASSERT_TRUE(fit.report.converged);
  const Codebook& cb = fit.codebook;
  std::vector<double> patches;
  for (const Maskige& m : corpus) {
    const std::vector<double> p = ExtractPatches(m, 4);
    patches.insert(patches.end(), p.begin(), p.end());
  }
  const size_t n = patches.size() / 48;
  std::vector<int> assign(n);
  for (size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int v = 0; v < cb.vocab; ++v) {
      double d = 0.0;
      for (int j = 0; j < 48; ++j) d += std::pow(patches[i * 48 + j] - cb.codeword(v)[j], 2);
      if (d < best) {
        best = d;
        assign[i] = v;
      }
    }
  }
  for (int v = 0; v < cb.vocab; ++v) {
    std::vector<double> mean(48, 0.0);
    int count = 0;
    for (size_t i = 0; i < n; ++i) {
      if (assign[i] != v) continue;
      for (int j = 0; j < 48; ++j) mean[j] += patches[i * 48 + j];
      ++count;
    }
    ASSERT_GT(count, 0);
    for (int j = 0; j < 48; ++j) EXPECT_NEAR(cb.codeword(v)[j], mean[j] / count, 1e-9);
  }
}

TEST(FitCodebook, VocabularyCappedAtDistinctPatches) {
  Rng rng(4);
  const std::vector<Maskige> corpus = FlatPatchCorpus({{0, 0, 0}, {9, 9, 9}, {99, 0, 0}}, 4, rng);
  KMeansOptions options;
  options.vocab = 20;
  const CodebookFit fit = FitCodebook(corpus, options, rng);
  EXPECT_EQ(fit.report.requested_vocab, 20);
  EXPECT_EQ(fit.report.vocab, 3);
  EXPECT_EQ(fit.codebook.vocab, 3);
}

TEST(FitCodebook, InsufficientPatches) {
  Rng rng(5);
  const std::vector<Maskige> corpus = RandomCorpus(1, 8, rng);
  KMeansOptions options;
  options.vocab = 5;
  EXPECT_THROW(
      {
        try {
          FitCodebook(corpus, options, rng);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), "insufficient_patches");
          throw;
        }
      },
      Error);
}

TEST(FitCodebook, Deterministic) {
  Rng data(6);
  const std::vector<Maskige> corpus = RandomCorpus(4, 16, data);
  KMeansOptions options;
  options.vocab = 9;
  Rng a(7), b(7);
  EXPECT_EQ(FitCodebook(corpus, options, a).codebook, FitCodebook(corpus, options, b).codebook);
}

TEST(Tokenize, RoundtripIsIdempotent) {
  Rng rng(8);
  const std::vector<Maskige> corpus = RandomCorpus(4, 16, rng);
  KMeansOptions options;
  options.vocab = 10;
  const Codebook cb = FitCodebook(corpus, options, rng).codebook;
  for (const Maskige& m : corpus) {
    const Maskige once = Detokenize(Tokenize(m, cb), cb);
    const Maskige twice = Detokenize(Tokenize(once, cb), cb);
    EXPECT_EQ(once, twice);
  }
}

TEST(Tokenize, PerturbationBelowHalfGapKeepsToken) {
  Rng rng(9);
  const std::vector<Maskige> corpus = RandomCorpus(4, 16, rng);
  KMeansOptions options;
  options.vocab = 8;
  const Codebook cb = FitCodebook(corpus, options, rng).codebook;
  const double radius = MinCodewordGap(cb) / 2.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int v = static_cast<int>(rng.UniformInt(0, cb.vocab - 1));
    LatentGrid grid;
    grid.grid_w = grid.grid_h = 1;
    grid.tokens = {v};
    Maskige m = Detokenize(grid, cb);
    std::vector<double> dir(48);
    double norm = 0.0;
    for (double& d : dir) {
      d = rng.Normal();
      norm += d * d;
    }
    const double r = rng.Uniform(0.0, 0.99 * radius);
    for (int i = 0; i < 48; ++i) m.values[i] += 255.0 * r * dir[i] / std::sqrt(norm);
    EXPECT_EQ(Tokenize(m, cb).tokens[0], v);
  }
}

TEST(Tokenize, ZeroGridAndFlatCodewords) {
  Codebook cb;
  cb.patch = 2;
  cb.vocab = 2;
  cb.codewords.assign(24, 0.0);
  for (int d = 12; d < 24; ++d) cb.codewords[d] = 1.0;
  LatentGrid grid;
  grid.grid_w = grid.grid_h = 2;
  grid.tokens = {0, 0, 0, 0};
  for (double v : Detokenize(grid, cb).values) EXPECT_EQ(v, 0.0);
  grid.tokens = {0, 1, 1, 0};
  const Maskige m = Detokenize(grid, cb);
  EXPECT_EQ(m.pixel(0, 0)[0], 0.0);
  EXPECT_EQ(m.pixel(2, 0)[0], 255.0);
  EXPECT_EQ(m.pixel(3, 1)[2], 255.0);
  EXPECT_EQ(m.pixel(1, 3)[1], 255.0);
  EXPECT_EQ(m.pixel(3, 3)[1], 0.0);
  EXPECT_EQ(Tokenize(m, cb).tokens, grid.tokens);
}

TEST(Tokenize, OutOfRangeToken) {
  Codebook cb;
  cb.patch = 2;
  cb.vocab = 1;
  cb.codewords.assign(12, 0.5);
  LatentGrid grid;
  grid.grid_w = grid.grid_h = 1;
  grid.tokens = {3};
  EXPECT_THROW(
      {
        try {
          Detokenize(grid, cb);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), "token_out_of_range");
          throw;
        }
      },
      Error);
}

TEST(StraightThrough, IdentityBackwardPassesGradient) {
  Rng rng(10);
  const std::vector<Maskige> corpus = RandomCorpus(2, 8, rng);
  KMeansOptions options;
  options.vocab = 4;
  const Codebook cb = FitCodebook(corpus, options, rng).codebook;
  const RoundtripResult fwd = StraightThroughRoundtrip(corpus[0], cb);
  EXPECT_EQ(fwd.quantized, Detokenize(Tokenize(corpus[0], cb), cb));
  std::vector<double> g(corpus[0].values.size());
  for (double& v : g) v = rng.Normal();
  EXPECT_EQ(StraightThroughBackward(corpus[0], cb, fwd, g, {}), g);
}

TEST(StraightThrough, SoftBackwardMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Maskige> corpus = RandomCorpus(2, 8, rng);
    KMeansOptions options;
    options.vocab = 4;
    const Codebook cb = FitCodebook(corpus, options, rng).codebook;
    const Maskige& x = corpus[0];
    std::vector<double> upstream(x.values.size());
    for (double& v : upstream) v = rng.Normal();
    // Large temperature keeps the softmax away from saturation.
    const double t = 2.0;
    const std::vector<double> analytic = SoftRoundtripBackward(x, cb, t, upstream);
    const auto f = [&](const std::vector<double>& values) {
      Maskige m = x;
      m.values = values;
      const Maskige y = SoftRoundtrip(m, cb, t);
      double s = 0.0;
      for (size_t i = 0; i < y.values.size(); ++i) s += upstream[i] * y.values[i];
      return s;
    };
    EXPECT_LE(testing::RelativeError(analytic, testing::NumericGradient(f, x.values, 1e-3)), 1e-4);
  }
}

TEST(StraightThrough, SoftForwardApproachesHardAtLowTemperature) {
  Rng rng(12);
  const std::vector<Maskige> corpus = RandomCorpus(2, 8, rng);
  KMeansOptions options;
  options.vocab = 4;
  const Codebook cb = FitCodebook(corpus, options, rng).codebook;
  const Maskige soft = SoftRoundtrip(corpus[0], cb, 1e-4);
  const Maskige hard = Detokenize(Tokenize(corpus[0], cb), cb);
  for (size_t i = 0; i < soft.values.size(); ++i) EXPECT_NEAR(soft.values[i], hard.values[i], 1e-6);
}

TEST(StraightThrough, GumbelPerturbationIsSeeded) {
  Rng rng(13);
  const std::vector<Maskige> corpus = RandomCorpus(2, 8, rng);
  KMeansOptions options;
  options.vocab = 4;
  const Codebook cb = FitCodebook(corpus, options, rng).codebook;
  Rng a(1), b(1);
  const RoundtripResult ra = StraightThroughRoundtrip(corpus[0], cb, 0.5, &a);
  const RoundtripResult rb = StraightThroughRoundtrip(corpus[0], cb, 0.5, &b);
  EXPECT_EQ(ra.tokens.tokens, rb.tokens.tokens);
  EXPECT_EQ(ra.perturbation.size(), 4u * 4u);
  EXPECT_THROW(StraightThroughRoundtrip(corpus[0], cb, 0.5, nullptr), Error);
}

TEST(Projection, EncodedMapsOnFlatCodebook) {
  // With K <= V and flat class patches in the corpus, block maps aligned to
  // the patch grid survive the quantizer exactly.
  Rng rng(14);
  const Palette p = GenerateMaxDistance(PaletteSpec::ForClasses(4), rng);
  std::vector<Maskige> corpus = FlatPatchCorpus(p.colors, 8, rng);
  KMeansOptions options;
  options.vocab = 4;
  const Codebook cb = FitCodebook(corpus, options, rng).codebook;
  for (const Maskige& m : corpus) EXPECT_EQ(DecodeNearest(Detokenize(Tokenize(m, cb), cb), p),
                                            DecodeNearest(m, p));
}

}  // namespace
}  // namespace gss
