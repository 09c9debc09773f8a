#include <gtest/gtest.h>

#include <cmath>

#include "gss/metrics.h"
#include "gss/stage1.h"
#include "test_util.h"

namespace gss {
namespace {

std::vector<LabelMap> Blocks(int count, int size, int k, Rng& rng) {
  std::vector<LabelMap> maps;
  for (int i = 0; i < count; ++i) maps.push_back(testing::BlockMap(size, size, k, rng, 3));
  return maps;
}

Stage1Config SmallConfig(Variant variant) {
  Stage1Config config;
  config.variant = variant;
  config.vq.vocab = 32;
  config.vq.max_iters = 30;
  FtConfig ft;
  ft.window = 3;
  ft.epochs = 3;
  ft.max_pixels = 20000;
  config.ft = ft;
  TfConfig tf;
  tf.steps = 10;
  tf.batch_maps = 4;
  config.tf = tf;
  config.seed = 5;
  return config;
}

TEST(VariantNames, Roundtrip) {
  for (Variant v : {Variant::kFF, Variant::kFFR, Variant::kFT, Variant::kTF, Variant::kTT}) {
    EXPECT_EQ(ParseVariant(VariantName(v)), v);
  }
  EXPECT_EQ(VariantName(Variant::kFFR), "FF-R");
  EXPECT_THROW(ParseVariant("XY"), Error);
  EXPECT_EQ(ParseDecodeRule(DecodeRuleName(LinearDecodeRule::kArgmax)), LinearDecodeRule::kArgmax);
}

TEST(PaletteInverse, ClosedFormWhenFullRank) {
  Rng rng(1);
  const Palette p = GenerateRandom(6, rng);
  EXPECT_EQ(PaletteInverse(p), LeastSquaresInverse(p));
}

TEST(PaletteInverse, PseudoInverseBelowThreeClasses) {
  for (const Palette& p : {Palette({{30, 60, 90}}), Palette({{0, 0, 0}, {255, 255, 255}}),
                           Palette({{10, 200, 30}, {250, 5, 40}})}) {
    const InversePalette g = PaletteInverse(p);
    // Penrose condition beta gamma beta = beta.
    const int k = p.num_classes();
    for (int i = 0; i < k; ++i) {
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (int j = 0; j < k; ++j) {
          double bg = 0.0;
          for (int d = 0; d < 3; ++d) bg += p.colors[i][d] * g.at(d, j);
          v += bg * p.colors[j][c];
        }
        EXPECT_NEAR(v, p.colors[i][c], 1e-9);
      }
    }
    // Every class decodes to itself.
    for (int c = 0; c < k; ++c) {
      EXPECT_EQ(DecodeProjected(Encode(LabelMap(2, 2, k, c), p), p, g).labels[0], c);
    }
  }
}

TEST(CascadedStep, ZeroLearningRateKeepsPalette) {
  Rng rng(2);
  const std::vector<LabelMap> maps = Blocks(6, 16, 4, rng);
  const Stage1Artifacts ff = RunStage1(maps, maps, SmallConfig(Variant::kFF));
  const CascadedStepResult r = CascadedStep(ff.palette, maps, ff.codebook, 0.0, 0.0, rng);
  EXPECT_EQ(r.palette, ff.palette);
  EXPECT_EQ(r.inverse, PaletteInverse(ff.palette));
}

TEST(EvaluateBound, ZeroAtExactConfiguration) {
  // K = 3 makes beta gamma = I, and a codebook holding every flat class
  // patch reproduces block-aligned maps exactly.
  const Palette p({{200, 10, 10}, {10, 200, 10}, {10, 10, 200}});
  std::vector<LabelMap> maps;
  Codebook cb;
  cb.patch = 4;
  cb.vocab = 3;
  for (int k = 0; k < 3; ++k) {
    maps.emplace_back(8, 8, 3, k);
    for (int d = 0; d < 48; ++d) cb.codewords.push_back(p.colors[k][d % 3] / 255.0);
  }
  for (auto estimator : {QuantizerGradient{QuantizerGradient::Kind::kIdentity, 0.05},
                         QuantizerGradient{QuantizerGradient::Kind::kSoft, 0.05}}) {
    const BoundEvaluation e =
        EvaluateBound(p, PaletteInverse(p), maps, cb, BoundOptions{1.0, estimator}, true);
    EXPECT_LE(e.loss, 1e-20);
    for (double g : e.gradient) EXPECT_LE(std::abs(g), 1e-9);
  }
  Rng rng(3);
  const CascadedStepResult r = CascadedStep(p, maps, cb, 0.05, 0.0, rng);
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.palette.colors[k][c], p.colors[k][c], 1e-6);
  }
}

TEST(CascadedStep, FixedBatchLossDecreases) {
  Rng rng(4);
  const std::vector<LabelMap> maps = Blocks(8, 16, 6, rng);
  Stage1Config config = SmallConfig(Variant::kFF);
  config.vq.vocab = 8;
  const Stage1Artifacts ff = RunStage1(maps, maps, config);
  const BoundOptions options{1.0, {QuantizerGradient::Kind::kSoft, 0.05}};
  const double initial =
      EvaluateBound(ff.palette, PaletteInverse(ff.palette), maps, ff.codebook, options, false).loss;
  Palette palette = ff.palette;
  double last = initial;
  for (int step = 0; step < 100; ++step) {
    const CascadedStepResult r = CascadedStep(palette, maps, ff.codebook, 0.01, 0.0, rng, options);
    palette = r.palette;
    last = r.loss;
    EXPECT_FALSE(Validate(palette).has_value());
  }
  EXPECT_LT(last, initial);
}

TEST(EvaluateBound, PaletteGradientMatchesFiniteDifferences) {
  // With the identity estimator the quantizer term contributes only through
  // ||gamma||, so the gradient is that of (A ||gamma(beta)|| + R(beta))^2
  // with A frozen.
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = static_cast<int>(rng.UniformInt(3, 8));
    std::vector<LabelMap> maps = Blocks(4, 16, k, rng);
    const Palette p = GenerateRandom(k, rng);
    Stage1Config config = SmallConfig(Variant::kFF);
    config.vq.vocab = 4;
    const Codebook cb = RunStage1(maps, maps, config).codebook;
    const BoundOptions options{0.7, {QuantizerGradient::Kind::kIdentity, 0.05}};
    const BoundEvaluation e = EvaluateBound(p, PaletteInverse(p), maps, cb, options, true);
    const auto f = [&](const std::vector<double>& flat) {
      Palette q = p;
      for (int a = 0; a < k; ++a) {
        for (int c = 0; c < 3; ++c) q.colors[a][c] = 255.0 * flat[3 * a + c];
      }
      const InversePalette g = PaletteInverse(q);
      double norm = 0.0;
      for (double w : g.weights) norm += 255.0 * w * 255.0 * w;
      const double r = EvaluateBound(q, g, maps, cb, options, false).residual;
      const double inner = e.reconstruction * std::sqrt(norm) + 0.7 * r;
      return inner * inner;
    };
    std::vector<double> flat;
    for (const Color& c : p.colors) {
      for (double v : c) flat.push_back(v / 255.0);
    }
    EXPECT_LE(testing::RelativeError(e.gradient, testing::NumericGradient(f, flat, 1e-6)), 1e-4);
  }
}

TEST(CascadedStep, RankDeficientPaletteThrows) {
  // All colors on the gray ray.
  const Palette p({{10, 10, 10}, {100, 100, 100}, {200, 200, 200}});
  std::vector<LabelMap> maps = {LabelMap(4, 4, 3, 0)};
  Codebook cb;
  cb.patch = 4;
  cb.vocab = 1;
  cb.codewords.assign(48, 0.5);
  Rng rng(5);
  EXPECT_THROW(CascadedStep(p, maps, cb, 0.0, 0.0, rng), Error);
}

TEST(RunStage1, SingleClassIsPerfect) {
  std::vector<LabelMap> maps(4, LabelMap(16, 16, 1, 0));
  for (Variant v : {Variant::kFF, Variant::kFFR, Variant::kFT, Variant::kTF, Variant::kTT}) {
    Stage1Config config = SmallConfig(v);
    config.vq.vocab = 1;
    const Stage1Artifacts a = RunStage1(maps, maps, config);
    EXPECT_DOUBLE_EQ(a.report.miou, 1.0) << VariantName(v);
  }
}

TEST(RunStage1, FlatMapReconstructsExactly) {
  Rng rng(6);
  const std::vector<LabelMap> maps = Blocks(10, 16, 4, rng);
  const Stage1Artifacts a = RunStage1(maps, maps, SmallConfig(Variant::kFF));
  for (int k = 0; k < 4; ++k) EXPECT_EQ(Reconstruct(LabelMap(16, 16, 4, k), a), LabelMap(16, 16, 4, k));
}

TEST(RunStage1, ExactCodewordMapsReconstruct) {
  Rng rng(7);
  const std::vector<LabelMap> maps = Blocks(4, 16, 3, rng);
  Stage1Config config = SmallConfig(Variant::kFF);
  config.vq.vocab = 64;  // every patch; capped at the distinct count
  const Stage1Artifacts a = RunStage1(maps, maps, config);
  EXPECT_EQ(a.codebook.vocab, static_cast<int>(a.quantize_report.distinct_patches));
  for (const LabelMap& m : maps) EXPECT_EQ(Reconstruct(m, a), m);
  EXPECT_DOUBLE_EQ(a.report.miou, 1.0);
}

TEST(RunStage1, MixedThreeClassMapsHighMiou) {
  Rng rng(8);
  const std::vector<LabelMap> train = Blocks(20, 64, 3, rng);
  const std::vector<LabelMap> test = Blocks(5, 64, 3, rng);
  Stage1Config config = SmallConfig(Variant::kFF);
  config.vq.vocab = 64;
  EXPECT_GE(RunStage1(train, test, config).report.miou, 0.9);
}

TEST(RunStage1, TrainingFreeVariantsTakeNoSteps) {
  Rng rng(9);
  const std::vector<LabelMap> maps = Blocks(6, 16, 4, rng);
  EXPECT_EQ(RunStage1(maps, maps, SmallConfig(Variant::kFF)).gradient_steps, 0);
  EXPECT_EQ(RunStage1(maps, maps, SmallConfig(Variant::kFFR)).gradient_steps, 0);
  EXPECT_GT(RunStage1(maps, maps, SmallConfig(Variant::kFT)).gradient_steps, 0);
}

TEST(RunStage1, MissingSubConfig) {
  Rng rng(10);
  const std::vector<LabelMap> maps = Blocks(4, 16, 3, rng);
  Stage1Config config = SmallConfig(Variant::kFT);
  config.ft.reset();
  EXPECT_THROW(
      {
        try {
          RunStage1(maps, maps, config);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), "variant_mismatch");
          throw;
        }
      },
      Error);
  config = SmallConfig(Variant::kTT);
  config.tf.reset();
  EXPECT_THROW(RunStage1(maps, maps, config), Error);
}

TEST(RunStage1, RejectsUnlabeledPixels) {
  Rng rng(11);
  std::vector<LabelMap> maps = Blocks(4, 16, 3, rng);
  maps[1].labels[5] = 3;
  EXPECT_THROW(RunStage1(maps, maps, SmallConfig(Variant::kFF)), Error);
}

TEST(RunStage1, TrainedPaletteKeepsNormalEquations) {
  Rng rng(12);
  const std::vector<LabelMap> maps = Blocks(8, 16, 5, rng);
  const Stage1Artifacts a = RunStage1(maps, maps, SmallConfig(Variant::kTF));
  ASSERT_TRUE(a.inverse.has_value());
  EXPECT_FALSE(Validate(a.palette).has_value());
  EXPECT_LE(NormalEquationError(a.palette, *a.inverse), 1e-9);
  EXPECT_EQ(a.gradient_steps, 10);
  EXPECT_EQ(a.loss_curve.size(), 10u);
}

TEST(RunStage1, Deterministic) {
  Rng rng(13);
  const std::vector<LabelMap> maps = Blocks(6, 16, 4, rng);
  for (Variant v : {Variant::kFFR, Variant::kFT, Variant::kTF}) {
    const Stage1Artifacts a = RunStage1(maps, maps, SmallConfig(v));
    const Stage1Artifacts b = RunStage1(maps, maps, SmallConfig(v));
    EXPECT_EQ(a.palette, b.palette);
    EXPECT_EQ(a.codebook, b.codebook);
    EXPECT_EQ(a.window_inverse, b.window_inverse);
    EXPECT_EQ(a.report.miou, b.report.miou);
  }
}

TEST(EvaluateReconstruction, MatchesMetricOnReconstructions) {
  Rng rng(14);
  const std::vector<LabelMap> maps = Blocks(6, 16, 4, rng);
  const Stage1Artifacts a = RunStage1(maps, maps, SmallConfig(Variant::kFFR));
  ConfusionMatrix m(4);
  for (const LabelMap& map : maps) m.Add(Reconstruct(map, a), map);
  EXPECT_DOUBLE_EQ(EvaluateReconstruction(maps, a).miou, MeanIou(m));
  EXPECT_THROW(EvaluateReconstruction({}, a), Error);
}

}  // namespace
}  // namespace gss
