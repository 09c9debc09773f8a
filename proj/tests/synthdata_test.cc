#include <gtest/gtest.h>

#include "gss/codec.h"
#include "gss/synthdata.h"

namespace gss {
namespace {

TEST(Synthdata, NoUnlabeledAtZeroFraction) {
  const SceneSpec spec = SceneSpec::Default(32, 32, 5, 5.0, 0.0, 1);
  Rng rng(1);
  for (const Sample& s : GenerateScenes(spec, 20, rng)) {
    for (size_t i = 0; i < s.labels.size(); ++i) ASSERT_TRUE(s.labels.IsLabeled(i));
    EXPECT_FALSE(Validate(s.labels).has_value());
    EXPECT_FALSE(Validate(s.image).has_value());
  }
}

TEST(Synthdata, NoiselessImageIsRecoloring) {
  const SceneSpec spec = SceneSpec::Default(32, 32, 6, 0.0, 0.1, 2);
  Palette bases;
  for (const ClassTexture& t : spec.textures) bases.colors.push_back(t.base);
  Rng rng(2);
  for (const Sample& s : GenerateScenes(spec, 20, rng)) {
    const LabelMap nearest = DecodeNearest(s.image, bases);
    for (size_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels.IsLabeled(i)) ASSERT_EQ(nearest.labels[i], s.labels.labels[i]);
    }
  }
}

TEST(Synthdata, SameSeedSameSamples) {
  const SceneSpec spec = SceneSpec::Default(16, 16, 4, 10.0, 0.2, 3);
  Rng a(7), b(7);
  const std::vector<Sample> x = GenerateScenes(spec, 5, a);
  const std::vector<Sample> y = GenerateScenes(spec, 5, b);
  for (size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].image, y[i].image);
    EXPECT_EQ(x[i].labels, y[i].labels);
  }
}

TEST(Synthdata, UnlabeledFractionWithinTwoPercent) {
  for (double u : {0.1, 0.2, 0.4}) {
    const SceneSpec spec = SceneSpec::Default(64, 64, 8, 5.0, u, 4);
    Rng rng(4);
    double total = 0.0;
    for (const Sample& s : GenerateScenes(spec, 100, rng)) {
      size_t unlabeled = 0;
      for (size_t i = 0; i < s.labels.size(); ++i) unlabeled += !s.labels.IsLabeled(i);
      total += static_cast<double>(unlabeled) / static_cast<double>(s.labels.size());
    }
    EXPECT_NEAR(total / 100.0, u, 0.02) << u;
  }
}

TEST(Synthdata, BackgroundIsClassZero) {
  SceneSpec spec = SceneSpec::Default(16, 16, 3, 0.0, 0.0, 5);
  spec.min_shapes = 0;
  spec.max_shapes = 0;
  Rng rng(5);
  for (const Sample& s : GenerateScenes(spec, 3, rng)) {
    for (int l : s.labels.labels) EXPECT_EQ(l, 0);
  }
}

TEST(Synthdata, InvalidSpec) {
  SceneSpec spec = SceneSpec::Default(16, 16, 3, 0.0, 0.0, 5);
  spec.unlabeled_fraction = 1.0;
  Rng rng(0);
  EXPECT_THROW(GenerateScenes(spec, 1, rng), Error);
  EXPECT_EQ(Validate(SceneSpec::Default(18, 16, 3, 0, 0, 0), 4).value_or(""),
            "dimension not divisible by patch");
  SceneSpec one = SceneSpec::Default(16, 16, 2, 0, 0, 0);
  one.num_classes = 1;
  EXPECT_TRUE(Validate(one).has_value());
}

}  // namespace
}  // namespace gss
