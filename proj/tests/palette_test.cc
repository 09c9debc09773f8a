#include <gtest/gtest.h>

#include <cmath>

#include "gss/palette.h"
#include "gss/pipeline.h"

namespace gss {
namespace {

TEST(MaxDistancePalette, Interval45Gives216Colors) {
  PaletteSpec spec;
  spec.num_classes = 216;
  spec.intervals = {45, 45, 45};
  spec.starts = {0, 0, 0};
  Rng rng(0);
  const Palette p = GenerateMaxDistance(spec, rng);
  ASSERT_EQ(p.num_classes(), 216);
  EXPECT_EQ(p.colors.front(), (Color{0, 0, 0}));
  EXPECT_EQ(p.colors[1], (Color{0, 0, 45}));
  EXPECT_EQ(p.colors[6], (Color{0, 45, 0}));
  EXPECT_EQ(p.colors.back(), (Color{225, 225, 225}));
  EXPECT_EQ(SequenceLengths(spec), (std::array<int, 3>{6, 6, 6}));
}

TEST(MaxDistancePalette, SingleClassMisalignedStart) {
  PaletteSpec spec;
  spec.num_classes = 1;
  spec.starts = {0, 1, 2};
  Rng rng(0);
  EXPECT_EQ(GenerateMaxDistance(spec, rng).colors, (std::vector<Color>{{0, 1, 2}}));
}

TEST(MaxDistancePalette, JitterStaysWithinBound) {
  PaletteSpec spec = PaletteSpec::ForClasses(10);
  ASSERT_EQ(spec.jitter_bound, 15.0);
  const std::vector<Color> base = BaseColors(spec);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Palette p = GenerateMaxDistance(spec, rng);
    for (int k = 0; k < 10; ++k) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_GE(p.colors[k][c], base[k][c]);
        EXPECT_LE(p.colors[k][c], std::min(255.0, base[k][c] + 15.0));
      }
    }
    EXPECT_FALSE(Validate(p).has_value());
  }
}

TEST(MaxDistancePalette, DeterministicAndDistinct) {
  for (int k : {2, 8, 19, 150}) {
    Rng a(9), b(9);
    const Palette pa = GenerateMaxDistance(PaletteSpec::ForClasses(k), a);
    EXPECT_EQ(pa, GenerateMaxDistance(PaletteSpec::ForClasses(k), b));
    EXPECT_FALSE(Validate(pa).has_value()) << k;
  }
}

TEST(MaxDistancePalette, Overflow) {
  PaletteSpec spec;
  spec.num_classes = 9;
  spec.intervals = {200, 200, 200};
  EXPECT_THROW(
      {
        try {
          BaseColors(spec);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), "palette_overflow");
          throw;
        }
      },
      Error);
}

TEST(RandomPalette, SmallCases) {
  Rng rng(4);
  const Palette one = GenerateRandom(1, rng);
  ASSERT_EQ(one.num_classes(), 1);
  EXPECT_FALSE(Validate(one).has_value());
  Rng a(5), b(5);
  const Palette pa = GenerateRandom(2, a);
  EXPECT_EQ(pa, GenerateRandom(2, b));
  EXPECT_NE(pa.colors[0], pa.colors[1]);
}

TEST(RandomPalette, WorseSeparationThanMaxDistance) {
  std::vector<double> random_d, maxdist_d;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng r(seed), m(seed + 1000);
    random_d.push_back(MinPairwiseDistance(GenerateRandom(300, r)));
    maxdist_d.push_back(MinPairwiseDistance(GenerateMaxDistance(PaletteSpec::ForClasses(300), m)));
  }
  EXPECT_LT(Median(random_d), Median(maxdist_d));
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed), m(seed);
    EXPECT_GT(MinPairwiseDistance(GenerateMaxDistance(PaletteSpec::ForClasses(150), m)),
              MinPairwiseDistance(GenerateRandom(150, r)));
  }
}

TEST(MinPairwiseDistance, Examples) {
  EXPECT_NEAR(MinPairwiseDistance(Palette({{0, 0, 0}, {255, 255, 255}})), 255.0 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(MinPairwiseDistance(Palette({{0, 0, 0}, {0, 0, 45}, {0, 45, 0}})), 45.0, 1e-12);
  EXPECT_THROW(MinPairwiseDistance(Palette({{0, 0, 0}})), Error);
}

TEST(Refine, EmptyIsIdentity) {
  const Palette p({{0, 0, 0}, {10, 10, 10}});
  EXPECT_EQ(Refine(p, {}, 60.0), p);
}

TEST(Refine, MatchesLatticeBruteForce) {
  const Palette p({{0, 0, 0}, {10, 10, 10}});
  const Palette r = Refine(p, {1}, 0.0);
  // Oracle: best step-15 lattice point for class 1 against (0,0,0).
  double best = 0.0;
  for (int a = 0; a <= 255; a += 15) {
    for (int b = 0; b <= 255; b += 15) {
      for (int c = 0; c <= 255; c += 15) best = std::max(best, std::sqrt(double(a * a + b * b + c * c)));
    }
  }
  EXPECT_GE(MinDistanceToOthers(r, 1), 10.0 * std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(MinDistanceToOthers(r, 1), best);
  EXPECT_EQ(r.colors[0], p.colors[0]);
}

TEST(Refine, MonotoneOnRandomPalettes) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Palette p = GenerateRandom(12, rng);
    const std::vector<int> ids = {0, 5, 7};
    const Palette r = Refine(p, ids, 60.0);
    Palette staged = p;
    for (int id : ids) {
      const double before = MinDistanceToOthers(staged, id);
      staged = Refine(staged, {id}, 60.0);
      EXPECT_GE(MinDistanceToOthers(staged, id), before);
      EXPECT_GE(Distance(staged.colors[id], {128, 128, 128}) + 1e-12,
                p.colors[id] == staged.colors[id] ? 0.0 : 60.0);
    }
    EXPECT_EQ(r, staged);
  }
}

TEST(Refine, InfeasibleGrayBall) {
  EXPECT_THROW(
      {
        try {
          Refine(Palette({{0, 0, 0}, {10, 10, 10}}), {1}, 300.0);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), "infeasible_refinement");
          throw;
        }
      },
      Error);
}

}  // namespace
}  // namespace gss
