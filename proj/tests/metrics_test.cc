#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "gss/metrics.h"
#include "test_util.h"

namespace gss {
namespace {

// Direct per-class set intersection / union over pixel indices.
double SetMiou(const LabelMap& pred, const LabelMap& gt) {
  const int k = gt.num_classes;
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    std::set<size_t> g, p;
    for (size_t i = 0; i < gt.size(); ++i) {
      if (!gt.IsLabeled(i)) continue;
      if (gt.labels[i] == c) g.insert(i);
      if (pred.labels[i] == c) p.insert(i);
    }
    if (g.empty()) continue;
    std::set<size_t> uni = g;
    uni.insert(p.begin(), p.end());
    size_t inter = 0;
    for (size_t i : g) inter += p.count(i);
    total += static_cast<double>(inter) / static_cast<double>(uni.size());
    ++present;
  }
  return total / present;
}

TEST(Confusion, PerfectIsDiagonal) {
  Rng rng(1);
  const LabelMap gt = testing::RandomMap(8, 8, 4, rng);
  const ConfusionMatrix m = Confusion(gt, gt);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) EXPECT_EQ(m.count(i, j), 0);
    }
  }
  EXPECT_DOUBLE_EQ(MeanIou(m), 1.0);
  EXPECT_DOUBLE_EQ(MeanAccuracy(m), 1.0);
}

TEST(Confusion, AllUnlabeledIsEmpty) {
  const LabelMap gt(4, 4, 3, 3);
  const LabelMap pred(4, 4, 3, 1);
  const ConfusionMatrix m = Confusion(pred, gt);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(m.count(i, j), 0);
  }
  EXPECT_THROW(MeanIou(m), Error);
  EXPECT_THROW(MeanAccuracy(m), Error);
}

TEST(Confusion, TwoByTwoHandCount) {
  LabelMap gt(2, 2, 2), pred(2, 2, 2);
  gt.labels = {0, 0, 1, 1};
  pred.labels = {0, 1, 1, 1};
  const ConfusionMatrix m = Confusion(pred, gt);
  EXPECT_EQ(m.count(0, 0), 1);
  EXPECT_EQ(m.count(0, 1), 1);
  EXPECT_EQ(m.count(1, 0), 0);
  EXPECT_EQ(m.count(1, 1), 2);
  const std::vector<double> iou = PerClassIou(m);
  EXPECT_DOUBLE_EQ(iou[0], 0.5);
  EXPECT_DOUBLE_EQ(iou[1], 2.0 / 3.0);
  EXPECT_NEAR(MeanIou(m), 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(MeanIou(m), SetMiou(pred, gt), 1e-15);
}

TEST(Confusion, DisjointIsZero) {
  LabelMap gt(2, 1, 2), pred(2, 1, 2);
  gt.labels = {0, 1};
  pred.labels = {1, 0};
  EXPECT_DOUBLE_EQ(MeanIou(Confusion(pred, gt)), 0.0);
}

TEST(Confusion, ShapeMismatch) {
  EXPECT_THROW(
      {
        try {
          Confusion(LabelMap(2, 2, 3), LabelMap(2, 3, 3));
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), "shape_mismatch");
          throw;
        }
      },
      Error);
}

TEST(Confusion, SentinelPredictionCountsAsMiss) {
  LabelMap gt(2, 1, 2), pred(2, 1, 2);
  gt.labels = {0, 1};
  pred.labels = {0, 2};
  const ConfusionMatrix m = Confusion(pred, gt);
  EXPECT_EQ(m.missed(1), 1);
  EXPECT_DOUBLE_EQ(PerClassIou(m)[1], 0.0);
  EXPECT_DOUBLE_EQ(PerClassIou(m)[0], 1.0);
}

TEST(Miou, MatchesSetOracleOnRandomMaps) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = static_cast<int>(rng.UniformInt(2, 6));
    const LabelMap gt = testing::RandomMap(16, 16, k, rng, 0.1);
    const LabelMap pred = testing::RandomMap(16, 16, k, rng);
    EXPECT_NEAR(MeanIou(Confusion(pred, gt)), SetMiou(pred, gt), 1e-12);
  }
}

TEST(Miou, PermutationEquivariance) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 5;
    LabelMap gt = testing::RandomMap(16, 16, k, rng, 0.1);
    LabelMap pred = testing::RandomMap(16, 16, k, rng);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.Shuffle(perm);
    LabelMap gt2 = gt, pred2 = pred;
    for (int& l : gt2.labels) l = l == k ? k : perm[l];
    for (int& l : pred2.labels) l = perm[l];
    const std::vector<double> a = PerClassIou(Confusion(pred, gt));
    const std::vector<double> b = PerClassIou(Confusion(pred2, gt2));
    for (int c = 0; c < k; ++c) EXPECT_DOUBLE_EQ(a[c], b[perm[c]]);
    EXPECT_NEAR(MeanIou(Confusion(pred, gt)), MeanIou(Confusion(pred2, gt2)), 1e-15);
  }
}

TEST(Miou, AbsentClassesExcluded) {
  LabelMap gt(2, 1, 3), pred(2, 1, 3);
  gt.labels = {0, 0};
  pred.labels = {0, 2};
  const ConfusionMatrix m = Confusion(pred, gt);
  EXPECT_DOUBLE_EQ(MeanIou(m), 0.5);
  EXPECT_DOUBLE_EQ(MeanAccuracy(m), 0.5);
}

TEST(Confusion, MergeEqualsJointAdd) {
  Rng rng(5);
  const LabelMap g1 = testing::RandomMap(8, 8, 3, rng), p1 = testing::RandomMap(8, 8, 3, rng);
  const LabelMap g2 = testing::RandomMap(8, 8, 3, rng), p2 = testing::RandomMap(8, 8, 3, rng);
  ConfusionMatrix joint(3);
  joint.Add(p1, g1);
  joint.Add(p2, g2);
  ConfusionMatrix merged = Confusion(p1, g1);
  merged.Merge(Confusion(p2, g2));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(joint.count(i, j), merged.count(i, j));
  }
}

}  // namespace
}  // namespace gss
