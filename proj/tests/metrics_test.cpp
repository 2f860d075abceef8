#include <gtest/gtest.h>

#include <algorithm>

#include "tacseg/metrics.hpp"
#include "tacseg/rng.hpp"

namespace tacseg {
namespace {

Mask rect(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0,
          std::size_t r1, std::size_t c1) {
  Mask m(h, w);
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) m.at(r, c) = 1;
  return m;
}

TEST(Iou, IdenticalMasksAreOne) {
  Mask a = rect(4, 4, 1, 1, 3, 3);
  EXPECT_EQ(iou(a, a), 1.0);
}

TEST(Iou, DisjointMasksAreZero) {
  Mask a = rect(4, 4, 0, 0, 2, 2);
  Mask b = rect(4, 4, 2, 2, 4, 4);
  EXPECT_EQ(iou(a, b), 0.0);
}

TEST(Iou, TopRowVsLeftColumnIsOneThird) {
  Mask a = rect(2, 2, 0, 0, 1, 2);  // top row
  Mask b = rect(2, 2, 0, 0, 2, 1);  // left column
  EXPECT_EQ(iou(a, b), 1.0 / 3.0);
}

TEST(Iou, Symmetry) {
  RngStream rng(1, "test.iou.sym");
  Mask a(5, 5), b(5, 5);
  for (std::size_t i = 0; i < 25; ++i) {
    a.v[i] = rng.coin();
    b.v[i] = rng.coin();
  }
  EXPECT_EQ(iou(a, b), iou(b, a));
}

TEST(Iou, EmptyUnionIsZero) {
  Mask a(3, 3), b(3, 3);
  EXPECT_EQ(iou(a, b), 0.0);
}

TEST(Iou, ShapeMismatchIsDimensionError) {
  Mask a(2, 2), b(3, 3);
  EXPECT_THROW(iou(a, b), DimensionError);
}

TEST(MiouImage, PerfectPredictionIsOne) {
  InstanceMaskSet gt;
  gt.masks = {rect(4, 4, 0, 0, 2, 2), rect(4, 4, 2, 2, 4, 4)};
  EXPECT_EQ(miou_image(gt, gt), 1.0);
}

TEST(MiouImage, NoPredictionsIsZero) {
  InstanceMaskSet gt, pred;
  gt.masks = {rect(4, 4, 0, 0, 2, 2)};
  EXPECT_EQ(miou_image(pred, gt), 0.0);
}

TEST(MiouImage, BestMatchPerGtInstance) {
  // 2 GT, 1 prediction overlapping only the first at IoU 0.5 -> (0.5 + 0)/2
  InstanceMaskSet gt, pred;
  gt.masks = {rect(4, 4, 0, 0, 1, 2), rect(4, 4, 3, 0, 4, 2)};
  pred.masks = {rect(4, 4, 0, 0, 1, 1)};  // 1 px inside GT0 (area 2): IoU 0.5
  EXPECT_EQ(miou_image(pred, gt), 0.25);
}

TEST(MiouImage, InvariantToPredictionOrder) {
  RngStream rng(2, "test.miou.order");
  InstanceMaskSet gt, pred;
  gt.masks = {rect(6, 6, 0, 0, 3, 3), rect(6, 6, 3, 3, 6, 6)};
  pred.masks = {rect(6, 6, 0, 0, 2, 3), rect(6, 6, 4, 3, 6, 6),
                rect(6, 6, 0, 4, 2, 6)};
  const double before = miou_image(pred, gt);
  std::reverse(pred.masks.begin(), pred.masks.end());
  EXPECT_EQ(miou_image(pred, gt), before);
}

TEST(MiouDataset, EmptyGtImagesExcludedAndCounted) {
  InstanceMaskSet gt1, gt_empty, pred1, pred_any;
  gt1.masks = {rect(4, 4, 0, 0, 2, 2)};
  pred1.masks = {rect(4, 4, 0, 0, 2, 2)};
  pred_any.masks = {rect(4, 4, 1, 1, 3, 3)};
  MiouResult r = miou_dataset({pred1, pred_any}, {gt1, gt_empty});
  EXPECT_EQ(r.n_images, 1u);
  EXPECT_EQ(r.n_excluded, 1u);
  EXPECT_EQ(r.miou, 1.0);
}

TEST(MiouDataset, CountsUnmatchedPredictions) {
  InstanceMaskSet gt, pred;
  gt.masks = {rect(6, 6, 0, 0, 2, 2)};
  pred.masks = {rect(6, 6, 0, 0, 2, 2), rect(6, 6, 4, 4, 6, 6)};  // 1 spurious
  MiouResult r = miou_dataset({pred}, {gt});
  EXPECT_EQ(r.n_unmatched_pred, 1u);
}

TEST(ConnectedComponents, SolidSquareIsOneInstance) {
  Mask m = rect(6, 6, 1, 1, 5, 5);
  InstanceMaskSet set = connected_components(m, 8);
  ASSERT_EQ(set.masks.size(), 1u);
  EXPECT_EQ(iou(set.masks[0], m), 1.0);
}

TEST(ConnectedComponents, DiagonalPixelsAreTwoInstances) {
  Mask m(4, 4);
  m.at(1, 1) = 1;
  m.at(2, 2) = 1;  // touching only diagonally: separate under 4-connectivity
  InstanceMaskSet set = connected_components(m, 1);
  EXPECT_EQ(set.masks.size(), 2u);
}

TEST(ConnectedComponents, CheckerboardDiscardedAtMinArea) {
  Mask m(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) m.at(r, c) = (r + c) % 2 == 0;
  // 8 single-pixel components, all below min_area 8
  EXPECT_TRUE(connected_components(m, 8).masks.empty());
  EXPECT_EQ(connected_components(m, 1).masks.size(), 8u);
}

TEST(ConnectedComponents, OutputsDisjointAndCoverInputMinusDiscards) {
  RngStream rng(3, "test.cc.cover");
  Mask m(10, 10);
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = rng.coin();
  InstanceMaskSet set = connected_components(m, 1);  // keep everything
  Mask cover(10, 10);
  for (const Mask& inst : set.masks)
    for (std::size_t i = 0; i < inst.v.size(); ++i) {
      EXPECT_FALSE(cover.v[i] && inst.v[i]) << "overlapping components";
      cover.v[i] |= inst.v[i];
    }
  EXPECT_EQ(iou(cover, m), 1.0);
}

TEST(MaskFromLogits, ThresholdsAtZeroLogit) {
  Tensor z({1, 2, 2}, {3.0, -3.0, 0.0, 1e-9});
  Mask m = mask_from_logits(z);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(0, 1), 0);
  EXPECT_EQ(m.at(1, 0), 0);  // sigmoid(0) = 0.5, not > 0.5
  EXPECT_EQ(m.at(1, 1), 1);
}

TEST(MaskFromLogits, RejectsMultiChannel) {
  EXPECT_THROW(mask_from_logits(Tensor::zeros({2, 2, 2})), DimensionError);
}

TEST(UnionMask, OrsAllInstances) {
  InstanceMaskSet set;
  set.masks = {rect(4, 4, 0, 0, 2, 2), rect(4, 4, 2, 2, 4, 4)};
  Mask u = union_mask(set, 4, 4);
  EXPECT_EQ(u.area(), 8u);
}

}  // namespace
}  // namespace tacseg
