#pragma once

#include <cstdint>
#include <vector>

#include "gss/core.h"

namespace gss {

// counts[i][j] = pixels with ground truth i predicted as j. Pixels whose
// ground truth is unlabeled are skipped. A labeled pixel predicted as the
// unlabeled sentinel lands in `missed[i]`: it counts against class i's
// recall but not against any class's precision.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  int64_t count(int gt, int pred) const {
    return counts_[static_cast<size_t>(gt) * num_classes_ + pred];
  }
  int64_t missed(int gt) const { return missed_[gt]; }

  void Add(const LabelMap& pred, const LabelMap& gt);
  void Merge(const ConfusionMatrix& other);

  int64_t RowSum(int gt) const;  // includes missed
  int64_t ColSum(int pred) const;
  bool Present(int k) const { return RowSum(k) > 0; }

 private:
  int num_classes_;
  std::vector<int64_t> counts_;
  std::vector<int64_t> missed_;
};

ConfusionMatrix Confusion(const LabelMap& pred, const LabelMap& gt);

// Per-class IoU = diag / (rowsum + colsum - diag); 0 for classes absent from
// the ground truth (they are excluded from the means).
std::vector<double> PerClassIou(const ConfusionMatrix& confusion);

// Mean IoU over classes present in the ground truth. Throws
// "no_classes_present" when the matrix is empty.
double MeanIou(const ConfusionMatrix& confusion);

// Mean over present classes of diag / rowsum.
double MeanAccuracy(const ConfusionMatrix& confusion);

double PixelAccuracy(const ConfusionMatrix& confusion);

}  // namespace gss
