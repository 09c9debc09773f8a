#include "gss/metrics.h"

namespace gss {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<size_t>(num_classes) * num_classes, 0),
      missed_(num_classes, 0) {
  if (num_classes < 1) throw Error("invalid_argument", "confusion needs at least one class");
}

void ConfusionMatrix::Add(const LabelMap& pred, const LabelMap& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw Error("shape_mismatch", "prediction and ground truth dimensions differ");
  }
  if (pred.num_classes != num_classes_ || gt.num_classes != num_classes_) {
    throw Error("class_count_mismatch", "prediction and ground truth disagree on K");
  }
  for (size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.labels[i];
    if (g == num_classes_) continue;
    const int p = pred.labels[i];
    if (p == num_classes_) {
      ++missed_[g];
    } else {
      ++counts_[static_cast<size_t>(g) * num_classes_ + p];
    }
  }
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw Error("class_count_mismatch", "cannot merge confusion matrices of different K");
  }
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  for (size_t i = 0; i < missed_.size(); ++i) missed_[i] += other.missed_[i];
}

int64_t ConfusionMatrix::RowSum(int gt) const {
  int64_t total = missed_[gt];
  for (int j = 0; j < num_classes_; ++j) total += count(gt, j);
  return total;
}

int64_t ConfusionMatrix::ColSum(int pred) const {
  int64_t total = 0;
  for (int i = 0; i < num_classes_; ++i) total += count(i, pred);
  return total;
}

ConfusionMatrix Confusion(const LabelMap& pred, const LabelMap& gt) {
  ConfusionMatrix m(gt.num_classes);
  m.Add(pred, gt);
  return m;
}

std::vector<double> PerClassIou(const ConfusionMatrix& confusion) {
  std::vector<double> ious(confusion.num_classes(), 0.0);
  for (int k = 0; k < confusion.num_classes(); ++k) {
    const int64_t inter = confusion.count(k, k);
    const int64_t uni = confusion.RowSum(k) + confusion.ColSum(k) - inter;
    if (uni > 0) ious[k] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return ious;
}

double MeanIou(const ConfusionMatrix& confusion) {
  const std::vector<double> ious = PerClassIou(confusion);
  double total = 0.0;
  int present = 0;
  for (int k = 0; k < confusion.num_classes(); ++k) {
    if (!confusion.Present(k)) continue;
    total += ious[k];
    ++present;
  }
  if (present == 0) throw Error("no_classes_present", "no ground-truth class present");
  return total / present;
}

double MeanAccuracy(const ConfusionMatrix& confusion) {
  double total = 0.0;
  int present = 0;
  for (int k = 0; k < confusion.num_classes(); ++k) {
    const int64_t row = confusion.RowSum(k);
    if (row == 0) continue;
    total += static_cast<double>(confusion.count(k, k)) / static_cast<double>(row);
    ++present;
  }
  if (present == 0) throw Error("no_classes_present", "no ground-truth class present");
  return total / present;
}

double PixelAccuracy(const ConfusionMatrix& confusion) {
  int64_t correct = 0;
  int64_t total = 0;
  for (int k = 0; k < confusion.num_classes(); ++k) {
    correct += confusion.count(k, k);
    total += confusion.RowSum(k);
  }
  if (total == 0) throw Error("no_classes_present", "no labeled pixels");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace gss
