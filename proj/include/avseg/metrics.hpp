#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avseg/tensor.hpp"

namespace avseg {

// Dataset-level accumulators (sum counts first, divide once at the end).
// merge() is associative and commutative so evaluation can be sharded.
struct MetricCounts {
    int64_t num_classes = 0;  // C; class ids run 0..C with 0 = background
    std::vector<int64_t> inter, uni;  // per class id
    std::vector<int64_t> tp, fp, fn;  // per class id

    void init(int64_t c);
    void accumulate(const IntTensor& pred, const IntTensor& gt);
    void merge(const MetricCounts& other);
};

struct EvalReport {
    double miou = 0.0;
    double fscore = 0.0;
    std::map<int64_t, double> per_class_iou;  // classes with nonzero union
    MetricCounts counts;
    bool binary_task = false;
    double beta2 = 0.3;
};

// binary task: foreground-class IoU and F only; semantic task: mIoU over all
// classes (background included) with nonzero union, F micro-averaged over
// object classes. Throws NumericalError when every union is empty.
EvalReport evaluate_counts(const MetricCounts& counts, bool binary_task, double beta2 = 0.3);

double miou(const IntTensor& pred, const IntTensor& gt, int64_t num_classes);
double fscore(const IntTensor& pred, const IntTensor& gt, int64_t num_classes, double beta2 = 0.3);

std::string report_to_json(const EvalReport& report, const std::vector<std::string>& class_names);

}  // namespace avseg
