#include "avseg/metrics.hpp"

#include <nlohmann/json.hpp>

#include "avseg/error.hpp"

namespace avseg {

void MetricCounts::init(int64_t c) {
    num_classes = c;
    inter.assign(static_cast<size_t>(c) + 1, 0);
    uni.assign(static_cast<size_t>(c) + 1, 0);
    tp.assign(static_cast<size_t>(c) + 1, 0);
    fp.assign(static_cast<size_t>(c) + 1, 0);
    fn.assign(static_cast<size_t>(c) + 1, 0);
}

void MetricCounts::accumulate(const IntTensor& pred, const IntTensor& gt) {
    check_shape(pred.shape() == gt.shape(), "metric accumulation shape mismatch");
    check_shape(num_classes > 0, "MetricCounts not initialized");
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const int32_t p = pred[i], g = gt[i];
        check_shape(p >= 0 && p <= num_classes && g >= 0 && g <= num_classes,
                    "label out of range 0.." + std::to_string(num_classes));
        if (p == g) {
            ++inter[static_cast<size_t>(p)];
            ++uni[static_cast<size_t>(p)];
            ++tp[static_cast<size_t>(p)];
        } else {
            ++uni[static_cast<size_t>(p)];
            ++uni[static_cast<size_t>(g)];
            ++fp[static_cast<size_t>(p)];
            ++fn[static_cast<size_t>(g)];
        }
    }
}

void MetricCounts::merge(const MetricCounts& other) {
    check_shape(num_classes == other.num_classes, "cannot merge counts with different class counts");
    for (size_t c = 0; c < inter.size(); ++c) {
        inter[c] += other.inter[c];
        uni[c] += other.uni[c];
        tp[c] += other.tp[c];
        fp[c] += other.fp[c];
        fn[c] += other.fn[c];
    }
}

EvalReport evaluate_counts(const MetricCounts& counts, bool binary_task, double beta2) {
    EvalReport r;
    r.counts = counts;
    r.binary_task = binary_task;
    r.beta2 = beta2;

    const int64_t c_lo = binary_task ? 1 : 0;
    double iou_sum = 0;
    int64_t iou_classes = 0;
    for (int64_t c = c_lo; c <= counts.num_classes; ++c) {
        const int64_t u = counts.uni[static_cast<size_t>(c)];
        if (u == 0) continue;
        const double iou = static_cast<double>(counts.inter[static_cast<size_t>(c)]) / static_cast<double>(u);
        r.per_class_iou[c] = iou;
        iou_sum += iou;
        ++iou_classes;
    }
    if (iou_classes == 0) throw NumericalError("IoU undefined: empty union for every class");
    r.miou = iou_sum / static_cast<double>(iou_classes);

    // F over foreground classes, micro-averaged counts
    int64_t stp = 0, sfp = 0, sfn = 0;
    for (int64_t c = 1; c <= counts.num_classes; ++c) {
        stp += counts.tp[static_cast<size_t>(c)];
        sfp += counts.fp[static_cast<size_t>(c)];
        sfn += counts.fn[static_cast<size_t>(c)];
    }
    const double prec = (stp + sfp) > 0 ? static_cast<double>(stp) / static_cast<double>(stp + sfp) : 0.0;
    const double rec = (stp + sfn) > 0 ? static_cast<double>(stp) / static_cast<double>(stp + sfn) : 0.0;
    const double denom = beta2 * prec + rec;
    r.fscore = denom > 0 ? (1.0 + beta2) * prec * rec / denom : 0.0;
    return r;
}

namespace {

MetricCounts counts_of(const IntTensor& pred, const IntTensor& gt, int64_t num_classes) {
    MetricCounts c;
    c.init(num_classes);
    c.accumulate(pred, gt);
    return c;
}

}  // namespace

double miou(const IntTensor& pred, const IntTensor& gt, int64_t num_classes) {
    return evaluate_counts(counts_of(pred, gt, num_classes), num_classes == 1).miou;
}

double fscore(const IntTensor& pred, const IntTensor& gt, int64_t num_classes, double beta2) {
    return evaluate_counts(counts_of(pred, gt, num_classes), num_classes == 1, beta2).fscore;
}

std::string report_to_json(const EvalReport& r, const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["miou"] = r.miou;
    j["fscore"] = r.fscore;
    j["binary_task"] = r.binary_task;
    j["beta2"] = r.beta2;
    nlohmann::json pci = nlohmann::json::object();
    for (const auto& [c, iou] : r.per_class_iou) {
        std::string key = c == 0 ? "background"
                                 : (c - 1 < static_cast<int64_t>(class_names.size())
                                        ? class_names[static_cast<size_t>(c - 1)]
                                        : "class_" + std::to_string(c));
        pci[key] = iou;
    }
    j["per_class_iou"] = pci;
    nlohmann::json cnt;
    cnt["intersection"] = r.counts.inter;
    cnt["union"] = r.counts.uni;
    cnt["tp"] = r.counts.tp;
    cnt["fp"] = r.counts.fp;
    cnt["fn"] = r.counts.fn;
    j["counts"] = cnt;
    return j.dump(2);
}

}  // namespace avseg
