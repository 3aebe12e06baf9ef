#include "metrics.hpp"

#include <stdexcept>

namespace car {

Tensor<float> sample_input(const Sample& s) {
    std::vector<float> d(s.image.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = float(s.image[i]) / 255.0f;
    return Tensor<float>::from_data({1, size_t(s.height), size_t(s.width), 3}, std::move(d));
}

std::vector<int> predict(const ToySegNet<float>& model, const Sample& sample) {
    auto [features, logits] = model.forward(sample_input(sample));
    (void)features;
    size_t hw = size_t(sample.height) * size_t(sample.width);
    size_t n = size_t(model.cfg.n_class);
    std::vector<int> pred(hw);
    const auto& v = logits.data();
    for (size_t i = 0; i < hw; ++i) {
        size_t best = 0;
        for (size_t k = 1; k < n; ++k)
            if (v[i * n + k] > v[i * n + best]) best = k;
        pred[i] = int(best);
    }
    return pred;
}

MiouResult miou_from_confusion(const std::vector<std::vector<long>>& confusion) {
    size_t n = confusion.size();
    MiouResult r;
    r.confusion = confusion;
    r.iou.assign(n, 0.0);
    r.present.assign(n, false);
    double sum = 0;
    size_t cnt = 0;
    for (size_t k = 0; k < n; ++k) {
        long tp = confusion[k][k];
        long fn = 0, fp = 0, gt = 0;
        for (size_t j = 0; j < n; ++j) {
            gt += confusion[k][j];
            if (j != k) {
                fn += confusion[k][j];
                fp += confusion[j][k];
            }
        }
        r.present[k] = gt > 0;
        if (r.present[k]) {
            long denom = tp + fp + fn;
            r.iou[k] = denom > 0 ? double(tp) / double(denom) : 0.0;
            sum += r.iou[k];
            ++cnt;
        }
    }
    r.miou = cnt ? sum / double(cnt) : 0.0;
    return r;
}

MiouResult evaluate_miou(const ToySegNet<float>& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate_miou: no samples");
    size_t n = size_t(model.cfg.n_class);
    std::vector<std::vector<long>> confusion(n, std::vector<long>(n, 0));
    for (const auto& s : samples) {
        auto pred = predict(model, s);
        for (size_t i = 0; i < pred.size(); ++i)
            if (!s.mask.ignored(i)) ++confusion[s.mask.labels[i]][pred[i]];
    }
    return miou_from_confusion(confusion);
}

}  // namespace car
