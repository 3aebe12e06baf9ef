#pragma once

// Per-pixel class labels with the one-hot view and ignore mask used by the
// center extraction and loss code.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace car {

constexpr int kIgnoreValue = 255;

struct LabelMask {
    int height = 0;
    int width = 0;
    int n_class = 0;
    int ignore_value = kIgnoreValue;
    std::vector<int> labels;  // row-major H*W

    LabelMask() = default;
    LabelMask(int h, int w, int n_cls, std::vector<int> lbls, int ignore = kIgnoreValue)
        : height(h), width(w), n_class(n_cls), ignore_value(ignore), labels(std::move(lbls)) {
        if (labels.size() != size_t(h) * size_t(w))
            throw std::invalid_argument("LabelMask: label count does not match H*W");
        for (int l : labels)
            if (l != ignore_value && (l < 0 || l >= n_class))
                throw std::invalid_argument("LabelMask: label id " + std::to_string(l) + " >= n_class " +
                                            std::to_string(n_class));
    }

    size_t pixels() const { return size_t(height) * size_t(width); }

    bool ignored(size_t i) const { return labels[i] == ignore_value; }

    size_t count_supervised() const {
        size_t n = 0;
        for (int l : labels)
            if (l != ignore_value) ++n;
        return n;
    }

    // sigma: 1 where the pixel is ignored, 0 elsewhere.
    std::vector<uint8_t> sigma() const {
        std::vector<uint8_t> s(pixels());
        for (size_t i = 0; i < s.size(); ++i) s[i] = ignored(i) ? 1 : 0;
        return s;
    }

    // HW x n_class one-hot matrix; ignored rows are all-zero.
    template <typename Real>
    Tensor<Real> y_flat() const {
        std::vector<Real> d(pixels() * size_t(n_class), Real(0));
        for (size_t i = 0; i < pixels(); ++i)
            if (!ignored(i)) d[i * n_class + labels[i]] = Real(1);
        return Tensor<Real>::from_data({pixels(), size_t(n_class)}, std::move(d));
    }

    // (1 - sigma) as an HW x 1 column for masking per-pixel terms.
    template <typename Real>
    Tensor<Real> keep_mask() const {
        std::vector<Real> d(pixels());
        for (size_t i = 0; i < pixels(); ++i) d[i] = ignored(i) ? Real(0) : Real(1);
        return Tensor<Real>::from_data({pixels(), 1}, std::move(d));
    }

    // Nearest-neighbor resize to a feature resolution.
    LabelMask resized(int h, int w) const {
        if (h == height && w == width) return *this;
        std::vector<int> out(size_t(h) * size_t(w));
        for (int y = 0; y < h; ++y) {
            int sy = int((int64_t(y) * height) / h);
            for (int x = 0; x < w; ++x) {
                int sx = int((int64_t(x) * width) / w);
                out[size_t(y) * w + x] = labels[size_t(sy) * width + sx];
            }
        }
        return LabelMask(h, w, n_class, std::move(out), ignore_value);
    }
};

}  // namespace car
