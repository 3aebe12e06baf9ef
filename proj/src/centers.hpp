#pragma once

// Ground-truth class centers: the mean feature of every pixel of a class,
// at image, batch, or moving-average scope.

#include <stdexcept>
#include <vector>

#include "labels.hpp"
#include "tensor.hpp"

namespace car {

template <typename Real>
struct ClassCenters {
    Tensor<Real> mu;                 // n_class x C; absent rows are all-zero
    std::vector<long> counts;        // contributing pixels per class
    std::vector<bool> present;       // counts > 0

    size_t n_class() const { return counts.size(); }
    size_t feature_width() const { return mu.dim(1); }

    size_t present_count() const {
        size_t p = 0;
        for (bool b : present)
            if (b) ++p;
        return p;
    }
};

// Shared center computation over a stacked HW x C feature block and its mask.
// mu stays on the feature graph, so losses built on mu propagate gradients
// back into the features unless the caller detaches.
template <typename Real>
ClassCenters<Real> centers_from_flat(const Tensor<Real>& x_flat, const LabelMask& mask) {
    if (x_flat.rank() != 2 || x_flat.dim(0) != mask.pixels())
        throw std::invalid_argument("centers_from_flat: features " + shape_str(x_flat.shape()) +
                                    " do not align with mask pixels");
    size_t n_class = size_t(mask.n_class);
    ClassCenters<Real> out;
    out.counts.assign(n_class, 0);
    out.present.assign(n_class, false);
    for (size_t i = 0; i < mask.pixels(); ++i)
        if (!mask.ignored(i)) ++out.counts[mask.labels[i]];
    for (size_t k = 0; k < n_class; ++k) out.present[k] = out.counts[k] > 0;

    // mu = (Y_flat^T . X_flat) / counts, division guarded for absent classes
    Tensor<Real> sums = matmul(transpose(mask.template y_flat<Real>()), x_flat);
    std::vector<Real> inv(n_class);
    for (size_t k = 0; k < n_class; ++k) inv[k] = out.present[k] ? Real(1) / Real(out.counts[k]) : Real(0);
    out.mu = mul(sums, Tensor<Real>::from_data({n_class, 1}, std::move(inv)));
    return out;
}

enum class CenterScope { image, batch, moving };

// Stacks the per-image masks of a batch into one (B*HW)-pixel mask.
inline LabelMask concat_masks(const std::vector<LabelMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("concat_masks: empty batch");
    std::vector<int> labels;
    for (const auto& m : masks) {
        if (m.n_class != masks[0].n_class) throw std::invalid_argument("concat_masks: inconsistent n_class");
        labels.insert(labels.end(), m.labels.begin(), m.labels.end());
    }
    int n = int(labels.size());  // taken before the move: argument evaluation order is unspecified
    return LabelMask(n, 1, masks[0].n_class, std::move(labels), masks[0].ignore_value);
}

// Batch-scope centers over a stacked (B*HW) x C feature block.
template <typename Real>
ClassCenters<Real> extract_centers_batch(const Tensor<Real>& x_flat, const std::vector<LabelMask>& masks) {
    LabelMask joint = concat_masks(masks);
    if (joint.count_supervised() == 0) throw std::runtime_error("extract_centers: no supervised pixels");
    return centers_from_flat(x_flat, joint);
}

// Image-scope centers: one ClassCenters per image.
template <typename Real>
std::vector<ClassCenters<Real>> extract_centers_image(const Tensor<Real>& x_flat,
                                                      const std::vector<LabelMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("extract_centers: empty batch");
    size_t hw = masks[0].pixels();
    if (x_flat.dim(0) != hw * masks.size())
        throw std::invalid_argument("extract_centers: features do not align with batch masks");
    size_t supervised = 0;
    for (const auto& m : masks) supervised += m.count_supervised();
    if (supervised == 0) throw std::runtime_error("extract_centers: no supervised pixels");
    std::vector<ClassCenters<Real>> out;
    out.reserve(masks.size());
    for (size_t b = 0; b < masks.size(); ++b)
        out.push_back(centers_from_flat(slice_rows(x_flat, b * hw, (b + 1) * hw), masks[b]));
    return out;
}

// decay * old + (1 - decay) * fresh for classes present in fresh; the result
// is detached from the gradient graph.
template <typename Real>
ClassCenters<Real> update_moving_centers(const ClassCenters<Real>& state, const ClassCenters<Real>& fresh,
                                         Real decay) {
    if (decay < Real(0) || decay >= Real(1))
        throw std::invalid_argument("update_moving_centers: decay must be in [0,1)");
    if (state.n_class() != fresh.n_class() || state.feature_width() != fresh.feature_width())
        throw std::invalid_argument("update_moving_centers: shape mismatch");
    size_t n = state.n_class(), c = state.feature_width();
    ClassCenters<Real> out;
    out.counts = state.counts;
    out.present = state.present;
    std::vector<Real> mu(n * c);
    const auto& old_mu = state.mu.data();
    const auto& new_mu = fresh.mu.data();
    for (size_t k = 0; k < n; ++k) {
        if (fresh.present[k]) {
            Real w_old = state.present[k] ? decay : Real(0);
            Real w_new = state.present[k] ? Real(1) - decay : Real(1);
            for (size_t j = 0; j < c; ++j) mu[k * c + j] = w_old * old_mu[k * c + j] + w_new * new_mu[k * c + j];
            out.counts[k] = fresh.counts[k];
            out.present[k] = true;
        } else {
            for (size_t j = 0; j < c; ++j) mu[k * c + j] = old_mu[k * c + j];
        }
    }
    out.mu = Tensor<Real>::from_data({n, c}, std::move(mu));
    return out;
}

// Y_flat . mu: row i carries the center of pixel i's class, zero when ignored.
template <typename Real>
Tensor<Real> distribute_centers(const ClassCenters<Real>& centers, const LabelMask& mask) {
    if (size_t(mask.n_class) != centers.n_class())
        throw std::invalid_argument("distribute_centers: mask classes exceed center table");
    return matmul(mask.template y_flat<Real>(), centers.mu);
}

template <typename Real>
ClassCenters<Real> detach_centers(const ClassCenters<Real>& c) {
    ClassCenters<Real> out;
    out.mu = detach(c.mu);
    out.counts = c.counts;
    out.present = c.present;
    return out;
}

}  // namespace car
