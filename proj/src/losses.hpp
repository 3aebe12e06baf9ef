#pragma once

// The three class-aware regularization losses plus the primary cross-entropy.
//
//   intra_c2p : mean squared distance between each pixel feature and its
//               ground-truth class center.
//   inter_c2c : margin-thresholded row-softmax similarity between distinct
//               class centers.
//   inter_c2p : margin-thresholded per-pixel softmax similarity to centers of
//               other classes, with the own-class logit replaced by the
//               center's self dot product.
//
// Absent classes are removed from both axes of the similarity matrices before
// the softmax; with fewer than two present classes the inter losses are zero.

#include <array>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "centers.hpp"
#include "labels.hpp"
#include "tensor.hpp"

namespace car {

struct CarThresholds {
    double eps0 = 0.5;   // margin numerator, center-to-center
    double eps1 = 0.25;  // margin numerator, center-to-pixel

    void validate() const {
        if (eps0 < 0 || eps1 < 0) throw std::invalid_argument("CarThresholds: eps0/eps1 must be >= 0");
    }
};

// Λ' replacement mode: `masked` substitutes the own-class logit, `literal`
// adds the self dot product to every column (the formula as printed).
enum class Replacement { masked, literal };

namespace detail {

inline void warn_degenerate(const char* which) {
    std::cerr << "warning: " << which << " over a batch with no supervised pixels, defined as 0\n";
}

// Selection matrix (P x n_class) picking the present classes, plus the list
// of their ids in ascending order.
template <typename Real>
Tensor<Real> present_selector(const ClassCenters<Real>& centers, std::vector<size_t>* ids = nullptr) {
    size_t n = centers.n_class();
    std::vector<size_t> sel;
    for (size_t k = 0; k < n; ++k)
        if (centers.present[k]) sel.push_back(k);
    std::vector<Real> s(sel.size() * n, Real(0));
    for (size_t p = 0; p < sel.size(); ++p) s[p * n + sel[p]] = Real(1);
    if (ids) *ids = sel;
    return Tensor<Real>::from_data({sel.size(), n}, std::move(s));
}

}  // namespace detail

// Mean over non-ignored pixel-channel elements of |Y_flat·mu - X_flat|^2.
template <typename Real>
Tensor<Real> intra_c2p_loss(const Tensor<Real>& x_flat, const LabelMask& mask,
                            const ClassCenters<Real>& centers) {
    size_t supervised = mask.count_supervised();
    if (supervised == 0) {
        detail::warn_degenerate("intra_c2p_loss");
        return Tensor<Real>::scalar(Real(0));
    }
    Tensor<Real> diff = sub(distribute_centers(centers, mask), x_flat);
    Tensor<Real> masked = mul(diff, mask.template keep_mask<Real>());
    Real inv = Real(1) / (Real(supervised) * Real(x_flat.dim(1)));
    return scale(sum(square(masked)), inv);
}

// Row-softmax center Gram matrix scaled by 1/sqrt(C); off-diagonal excess over
// the margin eps0/(P-1) is summed per class and mean-squared over classes.
template <typename Real>
Tensor<Real> inter_c2c_loss(const ClassCenters<Real>& centers, Real eps0) {
    if (centers.present_count() == 0) throw std::invalid_argument("inter_c2c_loss: no present class");
    size_t p = centers.present_count();
    if (p < 2) return Tensor<Real>::scalar(Real(0));  // no off-diagonal terms

    Tensor<Real> sel = detail::present_selector(centers);
    Tensor<Real> mu_p = matmul(sel, centers.mu);  // P x C
    Real inv_sqrt_c = Real(1) / std::sqrt(Real(centers.feature_width()));
    Tensor<Real> sim = softmax(scale(matmul(mu_p, transpose(mu_p)), inv_sqrt_c), 1);

    std::vector<Real> off(p * p, Real(1));
    for (size_t i = 0; i < p; ++i) off[i * p + i] = Real(0);
    Tensor<Real> non_diag = mul(sim, Tensor<Real>::from_data({p, p}, std::move(off)));

    Real margin = eps0 / Real(p - 1);
    Tensor<Real> per_class = sum(relu_max(non_diag, margin), 1);  // f_sum over the class axis
    return mean(square(per_class));                               // f_mse over classes
}

// Per pixel, the class-axis logits are the pixel-to-center dot products with
// the own-class entry replaced; softmax across classes, keep non-GT entries,
// margin eps1/(P-1), sum per pixel, mean of squares over supervised pixels.
template <typename Real>
Tensor<Real> inter_c2p_loss(const Tensor<Real>& x_flat, const LabelMask& mask,
                            const ClassCenters<Real>& centers, Real eps1,
                            Replacement replacement = Replacement::masked) {
    size_t supervised = mask.count_supervised();
    if (supervised == 0) {
        detail::warn_degenerate("inter_c2p_loss");
        return Tensor<Real>::scalar(Real(0));
    }
    size_t p = centers.present_count();
    if (p < 2) return Tensor<Real>::scalar(Real(0));

    std::vector<size_t> ids;
    Tensor<Real> sel = detail::present_selector(centers, &ids);
    Tensor<Real> mu_p = matmul(sel, centers.mu);                  // P x C
    Tensor<Real> logits = matmul(x_flat, transpose(mu_p));        // HW x P

    // one-hot over present columns
    size_t hw = mask.pixels();
    std::vector<Real> y(hw * p, Real(0)), y_inv(hw * p, Real(1));
    std::vector<size_t> col_of(centers.n_class(), size_t(-1));
    for (size_t i = 0; i < ids.size(); ++i) col_of[ids[i]] = i;
    for (size_t i = 0; i < hw; ++i)
        if (!mask.ignored(i)) {
            size_t c = col_of[mask.labels[i]];
            if (c == size_t(-1)) throw std::invalid_argument("inter_c2p_loss: supervised pixel of absent class");
            y[i * p + c] = Real(1);
            y_inv[i * p + c] = Real(0);
        }
    Tensor<Real> y_t = Tensor<Real>::from_data({hw, p}, std::move(y));
    Tensor<Real> y_inv_t = Tensor<Real>::from_data({hw, p}, std::move(y_inv));

    Tensor<Real> self_dot = reshape(sum(square(mu_p), 1), {1, p});  // diag(mu·mu^T)
    Tensor<Real> updated = replacement == Replacement::masked
                               ? add(mul(logits, y_inv_t), mul(y_t, self_dot))
                               : add(mul(logits, y_inv_t), self_dot);

    Tensor<Real> sim = softmax(updated, 1);  // no 1/sqrt(C) scaling here
    Tensor<Real> retained = mul(sim, y_inv_t);
    Real margin = eps1 / Real(p - 1);
    Tensor<Real> per_pixel = sum(relu_max(retained, margin), 1);  // HW
    Tensor<Real> kept = mul(reshape(per_pixel, {hw, 1}), mask.template keep_mask<Real>());
    return scale(sum(square(kept)), Real(1) / Real(supervised));
}

// Mean over supervised pixels of -log softmax probability of the GT class.
template <typename Real>
Tensor<Real> cross_entropy_loss(const Tensor<Real>& logits, const LabelMask& mask) {
    if (logits.rank() != 2 || logits.dim(0) != mask.pixels() || logits.dim(1) != size_t(mask.n_class))
        throw std::invalid_argument("cross_entropy_loss: logits " + shape_str(logits.shape()) +
                                    " do not match mask");
    size_t supervised = mask.count_supervised();
    if (supervised == 0) throw std::runtime_error("cross_entropy_loss: no supervised pixels");
    Tensor<Real> lse = log_sum_exp(logits, 1);                                 // HW
    Tensor<Real> gt = sum(mul(logits, mask.template y_flat<Real>()), 1);       // HW
    Tensor<Real> per_pixel = mul(reshape(sub(lse, gt), {mask.pixels(), 1}), mask.template keep_mask<Real>());
    return scale(sum(per_pixel), Real(1) / Real(supervised));
}

template <typename Real>
struct LossBundle {
    Tensor<Real> ce, intra_c2p, inter_c2c, inter_c2p;
    std::array<Real, 4> weights{};  // ce, intra, inter_c2c, inter_c2p
    Tensor<Real> total;
};

template <typename Real>
LossBundle<Real> combine(Tensor<Real> ce, Tensor<Real> intra, Tensor<Real> c2c, Tensor<Real> c2p,
                         std::array<Real, 4> weights) {
    for (Real w : weights)
        if (w < Real(0)) throw std::invalid_argument("combine: negative loss weight");
    LossBundle<Real> b;
    b.ce = std::move(ce);
    b.intra_c2p = std::move(intra);
    b.inter_c2c = std::move(c2c);
    b.inter_c2p = std::move(c2p);
    b.weights = weights;
    // zero-weight terms stay out of the graph so toggling a loss off removes
    // its backward cost entirely
    Tensor<Real> total = Tensor<Real>::scalar(Real(0));
    const Tensor<Real>* parts[4] = {&b.ce, &b.intra_c2p, &b.inter_c2c, &b.inter_c2p};
    for (int i = 0; i < 4; ++i)
        if (weights[i] > Real(0)) total = add(total, scale(*parts[i], weights[i]));
    b.total = std::move(total);
    return b;
}

}  // namespace car
