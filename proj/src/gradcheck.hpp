#pragma once

// Central finite-difference gradient checking at 64-bit precision. The suite
// covers every differentiable op and all loss terms, and is what the
// `gradcheck` CLI subcommand runs.

#include <functional>
#include <string>
#include <vector>

#include "centers.hpp"
#include "labels.hpp"
#include "losses.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace car {

inline double grad_rel_error(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// f: R^n -> scalar, evaluated by rebuilding the graph; returns the max
// relative error between analytic and central-difference gradients.
inline double check_gradient(const std::function<double(const std::vector<double>&, std::vector<double>*)>& f,
                             std::vector<double> x, double h = 1e-5) {
    std::vector<double> analytic;
    f(x, &analytic);
    double worst = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double orig = x[i];
        x[i] = orig + h;
        double fp = f(x, nullptr);
        x[i] = orig - h;
        double fm = f(x, nullptr);
        x[i] = orig;
        double numeric = (fp - fm) / (2 * h);
        worst = std::max(worst, grad_rel_error(analytic[i], numeric));
    }
    return worst;
}

struct GradCheckReport {
    double max_rel_error = 0;
    std::string worst_case;

    void merge(double err, const std::string& name) {
        if (err > max_rel_error) {
            max_rel_error = err;
            worst_case = name;
        }
    }
};

namespace gradcheck_detail {

inline std::vector<double> random_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline LabelMask random_mask(Rng& rng, size_t hw, int n_class) {
    std::vector<int> labels(hw);
    for (;;) {
        size_t supervised = 0;
        for (auto& l : labels) {
            if (rng.uniform() < 0.15) {
                l = kIgnoreValue;
            } else {
                l = int(rng.index(size_t(n_class)));
                ++supervised;
            }
        }
        if (supervised > 0) return LabelMask(int(hw), 1, n_class, labels);
    }
}

}  // namespace gradcheck_detail

// One random instance per op / loss; call with >= 20 distinct seeds for the
// full sweep.
inline GradCheckReport run_gradcheck_instance(uint64_t seed) {
    using gradcheck_detail::random_mask;
    using gradcheck_detail::random_vec;
    Rng rng(seed ^ 0x67726164ULL);
    GradCheckReport report;
    using Vec = std::vector<double>;
    using T = Tensor<double>;

    auto leaf = [](Shape shape, const Vec& x) { return T::from_data(std::move(shape), x, true); };
    auto finish = [](const T& loss, const T& in, Vec* grad) {
        if (grad) {
            loss.backward();
            // a constant loss (degenerate instance) never reaches the leaf
            *grad = in.has_grad() ? in.grad() : Vec(in.size(), 0.0);
        }
        return loss.item();
    };

    {  // square + mean
        Vec x0 = random_vec(rng, 12);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({3, 4}, x);
                             return finish(mean(square(t)), t, g);
                         },
                         x0),
                     "mean(square(x))");
    }
    {  // abs, nudged away from the kink at 0
        Vec x0 = random_vec(rng, 10);
        for (auto& v : x0)
            if (std::abs(v) < 1e-3) v += v >= 0 ? 1e-3 : -1e-3;
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({10}, x);
                             return finish(sum(abs_val(t)), t, g);
                         },
                         x0),
                     "sum(abs(x))");
    }
    {  // relu_max, nudged away from the threshold
        double thr = rng.uniform(-0.5, 0.5);
        Vec x0 = random_vec(rng, 10);
        for (auto& v : x0)
            if (std::abs(v - thr) < 1e-3) v += 2e-3;
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({10}, x);
                             return finish(sum(square(relu_max(t, thr))), t, g);
                         },
                         x0),
                     "sum(square(relu_max(x,thr)))");
    }
    {  // broadcast mul + add + sub
        Vec x0 = random_vec(rng, 6);
        Vec y = random_vec(rng, 3);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({2, 3}, x);
                             T u = T::from_data({3}, y);
                             return finish(sum(mul(add(t, u), sub(t, u))), t, g);
                         },
                         x0),
                     "sum((x+y)*(x-y)) broadcast");
    }
    {  // matmul, gradient w.r.t. both operands via concatenated leaf
        size_t m = 3, k = 4, n = 2;
        Vec x0 = random_vec(rng, m * k + k * n);
        Vec proj = random_vec(rng, m * n);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({m * k + k * n}, x);
                             T a = reshape(slice_rows(reshape(t, {m * k + k * n, 1}), 0, m * k), {m, k});
                             T b = reshape(slice_rows(reshape(t, {m * k + k * n, 1}), m * k, m * k + k * n),
                                           {k, n});
                             T p = T::from_data({m, n}, proj);
                             return finish(sum(mul(matmul(a, b), p)), t, g);
                         },
                         x0),
                     "matmul");
    }
    {  // softmax Jacobian via random projection
        Vec x0 = random_vec(rng, 5, -2.0, 2.0);
        Vec proj = random_vec(rng, 5);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({1, 5}, x);
                             T p = T::from_data({1, 5}, proj);
                             return finish(sum(mul(softmax(t, 1), p)), t, g);
                         },
                         x0),
                     "softmax");
    }
    {  // log_sum_exp
        Vec x0 = random_vec(rng, 8, -2.0, 2.0);
        Vec proj = random_vec(rng, 2);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({2, 4}, x);
                             T p = T::from_data({2}, proj);
                             return finish(sum(mul(log_sum_exp(t, 1), p)), t, g);
                         },
                         x0),
                     "log_sum_exp");
    }
    {  // conv2d w.r.t. input, weight and bias together
        size_t h = 4, w = 4, ci = 2, co = 2, kk = 3;
        size_t nx = h * w * ci, nw = kk * kk * ci * co, nb = co;
        Vec x0 = random_vec(rng, nx + nw + nb);
        Vec proj = random_vec(rng, h * w * co);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T t = leaf({nx + nw + nb}, x);
                             T col = reshape(t, {nx + nw + nb, 1});
                             T xi = reshape(slice_rows(col, 0, nx), {1, h, w, ci});
                             T wt = reshape(slice_rows(col, nx, nx + nw), {kk, kk, ci, co});
                             T bt = reshape(slice_rows(col, nx + nw, nx + nw + nb), {co});
                             T p = T::from_data({1, h, w, co}, proj);
                             return finish(sum(mul(conv2d(xi, wt, bt), p)), t, g);
                         },
                         x0),
                     "conv2d");
    }

    // loss terms w.r.t. features, centers included in the graph
    size_t hw = 4 + rng.index(9);       // 4..12
    int n_class = 2 + int(rng.index(3));  // 2..4
    size_t c = 2 + rng.index(4);        // 2..5
    LabelMask mask = random_mask(rng, hw, n_class);
    Vec f0 = random_vec(rng, hw * c);
    double eps0 = 0.5, eps1 = 0.25;

    auto feature_loss = [&](const char* name, auto make_loss) {
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T feats = leaf({hw, c}, x);
                             return finish(make_loss(feats), feats, g);
                         },
                         f0),
                     name);
    };
    feature_loss("intra_c2p_loss", [&](const T& feats) {
        return intra_c2p_loss(feats, mask, centers_from_flat(feats, mask));
    });
    feature_loss("inter_c2c_loss", [&](const T& feats) {
        return inter_c2c_loss(centers_from_flat(feats, mask), eps0);
    });
    feature_loss("inter_c2p_loss/masked", [&](const T& feats) {
        return inter_c2p_loss(feats, mask, centers_from_flat(feats, mask), eps1, Replacement::masked);
    });
    feature_loss("inter_c2p_loss/literal", [&](const T& feats) {
        return inter_c2p_loss(feats, mask, centers_from_flat(feats, mask), eps1, Replacement::literal);
    });
    feature_loss("combined_total", [&](const T& feats) {
        auto cen = centers_from_flat(feats, mask);
        T zero_ce = T::scalar(0);
        auto bundle = combine(zero_ce, intra_c2p_loss(feats, mask, cen), inter_c2c_loss(cen, eps0),
                              inter_c2p_loss(feats, mask, cen, eps1, Replacement::masked),
                              std::array<double, 4>{0.0, 1.0, 1.0, 1.0});
        return bundle.total;
    });

    {  // cross entropy w.r.t. logits
        Vec l0 = random_vec(rng, hw * size_t(n_class), -2.0, 2.0);
        report.merge(check_gradient(
                         [&](const Vec& x, Vec* g) {
                             T logits = leaf({hw, size_t(n_class)}, x);
                             return finish(cross_entropy_loss(logits, mask), logits, g);
                         },
                         l0),
                     "cross_entropy_loss");
    }
    return report;
}

inline GradCheckReport run_gradcheck_suite(uint64_t seed, int instances = 20) {
    GradCheckReport report;
    for (int i = 0; i < instances; ++i) {
        auto r = run_gradcheck_instance(splitmix64(seed + uint64_t(i)));
        report.merge(r.max_rel_error, r.worst_case);
    }
    return report;
}

}  // namespace car
