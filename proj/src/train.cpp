#include "train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "metrics.hpp"
#include "rng.hpp"

namespace car {

double poly_lr(int step, int total, double base, double power) {
    if (total <= 0) throw std::invalid_argument("poly_lr: total must be > 0");
    if (step < 0 || step > total) throw std::invalid_argument("poly_lr: step out of range");
    return base * std::pow(1.0 - double(step) / double(total), power);
}

namespace {

struct CarTerms {
    Tensor<float> intra, c2c, c2p;
};

// CAR losses for one batch at the configured center scope.
CarTerms car_losses(const Tensor<float>& x_flat, const std::vector<LabelMask>& masks,
                    const LabelMask& joint, const TrainConfig& tc, ClassCenters<float>& moving_state,
                    bool& moving_init) {
    float eps0 = float(tc.thresholds.eps0), eps1 = float(tc.thresholds.eps1);
    auto with = [&](const ClassCenters<float>& c, const Tensor<float>& x, const LabelMask& m) {
        ClassCenters<float> used = tc.detach_centers ? detach_centers(c) : c;
        return CarTerms{intra_c2p_loss(x, m, used), inter_c2c_loss(used, eps0),
                        inter_c2p_loss(x, m, used, eps1, tc.replacement)};
    };
    switch (tc.center_scope) {
        case CenterScope::batch:
            return with(extract_centers_batch(x_flat, masks), x_flat, joint);
        case CenterScope::image: {
            size_t hw = masks[0].pixels();
            Tensor<float> intra = Tensor<float>::scalar(0), c2c = Tensor<float>::scalar(0),
                          c2p = Tensor<float>::scalar(0);
            auto per_image = extract_centers_image(x_flat, masks);
            int counted = 0;
            for (size_t b = 0; b < masks.size(); ++b) {
                if (masks[b].count_supervised() == 0) continue;
                auto t = with(per_image[b], slice_rows(x_flat, b * hw, (b + 1) * hw), masks[b]);
                intra = add(intra, t.intra);
                c2c = add(c2c, t.c2c);
                c2p = add(c2p, t.c2p);
                ++counted;
            }
            float inv = 1.0f / float(counted);
            return {scale(intra, inv), scale(c2c, inv), scale(c2p, inv)};
        }
        case CenterScope::moving: {
            auto fresh = detach_centers(extract_centers_batch(x_flat, masks));
            if (!moving_init) {
                moving_state = fresh;
                moving_init = true;
            } else {
                moving_state = update_moving_centers(moving_state, fresh, float(tc.moving_decay));
            }
            return with(detach_centers(moving_state), x_flat, joint);
        }
    }
    throw std::logic_error("bad center scope");
}

}  // namespace

std::vector<TrainLogRow> train(ToySegNet<float>& model, const std::vector<Sample>& data,
                               const TrainConfig& tc) {
    tc.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    int H = data[0].height, W = data[0].width;
    size_t hw = size_t(H) * size_t(W);
    size_t B = size_t(tc.batch_size);

    auto params = model.parameters();
    std::vector<std::vector<float>> velocity(params.size());
    for (size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].size(), 0.0f);

    Rng batch_rng(tc.seed ^ 0x747261696eULL);
    ClassCenters<float> moving_state;
    bool moving_init = false;
    bool need_car = tc.loss_weights[1] > 0 || tc.loss_weights[2] > 0 || tc.loss_weights[3] > 0;

    std::vector<TrainLogRow> log;
    log.reserve(tc.iterations);
    for (int step = 0; step < tc.iterations; ++step) {
        // assemble batch; the draw sequence is identical for every loss
        // configuration at the same seed
        std::vector<float> input(B * hw * 3);
        std::vector<LabelMask> masks;
        masks.reserve(B);
        for (size_t b = 0; b < B; ++b) {
            const Sample& s = data[batch_rng.index(data.size())];
            for (size_t i = 0; i < hw * 3; ++i) input[b * hw * 3 + i] = float(s.image[i]) / 255.0f;
            masks.push_back(s.mask);
        }
        Tensor<float> x = Tensor<float>::from_data({B, size_t(H), size_t(W), 3}, std::move(input));
        auto [features, logits] = model.forward(x);
        Tensor<float> x_flat = reshape(features, {B * hw, size_t(model.cfg.feature_width)});
        Tensor<float> logits_flat = reshape(logits, {B * hw, size_t(model.cfg.n_class)});
        LabelMask joint = concat_masks(masks);

        Tensor<float> ce = cross_entropy_loss(logits_flat, joint);
        CarTerms terms{Tensor<float>::scalar(0), Tensor<float>::scalar(0), Tensor<float>::scalar(0)};
        if (need_car) terms = car_losses(x_flat, masks, joint, tc, moving_state, moving_init);
        std::array<float, 4> w{float(tc.loss_weights[0]), float(tc.loss_weights[1]),
                               float(tc.loss_weights[2]), float(tc.loss_weights[3])};
        auto bundle = combine(ce, terms.intra, terms.c2c, terms.c2p, w);

        if (!std::isfinite(bundle.total.item())) {
            const char* op = first_nonfinite_op(bundle.total);
            throw std::runtime_error("train: NaN loss at step " + std::to_string(step) +
                                     ", first non-finite tensor: " + (op ? op : "unknown"));
        }
        bundle.total.backward();

        double lr = poly_lr(step, tc.iterations, tc.base_lr, tc.poly_power);
        for (size_t i = 0; i < params.size(); ++i) {
            if (!params[i].has_grad()) continue;
            auto& pv = params[i].data();
            const auto& g = params[i].grad();
            auto& v = velocity[i];
            for (size_t j = 0; j < pv.size(); ++j) {
                v[j] = float(tc.momentum) * v[j] + g[j] + float(tc.weight_decay) * pv[j];
                pv[j] -= float(lr) * v[j];
            }
            params[i].zero_grad();
        }

        log.push_back({step, lr, double(bundle.ce.item()), double(bundle.intra_c2p.item()),
                       double(bundle.inter_c2c.item()), double(bundle.inter_c2p.item()),
                       double(bundle.total.item())});
    }
    return log;
}

void write_loss_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "step,lr,ce,intra,inter_c2c,inter_c2p,total\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.lr, r.ce, r.intra,
                      r.inter_c2c, r.inter_c2p, r.total);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace car
