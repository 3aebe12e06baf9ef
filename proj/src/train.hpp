#pragma once

// Deterministic SGD trainer with a poly learning-rate schedule; the CAR
// losses attach to the post-head feature map and are dropped at inference.

#include <array>
#include <string>
#include <vector>

#include "losses.hpp"
#include "model.hpp"
#include "synth.hpp"

namespace car {

struct TrainConfig {
    int iterations = 500;
    int batch_size = 8;
    double base_lr = 0.02;
    double poly_power = 0.9;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    CarThresholds thresholds;
    std::array<double, 4> loss_weights{1, 1, 1, 1};  // ce, intra, inter_c2c, inter_c2p
    CenterScope center_scope = CenterScope::moving;
    double moving_decay = 0.9;
    bool detach_centers = false;
    Replacement replacement = Replacement::masked;
    uint64_t seed = 0;

    void validate() const {
        if (iterations < 1 || batch_size < 1) throw std::invalid_argument("TrainConfig: invalid sizes");
        if (base_lr < 0 || weight_decay < 0 || momentum < 0)
            throw std::invalid_argument("TrainConfig: rates must be >= 0");
        thresholds.validate();
        for (double w : loss_weights)
            if (w < 0) throw std::invalid_argument("TrainConfig: negative loss weight");
    }
};

// base * (1 - step/total)^power
double poly_lr(int step, int total, double base, double power);

struct TrainLogRow {
    int step;
    double lr, ce, intra, inter_c2c, inter_c2p, total;
};

std::vector<TrainLogRow> train(ToySegNet<float>& model, const std::vector<Sample>& data,
                               const TrainConfig& tc);

void write_loss_csv(const std::string& path, const std::vector<TrainLogRow>& rows);

}  // namespace car
