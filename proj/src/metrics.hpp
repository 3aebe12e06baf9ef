#pragma once

// Confusion-matrix based intersection-over-union over non-ignored pixels.

#include <vector>

#include "model.hpp"
#include "synth.hpp"

namespace car {

struct MiouResult {
    std::vector<std::vector<long>> confusion;  // [gt][pred]
    std::vector<double> iou;                   // per class, 0 where absent
    std::vector<bool> present;                 // class appears in ground truth
    double miou = 0;                           // mean over present classes
};

MiouResult miou_from_confusion(const std::vector<std::vector<long>>& confusion);
MiouResult evaluate_miou(const ToySegNet<float>& model, const std::vector<Sample>& samples);

// Argmax class prediction for one sample.
std::vector<int> predict(const ToySegNet<float>& model, const Sample& sample);

// Normalized image tensor (1,H,W,3) for a stored sample.
Tensor<float> sample_input(const Sample& s);

}  // namespace car
