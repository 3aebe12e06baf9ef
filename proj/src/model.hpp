#pragma once

// Small fully-convolutional segmentation model: a 3x3 conv trunk, a head
// convolution (kernel 1 or 3) producing the regularized feature map X, and a
// 1x1 classifier to per-class logits.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace car {

struct ModelConfig {
    int in_channels = 3;
    std::vector<int> trunk_channels{16, 16, 16};
    int head_kernel = 3;     // 1 or 3
    int feature_width = 16;  // C fed to the regularizers
    int n_class = 4;
    uint64_t seed = 0;

    void validate() const {
        if (head_kernel != 1 && head_kernel != 3)
            throw std::invalid_argument("ModelConfig: head_kernel must be 1 or 3");
        if (trunk_channels.empty() || n_class < 2 || feature_width < 1)
            throw std::invalid_argument("ModelConfig: invalid sizes");
    }
};

template <typename Real>
struct ToySegNet {
    ModelConfig cfg;
    struct Layer {
        Tensor<Real> w, b;
        bool relu = true;
    };
    std::vector<Layer> layers;  // trunk..., head, classifier

    static ToySegNet build(const ModelConfig& cfg) {
        cfg.validate();
        ToySegNet net;
        net.cfg = cfg;
        Rng rng(cfg.seed ^ 0x6d6f64656cULL);
        auto add_layer = [&](int k, int cin, int cout, bool relu) {
            // seeded uniform fan-in init
            Real a = Real(std::sqrt(1.0 / (double(k) * k * cin)));
            std::vector<Real> w(size_t(k) * k * cin * cout);
            for (auto& v : w) v = Real(rng.uniform(-a, a));
            net.layers.push_back({Tensor<Real>::from_data({size_t(k), size_t(k), size_t(cin), size_t(cout)},
                                                          std::move(w), true),
                                  Tensor<Real>::zeros({size_t(cout)}, true), relu});
        };
        int cin = cfg.in_channels;
        for (int c : cfg.trunk_channels) {
            add_layer(3, cin, c, true);
            cin = c;
        }
        add_layer(cfg.head_kernel, cin, cfg.feature_width, true);
        add_layer(1, cfg.feature_width, cfg.n_class, false);
        return net;
    }

    // input: (B,H,W,in_channels) -> {features (B,H,W,C), logits (B,H,W,n_class)}
    std::pair<Tensor<Real>, Tensor<Real>> forward(const Tensor<Real>& x) const {
        Tensor<Real> h = x;
        Tensor<Real> features;
        for (size_t i = 0; i < layers.size(); ++i) {
            h = conv2d(h, layers[i].w, layers[i].b);
            if (layers[i].relu) h = relu(h);
            if (i + 2 == layers.size()) features = h;  // post-head feature map
        }
        return {features, h};
    }

    std::vector<Tensor<Real>> parameters() {
        std::vector<Tensor<Real>> p;
        for (auto& l : layers) {
            p.push_back(l.w);
            p.push_back(l.b);
        }
        return p;
    }
};

// Checkpoint format: magic "CARM", one version byte, a shape table, then all
// parameter payloads as little-endian 32-bit floats in declaration order.
void save_checkpoint(const std::string& path, ToySegNet<float>& net);
ToySegNet<float> load_checkpoint(const std::string& path);

}  // namespace car
