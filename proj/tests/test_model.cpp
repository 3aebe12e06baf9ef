#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "metrics.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "train.hpp"

using car::ModelConfig;
using car::Rng;
using car::Split;
using car::ToySegNet;
using car::TrainConfig;
namespace fs = std::filesystem;
using TD = car::Tensor<double>;

namespace {

ModelConfig tiny_model_config(uint64_t seed = 0) {
    ModelConfig mc;
    mc.trunk_channels = {6};
    mc.head_kernel = 3;
    mc.feature_width = 6;
    mc.n_class = 4;
    mc.seed = seed;
    return mc;
}

std::vector<car::Sample> tiny_data(int count = 12, int image_size = 16) {
    return car::generate(car::make_default_spec(4, image_size), count, Split::train);
}

std::string temp_file(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("forward produces H x W x n_class logits and H x W x C features") {
    auto net = ToySegNet<float>::build(tiny_model_config());
    auto [features, logits] = net.forward(car::Tensor<float>::zeros({1, 10, 7, 3}));
    CHECK(logits.shape() == car::Shape({1, 10, 7, 4}));
    CHECK(features.shape() == car::Shape({1, 10, 7, 6}));
}

TEST_CASE("same seed gives identical weights, different seed different weights") {
    auto a = ToySegNet<float>::build(tiny_model_config(7));
    auto b = ToySegNet<float>::build(tiny_model_config(7));
    auto c = ToySegNet<float>::build(tiny_model_config(8));
    REQUIRE(a.layers.size() == b.layers.size());
    bool all_same = true, any_diff_c = false;
    for (size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].w.data() != b.layers[i].w.data()) all_same = false;
        if (a.layers[i].w.data() != c.layers[i].w.data()) any_diff_c = true;
    }
    CHECK(all_same);
    CHECK(any_diff_c);
}

TEST_CASE("conv2d forward matches the direct-loop oracle on a 5x5 input") {
    Rng rng(99);
    int h = 5, w = 5, ci = 3, co = 4, k = 3;
    std::vector<double> x(size_t(h) * w * ci), wt(size_t(k) * k * ci * co), bias(co);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : wt) v = rng.uniform(-1, 1);
    for (auto& v : bias) v = rng.uniform(-1, 1);

    auto got = conv2d(TD::from_data({1, size_t(h), size_t(w), size_t(ci)}, x),
                      TD::from_data({size_t(k), size_t(k), size_t(ci), size_t(co)}, wt),
                      TD::from_data({size_t(co)}, bias));
    auto expect = oracle::conv2d(x, h, w, ci, wt, k, k, co, bias);
    REQUIRE(got.size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(got.data()[i] - expect[i]) <= 1e-10);

    // 1x1 head kernel variant
    std::vector<double> w1(size_t(ci) * co);
    for (auto& v : w1) v = rng.uniform(-1, 1);
    auto got1 = conv2d(TD::from_data({1, size_t(h), size_t(w), size_t(ci)}, x),
                       TD::from_data({1, 1, size_t(ci), size_t(co)}, w1), TD::from_data({size_t(co)}, bias));
    auto expect1 = oracle::conv2d(x, h, w, ci, w1, 1, 1, co, bias);
    for (size_t i = 0; i < expect1.size(); ++i) CHECK(std::abs(got1.data()[i] - expect1[i]) <= 1e-10);
}

TEST_CASE("poly learning-rate schedule") {
    CHECK(car::poly_lr(0, 100, 0.05, 0.9) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(car::poly_lr(100, 100, 0.05, 0.9) == 0.0);
    CHECK(car::poly_lr(50, 100, 0.01, 0.9) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-12));
    CHECK_THROWS_AS(car::poly_lr(0, 0, 0.01, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(car::poly_lr(-1, 10, 0.01, 0.9), std::invalid_argument);
}

TEST_CASE("single-iteration update equals the hand-computed SGD step") {
    auto data = tiny_data(4);
    auto mc = tiny_model_config(3);

    TrainConfig tc;
    tc.iterations = 1;
    tc.batch_size = 2;
    tc.base_lr = 0.02;
    tc.momentum = 0.9;        // first step: velocity = grad + wd * w
    tc.weight_decay = 1e-3;
    tc.loss_weights = {1, 0, 0, 0};  // plain cross-entropy
    tc.seed = 11;

    // replicate the batch draw and gradient independently
    auto ref = ToySegNet<float>::build(mc);
    Rng batch_rng(tc.seed ^ 0x747261696eULL);
    size_t hw = size_t(data[0].height) * data[0].width;
    std::vector<float> input(2 * hw * 3);
    std::vector<car::LabelMask> masks;
    for (size_t b = 0; b < 2; ++b) {
        const auto& s = data[batch_rng.index(data.size())];
        for (size_t i = 0; i < hw * 3; ++i) input[b * hw * 3 + i] = float(s.image[i]) / 255.0f;
        masks.push_back(s.mask);
    }
    auto [features, logits] =
        ref.forward(car::Tensor<float>::from_data({2, size_t(data[0].height), size_t(data[0].width), 3}, input));
    auto ce = car::cross_entropy_loss(reshape(logits, {2 * hw, 4}), car::concat_masks(masks));
    ce.backward();

    auto trained = ToySegNet<float>::build(mc);
    car::train(trained, data, tc);

    auto ref_params = ref.parameters();
    auto new_params = trained.parameters();
    REQUIRE(ref_params.size() == new_params.size());
    for (size_t i = 0; i < ref_params.size(); ++i) {
        const auto& w0 = ref_params[i].data();
        const auto& g = ref_params[i].has_grad() ? ref_params[i].grad() : std::vector<float>(w0.size(), 0.0f);
        const auto& w1 = new_params[i].data();
        for (size_t j = 0; j < w0.size(); ++j) {
            float expect = w0[j] - float(tc.base_lr) * (g[j] + float(tc.weight_decay) * w0[j]);
            CHECK(std::abs(w1[j] - expect) <= 1e-6f);
        }
    }
}

TEST_CASE("zero CAR weights reduce training to the cross-entropy baseline") {
    auto data = tiny_data(4);
    auto net = ToySegNet<float>::build(tiny_model_config(1));
    TrainConfig tc;
    tc.iterations = 3;
    tc.batch_size = 2;
    tc.loss_weights = {1, 0, 0, 0};
    tc.seed = 5;
    auto log = car::train(net, data, tc);
    for (const auto& r : log) {
        CHECK(r.intra == 0.0);
        CHECK(r.inter_c2c == 0.0);
        CHECK(r.inter_c2p == 0.0);
        CHECK(r.total == doctest::Approx(r.ce).epsilon(1e-12));
    }
}

TEST_CASE("identical config and seed give bitwise identical loss logs and CSVs") {
    auto data = tiny_data(6);
    TrainConfig tc;
    tc.iterations = 5;
    tc.batch_size = 2;
    tc.seed = 9;

    auto run = [&](const std::string& csv) {
        auto net = ToySegNet<float>::build(tiny_model_config(9));
        auto log = car::train(net, data, tc);
        car::write_loss_csv(csv, log);
        return log;
    };
    std::string csv_a = temp_file("loss_a.csv"), csv_b = temp_file("loss_b.csv");
    auto a = run(csv_a), b = run(csv_b);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].total == b[i].total);  // bitwise equality, no tolerance
        CHECK(a[i].ce == b[i].ce);
        CHECK(a[i].intra == b[i].intra);
        CHECK(a[i].inter_c2c == b[i].inter_c2c);
        CHECK(a[i].inter_c2p == b[i].inter_c2p);
    }
    std::ifstream fa(csv_a, std::ios::binary), fb(csv_b, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
    CHECK(sa.substr(0, sa.find('\n')) == "step,lr,ce,intra,inter_c2c,inter_c2p,total");
    fs::remove(csv_a);
    fs::remove(csv_b);
}

TEST_CASE("checkpoint round-trip restores config and weights exactly") {
    auto mc = tiny_model_config(13);
    mc.head_kernel = 1;
    mc.trunk_channels = {5, 7};
    auto net = ToySegNet<float>::build(mc);
    std::string path = temp_file("model.ckpt");
    car::save_checkpoint(path, net);
    auto back = car::load_checkpoint(path);

    CHECK(back.cfg.in_channels == mc.in_channels);
    CHECK(back.cfg.trunk_channels == mc.trunk_channels);
    CHECK(back.cfg.head_kernel == mc.head_kernel);
    CHECK(back.cfg.feature_width == mc.feature_width);
    CHECK(back.cfg.n_class == mc.n_class);
    REQUIRE(back.layers.size() == net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        CHECK(back.layers[i].w.data() == net.layers[i].w.data());
        CHECK(back.layers[i].b.data() == net.layers[i].b.data());
    }
    fs::remove(path);
}

TEST_CASE("loading a corrupted checkpoint is an error") {
    std::string path = temp_file("bad.ckpt");
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
    }
    CHECK_THROWS_AS(car::load_checkpoint(path), std::runtime_error);
    CHECK_THROWS_AS(car::load_checkpoint(temp_file("missing.ckpt")), std::runtime_error);
    fs::remove(path);
}

TEST_CASE("mIOU hand cases") {
    // perfect prediction
    auto perfect = car::miou_from_confusion({{10, 0}, {0, 6}});
    CHECK(perfect.miou == doctest::Approx(1.0));

    // constant class 0, GT half 0 / half 1 -> IOU (0.5, 0), mIOU 0.25
    auto constant = car::miou_from_confusion({{8, 0}, {8, 0}});
    CHECK(constant.iou[0] == doctest::Approx(0.5));
    CHECK(constant.iou[1] == doctest::Approx(0.0));
    CHECK(constant.miou == doctest::Approx(0.25));

    // absent class is excluded from the mean
    auto absent = car::miou_from_confusion({{4, 0, 0}, {0, 4, 0}, {0, 0, 0}});
    CHECK(absent.miou == doctest::Approx(1.0));
    CHECK_FALSE(absent.present[2]);
}

TEST_CASE("mIOU matches the loop confusion-matrix oracle on random instances") {
    Rng rng(123);
    for (int t = 0; t < 20; ++t) {
        int n_class = 2 + int(rng.index(4));
        size_t n = 50 + rng.index(100);
        std::vector<int> gt(n), pred(n);
        for (size_t i = 0; i < n; ++i) {
            gt[i] = rng.uniform() < 0.1 ? car::kIgnoreValue : int(rng.index(size_t(n_class)));
            pred[i] = int(rng.index(size_t(n_class)));
        }
        std::vector<std::vector<long>> cm(n_class, std::vector<long>(n_class, 0));
        for (size_t i = 0; i < n; ++i)
            if (gt[i] != car::kIgnoreValue) ++cm[gt[i]][pred[i]];
        CHECK(car::miou_from_confusion(cm).miou == doctest::Approx(oracle::miou(gt, pred, n_class)).epsilon(1e-12));
    }
}

TEST_CASE("training decreases the total loss on the synthetic set") {
    auto data = tiny_data(16);
    auto mc = tiny_model_config(2);
    mc.trunk_channels = {8, 8};
    mc.feature_width = 8;
    auto net = ToySegNet<float>::build(mc);
    TrainConfig tc;
    tc.iterations = 300;
    tc.batch_size = 4;
    tc.seed = 2;
    auto log = car::train(net, data, tc);
    auto window_mean = [&](size_t from, size_t to) {
        double s = 0;
        for (size_t i = from; i < to; ++i) s += log[i].total;
        return s / double(to - from);
    };
    CHECK(window_mean(250, 300) < window_mean(0, 50));
    // the trained model should beat constant-prediction mIOU on its own data
    auto result = car::evaluate_miou(net, data);
    CHECK(result.miou > 0.25);
}
