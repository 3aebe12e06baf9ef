#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "analysis.hpp"
#include "metrics.hpp"
#include "pnm.hpp"

using car::DependencyMap;
using car::Sample;
using car::ToySegNet;
namespace fs = std::filesystem;
using TF = car::Tensor<float>;

namespace {

// Two 1x1 layers whose feature map is exactly the normalized RGB input, so
// dependency/relation maps have a hand-computable oracle.
ToySegNet<float> identity_feature_model() {
    ToySegNet<float> net;
    net.cfg.in_channels = 3;
    net.cfg.trunk_channels = {3};
    net.cfg.head_kernel = 1;
    net.cfg.feature_width = 3;
    net.cfg.n_class = 2;
    std::vector<float> eye(9, 0.0f);
    eye[0] = eye[4] = eye[8] = 1.0f;
    net.layers.push_back({TF::from_data({1, 1, 3, 3}, eye), TF::zeros({3}), true});
    net.layers.push_back({TF::from_data({1, 1, 3, 2}, std::vector<float>(6, 0.1f)), TF::zeros({2}), false});
    return net;
}

Sample make_sample(int h, int w, std::vector<uint8_t> rgb, std::vector<int> labels, int n_class) {
    Sample s;
    s.height = h;
    s.width = w;
    s.image = std::move(rgb);
    s.mask = car::LabelMask(h, w, n_class, std::move(labels));
    return s;
}

double cosine3(const double a[3], const double b[3]) {
    double d = 0, na = 0, nb = 0;
    for (int j = 0; j < 3; ++j) {
        d += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    return d / (std::sqrt(na) * std::sqrt(nb));
}

fs::path temp_base(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("dependency map equals hand cosine of per-class mean colors") {
    auto net = identity_feature_model();
    // one 1x2 sample per class-pair arrangement; colors chosen non-collinear
    Sample s = make_sample(1, 4, {200, 40, 40, 120, 80, 40, 0, 0, 250, 20, 30, 240}, {0, 0, 1, 1}, 2);
    auto dep = car::compute_dependency_map(net, {s});

    double mu0[3] = {(200 + 120) / 2.0, (40 + 80) / 2.0, (40 + 40) / 2.0};
    double mu1[3] = {(0 + 20) / 2.0, (0 + 30) / 2.0, (250 + 240) / 2.0};
    double expect = cosine3(mu0, mu1);  // the /255 normalization cancels in cosine
    CHECK(dep.values[0 * 2 + 1] == doctest::Approx(expect).epsilon(1e-5));
    CHECK(dep.values[1 * 2 + 0] == doctest::Approx(expect).epsilon(1e-5));
    CHECK(dep.values[0] == doctest::Approx(1.0).epsilon(1e-6));  // cosine diagonal
    CHECK(dep.values[3] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(dep.mean_off_diagonal() == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("identical class colors give off-diagonal cosine 1, orthogonal colors 0") {
    auto net = identity_feature_model();
    Sample same = make_sample(1, 2, {100, 50, 25, 100, 50, 25}, {0, 1}, 2);
    CHECK(car::compute_dependency_map(net, {same}).mean_off_diagonal() == doctest::Approx(1.0).epsilon(1e-6));

    Sample ortho = make_sample(1, 2, {200, 0, 0, 0, 200, 0}, {0, 1}, 2);
    CHECK(car::compute_dependency_map(net, {ortho}).mean_off_diagonal() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("raw-dot map scales with magnitude while cosine does not") {
    auto net = identity_feature_model();
    Sample dim = make_sample(1, 2, {50, 0, 0, 50, 10, 0}, {0, 1}, 2);
    Sample bright = make_sample(1, 2, {250, 0, 0, 250, 50, 0}, {0, 1}, 2);
    auto cos_dim = car::compute_dependency_map(net, {dim}, false);
    auto cos_bright = car::compute_dependency_map(net, {bright}, false);
    CHECK(cos_dim.mean_off_diagonal() == doctest::Approx(cos_bright.mean_off_diagonal()).epsilon(1e-6));

    auto raw_dim = car::compute_dependency_map(net, {dim}, true);
    auto raw_bright = car::compute_dependency_map(net, {bright}, true);
    CHECK(raw_bright.mean_off_diagonal() > raw_dim.mean_off_diagonal() * 10);
}

TEST_CASE("dependency map needs at least two present classes") {
    auto net = identity_feature_model();
    Sample s = make_sample(1, 2, {10, 10, 10, 20, 20, 20}, {0, 0}, 2);
    CHECK_THROWS_AS(car::compute_dependency_map(net, {s}), std::runtime_error);
    CHECK_THROWS_AS(car::compute_dependency_map(net, {}), std::invalid_argument);
}

TEST_CASE("dependency map pools over all samples, skipping ignored pixels") {
    auto net = identity_feature_model();
    Sample a = make_sample(1, 2, {100, 0, 0, 0, 100, 0}, {0, 1}, 2);
    Sample b = make_sample(1, 2, {100, 0, 0, 9, 9, 9}, {0, car::kIgnoreValue}, 2);
    auto dep1 = car::compute_dependency_map(net, {a});
    auto dep2 = car::compute_dependency_map(net, {a, b});  // b only reinforces class 0's mean
    CHECK(dep1.values == dep2.values);
}

TEST_CASE("relation map: anchor similarity is 1, all values within [-1,1]") {
    auto net = identity_feature_model();
    Sample s = make_sample(2, 2, {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 0}, {0, 0, 1, 1}, 2);
    auto rel = car::compute_relation_map(net, s, 0, 0);
    CHECK(rel.values[0] == doctest::Approx(1.0).epsilon(1e-6));
    for (double v : rel.values) CHECK((v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9));
    // anchor (1,1) = yellow vs red at (0,0): cos = 1/sqrt(2)
    auto rel2 = car::compute_relation_map(net, s, 1, 1);
    CHECK(rel2.values[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-5));

    CHECK_THROWS_AS(car::compute_relation_map(net, s, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(car::compute_relation_map(net, s, 0, -1), std::invalid_argument);
}

TEST_CASE("heatmap extremes map to blue and red, constants to the mid color") {
    auto base = temp_base("heat_extremes");
    car::render_heatmap({0.0, 1.0, 0.25, 0.75}, 2, 2, base.string());
    auto img = car::read_pnm(base.string() + ".ppm");
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    // min -> pure blue, max -> pure red
    CHECK(int(img.pixels[0]) == 0);
    CHECK(int(img.pixels[2]) == 255);
    CHECK(int(img.pixels[3]) == 255);
    CHECK(int(img.pixels[4]) == 0);
    CHECK(int(img.pixels[5]) == 0);

    auto cbase = temp_base("heat_const");
    car::render_heatmap({3.0, 3.0, 3.0, 3.0}, 2, 2, cbase.string());
    auto cimg = car::read_pnm(cbase.string() + ".ppm");
    // all pixels identical, neither blue nor red saturated
    for (size_t i = 3; i < cimg.pixels.size(); i += 3) {
        CHECK(cimg.pixels[i] == cimg.pixels[0]);
        CHECK(cimg.pixels[i + 1] == cimg.pixels[1]);
        CHECK(cimg.pixels[i + 2] == cimg.pixels[2]);
    }
    CHECK(cimg.pixels[0] > 100);  // mid of the table, away from both ends
    CHECK(cimg.pixels[2] > 100);
    fs::remove(base.string() + ".ppm");
    fs::remove(base.string() + ".csv");
    fs::remove(cbase.string() + ".ppm");
    fs::remove(cbase.string() + ".csv");
}

TEST_CASE("heatmap CSV round-trips values at 9 significant digits") {
    auto base = temp_base("heat_csv");
    std::vector<double> vals = {-1.23456789, 0.0, 3.14159265, 2.71828183, -0.333333333, 42.4242424};
    car::render_heatmap(vals, 2, 3, base.string());

    std::ifstream f(base.string() + ".csv");
    std::string header;
    std::getline(f, header);
    CHECK(header.find("# min=") == 0);
    CHECK(header.find("max=") != std::string::npos);

    int rows = 0, cols = 0;
    auto back = car::read_heatmap_csv(base.string() + ".csv", rows, cols);
    CHECK(rows == 2);
    CHECK(cols == 3);
    REQUIRE(back.size() == vals.size());
    for (size_t i = 0; i < vals.size(); ++i)
        CHECK(back[i] == doctest::Approx(vals[i]).epsilon(1e-8));
    fs::remove(base.string() + ".ppm");
    fs::remove(base.string() + ".csv");
}

TEST_CASE("heatmap rejects bad inputs") {
    auto base = temp_base("heat_bad");
    CHECK_THROWS_AS(car::render_heatmap({1.0, 2.0}, 2, 2, base.string()), std::invalid_argument);
    CHECK_THROWS_AS(car::render_heatmap({1.0, std::nan("")}, 1, 2, base.string()), std::invalid_argument);

    auto ragged = temp_base("ragged.csv");
    {
        std::ofstream f(ragged);
        f << "1,2,3\n1,2\n";
    }
    int r = 0, c = 0;
    CHECK_THROWS_AS(car::read_heatmap_csv(ragged.string(), r, c), std::runtime_error);
    fs::remove(ragged);
}
