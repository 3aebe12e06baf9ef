#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "car/car.h"

namespace fs = std::filesystem;

namespace {

struct Cfg {
    car_config* h = nullptr;
    Cfg() { REQUIRE(car_config_create(&h) == CAR_OK); }
    ~Cfg() { car_config_destroy(h); }
    void set(const char* k, const char* v) { REQUIRE(car_config_set(h, k, v) == CAR_OK); }
};

// small, fast experiment settings shared by the pipeline tests
void tiny(Cfg& c) {
    c.set("image_size", "16");
    c.set("n_train", "6");
    c.set("n_test_common", "4");
    c.set("n_test_rare", "4");
    c.set("channels", "4");
    c.set("feature_width", "4");
    c.set("iterations", "5");
    c.set("batch_size", "2");
}

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("capi_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config set/get round-trip and unset keys") {
    Cfg c;
    c.set("iterations", "123");
    char buf[32];
    CHECK(car_config_get(c.h, "iterations", buf, sizeof(buf)) == CAR_OK);
    CHECK(std::string(buf) == "123");
    CHECK(car_config_get(c.h, "unset_key", buf, sizeof(buf)) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(std::string(car_last_error()).find("key not set") != std::string::npos);

    // truncation keeps the NUL terminator
    c.set("long", "abcdefgh");
    char tiny_buf[4];
    CHECK(car_config_get(c.h, "long", tiny_buf, sizeof(tiny_buf)) == CAR_OK);
    CHECK(std::string(tiny_buf) == "abc");
}

TEST_CASE("config file loading via the C API") {
    auto dir = temp_dir("cfgfile");
    auto path = dir / "exp.cfg";
    {
        std::ofstream f(path);
        f << "iterations = 7\nbase_lr = 0.02\n";
    }
    Cfg c;
    CHECK(car_config_load_file(c.h, path.string().c_str()) == CAR_OK);
    char buf[16];
    CHECK(car_config_get(c.h, "base_lr", buf, sizeof(buf)) == CAR_OK);
    CHECK(std::string(buf) == "0.02");

    CHECK(car_config_load_file(c.h, (dir / "missing.cfg").string().c_str()) == CAR_ERR_IO);
    fs::remove_all(dir);
}

TEST_CASE("NULL arguments return CAR_ERR_INVALID_ARGUMENT with a message") {
    CHECK(car_config_create(nullptr) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_config_set(nullptr, "k", "v") == CAR_ERR_INVALID_ARGUMENT);
    Cfg c;
    CHECK(car_config_set(c.h, nullptr, "v") == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_config_get(c.h, "k", nullptr, 8) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_generate_dataset(nullptr, "/tmp/x") == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_train(c.h, nullptr, "a", "b") == CAR_ERR_INVALID_ARGUMENT);
    double d = 0;
    CHECK(car_evaluate(c.h, "ck", "dir", "train", nullptr, nullptr) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_gradcheck(0, nullptr) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_dependency_map(c.h, "ck", "dir", "train", nullptr, 0, nullptr) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(car_relation_map(c.h, "ck", "dir", "train", 0, 0, 0, nullptr) == CAR_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(car_last_error()) > 0);
    (void)d;
}

TEST_CASE("missing files surface as CAR_ERR_IO") {
    Cfg c;
    double miou = 0;
    CHECK(car_evaluate(c.h, "/nonexistent/model.ckpt", "/nonexistent/data", "train", nullptr, &miou) ==
          CAR_ERR_IO);
    CHECK(car_train(c.h, "/nonexistent/data", "/tmp/out.ckpt", nullptr) == CAR_ERR_IO);
}

TEST_CASE("invalid settings surface as CAR_ERR_INVALID_ARGUMENT") {
    auto dir = temp_dir("badsettings");
    Cfg c;
    tiny(c);
    c.set("n_class", "3");  // the default scene needs an even class count
    CHECK(car_generate_dataset(c.h, (dir / "ds").string().c_str()) == CAR_ERR_INVALID_ARGUMENT);
    fs::remove_all(dir);
}

TEST_CASE("gradcheck through the C API stays within tolerance") {
    double err = -1;
    REQUIRE(car_gradcheck(7, &err) == CAR_OK);
    CHECK(err >= 0);
    CHECK(err <= 1e-4);
}

TEST_CASE("full pipeline: generate, train, evaluate, diagnostics") {
    auto dir = temp_dir("pipeline");
    std::string ds = (dir / "ds").string();
    std::string ckpt = (dir / "model.ckpt").string();
    std::string loss = (dir / "loss.csv").string();

    Cfg c;
    tiny(c);
    REQUIRE(car_generate_dataset(c.h, ds.c_str()) == CAR_OK);
    CHECK(fs::exists(fs::path(ds) / "index.csv"));

    REQUIRE(car_train(c.h, ds.c_str(), ckpt.c_str(), loss.c_str()) == CAR_OK);
    CHECK(fs::exists(ckpt));
    {
        std::ifstream f(loss);
        std::string header;
        std::getline(f, header);
        CHECK(header == "step,lr,ce,intra,inter_c2c,inter_c2p,total");
        int lines = 0;
        std::string row;
        while (std::getline(f, row)) ++lines;
        CHECK(lines == 5);
    }

    double miou = -1;
    std::string miou_csv = (dir / "miou.csv").string();
    REQUIRE(car_evaluate(c.h, ckpt.c_str(), ds.c_str(), "test_common", miou_csv.c_str(), &miou) == CAR_OK);
    CHECK(miou >= 0.0);
    CHECK(miou <= 1.0);
    CHECK(fs::exists(miou_csv));
    CHECK(car_evaluate(c.h, ckpt.c_str(), ds.c_str(), "bogus_split", nullptr, &miou) ==
          CAR_ERR_INVALID_ARGUMENT);

    double dep = -10;
    std::string dep_prefix = (dir / "dep").string();
    REQUIRE(car_dependency_map(c.h, ckpt.c_str(), ds.c_str(), "test_common", dep_prefix.c_str(), 0, &dep) ==
            CAR_OK);
    CHECK(dep >= -1.0);
    CHECK(dep <= 1.0);
    CHECK(fs::exists(dep_prefix + ".ppm"));
    CHECK(fs::exists(dep_prefix + ".csv"));

    std::string rel_prefix = (dir / "rel").string();
    REQUIRE(car_relation_map(c.h, ckpt.c_str(), ds.c_str(), "test_common", 0, 4, 4, rel_prefix.c_str()) ==
            CAR_OK);
    CHECK(fs::exists(rel_prefix + ".ppm"));
    CHECK(car_relation_map(c.h, ckpt.c_str(), ds.c_str(), "test_common", 999, 4, 4, rel_prefix.c_str()) !=
          CAR_OK);

    // determinism at the API level: retraining gives a byte-identical checkpoint
    std::string ckpt2 = (dir / "model2.ckpt").string();
    REQUIRE(car_train(c.h, ds.c_str(), ckpt2.c_str(), nullptr) == CAR_OK);
    std::ifstream a(ckpt, std::ios::binary), b(ckpt2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK(!sa.empty());
    fs::remove_all(dir);
}
