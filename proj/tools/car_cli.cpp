// Experiment CLI. Links only the C API in car/car.h.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "car/car.h"

namespace {

const char* kUsage = R"(usage: car <subcommand> [options]

subcommands:
  gen-data  --out DIR                         generate a synthetic dataset
  train     --data DIR --checkpoint PATH --log PATH
  eval      --checkpoint PATH --data DIR --split SPLIT [--out CSV]
  gradcheck [--seed N]                        finite-difference suite, exit 0 iff max rel err <= 1e-4
  depmap    --checkpoint PATH --data DIR --split SPLIT --out PREFIX [--raw]
  pixrel    --checkpoint PATH --data DIR --split SPLIT --sample I --row R --col C --out PREFIX
  compare   --data DIR --out DIR --seeds 0,1,2  baseline vs +CAR across seeds

common options:
  --config FILE    flat `key = value` config file
  --KEY VALUE      override any config key (e.g. --iterations 300)
)";

struct Args {
    std::string subcommand;
    std::map<std::string, std::string> flags;  // --name value
    bool raw = false;
};

int usage_error(const std::string& msg) {
    if (!msg.empty()) std::fprintf(stderr, "error: %s\n", msg.c_str());
    std::fputs(kUsage, stderr);
    return 2;
}

bool parse_args(int argc, char** argv, Args& out) {
    if (argc < 2) return false;
    out.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string a = argv[i];
        if (a.rfind("--", 0) != 0) return false;
        std::string key = a.substr(2);
        if (key == "raw") {
            out.raw = true;
            continue;
        }
        if (i + 1 >= argc) return false;
        out.flags[key] = argv[++i];
    }
    return true;
}

// Keys consumed by the CLI itself; everything else is a config override.
const char* kCliKeys[] = {"config", "out",    "data", "checkpoint", "log", "split",
                          "sample", "row",    "col",  "seeds"};

bool is_cli_key(const std::string& k) {
    for (const char* c : kCliKeys)
        if (k == c) return true;
    return false;
}

struct ConfigHandle {
    car_config* cfg = nullptr;
    ~ConfigHandle() { car_config_destroy(cfg); }
};

int fail(const char* what) {
    std::fprintf(stderr, "error: %s: %s\n", what, car_last_error());
    return 1;
}

bool build_config(const Args& args, ConfigHandle& h) {
    if (car_config_create(&h.cfg) != CAR_OK) return false;
    auto it = args.flags.find("config");
    if (it != args.flags.end() && car_config_load_file(h.cfg, it->second.c_str()) != CAR_OK) return false;
    for (const auto& [k, v] : args.flags)
        if (!is_cli_key(k) && car_config_set(h.cfg, k.c_str(), v.c_str()) != CAR_OK) return false;
    return true;
}

std::string need(const Args& args, const char* key, bool& ok) {
    auto it = args.flags.find(key);
    if (it == args.flags.end()) {
        ok = false;
        return "";
    }
    return it->second;
}

std::vector<unsigned> parse_seeds(const std::string& s) {
    std::vector<unsigned> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(unsigned(std::stoul(s.substr(pos, comma - pos))));
        pos = comma + 1;
    }
    return out;
}

int cmd_compare(const Args& args) {
    bool ok = true;
    std::string data = need(args, "data", ok);
    std::string out_dir = need(args, "out", ok);
    if (!ok) return usage_error("compare requires --data and --out");
    std::vector<unsigned> seeds = {0, 1, 2};
    if (args.flags.count("seeds")) seeds = parse_seeds(args.flags.at("seeds"));

    ConfigHandle base;
    if (!build_config(args, base)) return fail("config");
    std::filesystem::create_directories(out_dir);
    if (!std::filesystem::exists(std::filesystem::path(data) / "index.csv") &&
        car_generate_dataset(base.cfg, data.c_str()) != CAR_OK)
        return fail("gen-data");

    struct Row {
        unsigned seed;
        double base_miou, car_miou, base_dep, car_dep;
    };
    std::vector<Row> rows;
    for (unsigned seed : seeds) {
        Row row{seed, 0, 0, 0, 0};
        for (int variant = 0; variant < 2; ++variant) {
            ConfigHandle cfg;
            if (!build_config(args, cfg)) return fail("config");
            std::string seed_s = std::to_string(seed);
            car_config_set(cfg.cfg, "seed", seed_s.c_str());
            if (variant == 0)
                for (const char* k : {"w_intra", "w_inter_c2c", "w_inter_c2p"})
                    car_config_set(cfg.cfg, k, "0");
            std::string tag = (variant == 0 ? "baseline" : "car") + std::string("_s") + seed_s;
            std::string ckpt = out_dir + "/" + tag + ".carm";
            std::string log = out_dir + "/" + tag + "_loss.csv";
            if (car_train(cfg.cfg, data.c_str(), ckpt.c_str(), log.c_str()) != CAR_OK) return fail("train");
            double miou = 0, dep = 0;
            if (car_evaluate(cfg.cfg, ckpt.c_str(), data.c_str(), "test_rare",
                             (out_dir + "/" + tag + "_miou.csv").c_str(), &miou) != CAR_OK)
                return fail("eval");
            if (car_dependency_map(cfg.cfg, ckpt.c_str(), data.c_str(), "test_common",
                                   (out_dir + "/" + tag + "_depmap").c_str(), 0, &dep) != CAR_OK)
                return fail("depmap");
            (variant == 0 ? row.base_miou : row.car_miou) = miou;
            (variant == 0 ? row.base_dep : row.car_dep) = dep;
        }
        rows.push_back(row);
        std::printf("seed %u: baseline mIOU %.4f  +CAR mIOU %.4f  baseline dep %.4f  +CAR dep %.4f\n",
                    row.seed, row.base_miou, row.car_miou, row.base_dep, row.car_dep);
        std::fflush(stdout);
    }

    double mb = 0, mc = 0;
    std::ofstream csv(out_dir + "/compare.csv");
    csv << "seed,baseline_miou,car_miou,baseline_dep,car_dep\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%u,%.9g,%.9g,%.9g,%.9g\n", r.seed, r.base_miou, r.car_miou,
                      r.base_dep, r.car_dep);
        csv << buf;
        mb += r.base_miou;
        mc += r.car_miou;
    }
    mb /= double(rows.size());
    mc /= double(rows.size());
    std::printf("mean: baseline mIOU %.4f  +CAR mIOU %.4f  (improvement %+.4f)\n", mb, mc, mc - mb);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Args args;
    if (!parse_args(argc, argv, args)) return usage_error("");
    bool ok = true;

    if (args.subcommand == "gen-data") {
        std::string out = need(args, "out", ok);
        if (!ok) return usage_error("gen-data requires --out");
        ConfigHandle cfg;
        if (!build_config(args, cfg)) return fail("config");
        if (car_generate_dataset(cfg.cfg, out.c_str()) != CAR_OK) return fail("gen-data");
        std::printf("dataset written to %s\n", out.c_str());
        return 0;
    }
    if (args.subcommand == "train") {
        std::string data = need(args, "data", ok);
        std::string ckpt = need(args, "checkpoint", ok);
        if (!ok) return usage_error("train requires --data and --checkpoint");
        std::string log = args.flags.count("log") ? args.flags.at("log") : "";
        ConfigHandle cfg;
        if (!build_config(args, cfg)) return fail("config");
        if (car_train(cfg.cfg, data.c_str(), ckpt.c_str(), log.empty() ? nullptr : log.c_str()) != CAR_OK)
            return fail("train");
        std::printf("checkpoint written to %s\n", ckpt.c_str());
        return 0;
    }
    if (args.subcommand == "eval") {
        std::string ckpt = need(args, "checkpoint", ok);
        std::string data = need(args, "data", ok);
        std::string split = need(args, "split", ok);
        if (!ok) return usage_error("eval requires --checkpoint, --data and --split");
        std::string out = args.flags.count("out") ? args.flags.at("out") : "";
        ConfigHandle cfg;
        if (!build_config(args, cfg)) return fail("config");
        double miou = 0;
        if (car_evaluate(cfg.cfg, ckpt.c_str(), data.c_str(), split.c_str(),
                         out.empty() ? nullptr : out.c_str(), &miou) != CAR_OK)
            return fail("eval");
        std::printf("miou %.6f\n", miou);
        return 0;
    }
    if (args.subcommand == "gradcheck") {
        unsigned seed = args.flags.count("seed") ? unsigned(std::stoul(args.flags.at("seed"))) : 0;
        double err = 0;
        if (car_gradcheck(seed, &err) != CAR_OK) return fail("gradcheck");
        std::printf("max relative error %.3g\n", err);
        return err <= 1e-4 ? 0 : 1;
    }
    if (args.subcommand == "depmap") {
        std::string ckpt = need(args, "checkpoint", ok);
        std::string data = need(args, "data", ok);
        std::string split = need(args, "split", ok);
        std::string out = need(args, "out", ok);
        if (!ok) return usage_error("depmap requires --checkpoint, --data, --split and --out");
        ConfigHandle cfg;
        if (!build_config(args, cfg)) return fail("config");
        double dep = 0;
        if (car_dependency_map(cfg.cfg, ckpt.c_str(), data.c_str(), split.c_str(), out.c_str(),
                               args.raw ? 1 : 0, &dep) != CAR_OK)
            return fail("depmap");
        std::printf("mean off-diagonal dependency %.6f\n", dep);
        return 0;
    }
    if (args.subcommand == "pixrel") {
        std::string ckpt = need(args, "checkpoint", ok);
        std::string data = need(args, "data", ok);
        std::string split = need(args, "split", ok);
        std::string out = need(args, "out", ok);
        if (!ok || !args.flags.count("sample") || !args.flags.count("row") || !args.flags.count("col"))
            return usage_error("pixrel requires --checkpoint, --data, --split, --sample, --row, --col, --out");
        ConfigHandle cfg;
        if (!build_config(args, cfg)) return fail("config");
        if (car_relation_map(cfg.cfg, ckpt.c_str(), data.c_str(), split.c_str(),
                             std::stoi(args.flags.at("sample")), std::stoi(args.flags.at("row")),
                             std::stoi(args.flags.at("col")), out.c_str()) != CAR_OK)
            return fail("pixrel");
        std::printf("relation map written to %s.ppm\n", out.c_str());
        return 0;
    }
    if (args.subcommand == "compare") return cmd_compare(args);
    return usage_error("unknown subcommand: " + args.subcommand);
}
