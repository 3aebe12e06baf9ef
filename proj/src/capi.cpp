#include "car/car.h"

#include <cstdio>
#include <cstring>
#include <string>

#include "config.hpp"
#include "experiment.hpp"
#include "gradcheck.hpp"

struct car_config {
    car::Config impl;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
car_status guarded(F&& fn) {
    try {
        fn();
        return CAR_OK;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return CAR_ERR_INVALID_ARGUMENT;
    } catch (const std::ios_base::failure& e) {
        g_last_error = e.what();
        return CAR_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        // file-system level failures surface as runtime_error with a path
        return std::string(e.what()).find("cannot open") != std::string::npos ? CAR_ERR_IO
                                                                              : CAR_ERR_RUNTIME;
    }
}

car_status bad_arg(const char* msg) {
    g_last_error = msg;
    return CAR_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

car_status car_config_create(car_config** out) {
    if (!out) return bad_arg("car_config_create: out is NULL");
    return guarded([&] { *out = new car_config(); });
}

void car_config_destroy(car_config* cfg) { delete cfg; }

car_status car_config_load_file(car_config* cfg, const char* path) {
    if (!cfg || !path) return bad_arg("car_config_load_file: NULL argument");
    return guarded([&] { cfg->impl.load_file(path); });
}

car_status car_config_set(car_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return bad_arg("car_config_set: NULL argument");
    return guarded([&] { cfg->impl.set(key, value); });
}

car_status car_config_get(const car_config* cfg, const char* key, char* buf, size_t buflen) {
    if (!cfg || !key || !buf || buflen == 0) return bad_arg("car_config_get: NULL argument");
    if (!cfg->impl.has(key)) return bad_arg("car_config_get: key not set");
    return guarded([&] {
        std::string v = cfg->impl.get_string(key, "");
        std::snprintf(buf, buflen, "%s", v.c_str());
    });
}

const char* car_last_error(void) { return g_last_error.c_str(); }

car_status car_generate_dataset(const car_config* cfg, const char* out_dir) {
    if (!cfg || !out_dir) return bad_arg("car_generate_dataset: NULL argument");
    return guarded([&] { car::run_generate(cfg->impl, out_dir); });
}

car_status car_train(const car_config* cfg, const char* data_dir, const char* checkpoint_path,
                     const char* loss_csv_path) {
    if (!cfg || !data_dir) return bad_arg("car_train: NULL argument");
    return guarded([&] {
        car::run_train(cfg->impl, data_dir, checkpoint_path ? checkpoint_path : "",
                       loss_csv_path ? loss_csv_path : "");
    });
}

car_status car_evaluate(const car_config* cfg, const char* checkpoint_path, const char* data_dir,
                        const char* split, const char* out_csv, double* miou) {
    if (!cfg || !checkpoint_path || !data_dir || !split || !miou)
        return bad_arg("car_evaluate: NULL argument");
    return guarded(
        [&] { *miou = car::run_eval(cfg->impl, checkpoint_path, data_dir, split, out_csv ? out_csv : ""); });
}

car_status car_gradcheck(unsigned seed, double* max_rel_error) {
    if (!max_rel_error) return bad_arg("car_gradcheck: max_rel_error is NULL");
    return guarded([&] { *max_rel_error = car::run_gradcheck_suite(seed).max_rel_error; });
}

car_status car_dependency_map(const car_config* cfg, const char* checkpoint_path, const char* data_dir,
                              const char* split, const char* out_prefix, int use_raw_dot,
                              double* mean_off_diagonal) {
    if (!cfg || !checkpoint_path || !data_dir || !split || !mean_off_diagonal)
        return bad_arg("car_dependency_map: NULL argument");
    return guarded([&] {
        *mean_off_diagonal = car::run_depmap(cfg->impl, checkpoint_path, data_dir, split,
                                             out_prefix ? out_prefix : "", use_raw_dot != 0);
    });
}

car_status car_relation_map(const car_config* cfg, const char* checkpoint_path, const char* data_dir,
                            const char* split, int sample_index, int anchor_row, int anchor_col,
                            const char* out_prefix) {
    if (!cfg || !checkpoint_path || !data_dir || !split || !out_prefix)
        return bad_arg("car_relation_map: NULL argument");
    return guarded([&] {
        car::run_pixrel(cfg->impl, checkpoint_path, data_dir, split, sample_index, anchor_row, anchor_col,
                        out_prefix);
    });
}

}  // extern "C"
