#pragma once

// Config-driven entry points behind the C API: dataset generation, training,
// evaluation, gradient checking and the diagnostic maps.

#include <string>

#include "analysis.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "synth.hpp"
#include "train.hpp"

namespace car {

SceneSpec scene_spec_from_config(const Config& cfg);
ModelConfig model_config_from_config(const Config& cfg);
TrainConfig train_config_from_config(const Config& cfg);

void run_generate(const Config& cfg, const std::string& out_dir);
void run_train(const Config& cfg, const std::string& data_dir, const std::string& checkpoint_path,
               const std::string& loss_csv_path);
// returns mIOU; writes per-class IOU CSV when out_csv is non-empty
double run_eval(const Config& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& split, const std::string& out_csv);
// returns mean off-diagonal dependency; writes <out_prefix>.ppm/.csv
double run_depmap(const Config& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                  const std::string& split, const std::string& out_prefix, bool raw_dot);
void run_pixrel(const Config& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& split, int sample_index, int anchor_row, int anchor_col,
                const std::string& out_prefix);

}  // namespace car
