#include "experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace car {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

int dataset_n_class(const Config& cfg, const std::string& data_dir) {
    Config meta;
    meta.load_file(data_dir + "/meta.txt");
    return meta.get_int("n_class", cfg.get_int("n_class", 4));
}

}  // namespace

SceneSpec scene_spec_from_config(const Config& cfg) {
    return make_default_spec(cfg.get_int("n_class", 4), cfg.get_int("image_size", 32),
                             cfg.get_double("bias", 0.99), float(cfg.get_double("noise_std", 0.04)),
                             cfg.get_u64("data_seed", 1234));
}

ModelConfig model_config_from_config(const Config& cfg) {
    ModelConfig mc;
    mc.trunk_channels = parse_int_list(cfg.get_string("channels", "24,24,24"));
    mc.head_kernel = cfg.get_int("head_kernel", 3);
    mc.feature_width = cfg.get_int("feature_width", 24);
    mc.n_class = cfg.get_int("n_class", 4);
    mc.seed = cfg.get_u64("seed", 0);
    mc.validate();
    return mc;
}

TrainConfig train_config_from_config(const Config& cfg) {
    TrainConfig tc;
    tc.iterations = cfg.get_int("iterations", 500);
    tc.batch_size = cfg.get_int("batch_size", 8);
    tc.base_lr = cfg.get_double("base_lr", 0.02);
    tc.poly_power = cfg.get_double("poly_power", 0.9);
    tc.weight_decay = cfg.get_double("weight_decay", 1e-4);
    tc.momentum = cfg.get_double("momentum", 0.9);
    tc.thresholds.eps0 = cfg.get_double("eps0", 0.5);
    tc.thresholds.eps1 = cfg.get_double("eps1", 0.25);
    tc.loss_weights = {cfg.get_double("w_ce", 1.0), cfg.get_double("w_intra", 1.0),
                       cfg.get_double("w_inter_c2c", 1.0), cfg.get_double("w_inter_c2p", 1.0)};
    std::string scope = cfg.get_string("center_scope", "moving");
    if (scope == "batch") tc.center_scope = CenterScope::batch;
    else if (scope == "image") tc.center_scope = CenterScope::image;
    else if (scope == "moving") tc.center_scope = CenterScope::moving;
    else throw std::runtime_error("unknown center_scope: " + scope);
    tc.moving_decay = cfg.get_double("moving_decay", 0.9);
    tc.detach_centers = cfg.get_bool("detach_centers", false);
    std::string repl = cfg.get_string("replacement", "masked");
    if (repl == "masked") tc.replacement = Replacement::masked;
    else if (repl == "literal") tc.replacement = Replacement::literal;
    else throw std::runtime_error("unknown replacement mode: " + repl);
    tc.seed = cfg.get_u64("seed", 0);
    tc.validate();
    return tc;
}

void run_generate(const Config& cfg, const std::string& out_dir) {
    SceneSpec spec = scene_spec_from_config(cfg);
    write_dataset(spec, out_dir, cfg.get_int("n_train", 400), cfg.get_int("n_test_common", 100),
                  cfg.get_int("n_test_rare", 100));
}

void run_train(const Config& cfg, const std::string& data_dir, const std::string& checkpoint_path,
               const std::string& loss_csv_path) {
    int n_class = dataset_n_class(cfg, data_dir);
    auto data = load_split(data_dir, Split::train, n_class);
    Config merged = cfg;
    merged.set("n_class", std::to_string(n_class));
    ToySegNet<float> model = ToySegNet<float>::build(model_config_from_config(merged));
    auto log = train(model, data, train_config_from_config(merged));
    if (!loss_csv_path.empty()) write_loss_csv(loss_csv_path, log);
    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, model);
}

double run_eval(const Config& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& split, const std::string& out_csv) {
    ToySegNet<float> model = load_checkpoint(checkpoint_path);
    auto samples = load_split(data_dir, split_from_string(split), model.cfg.n_class);
    if (samples.empty()) throw std::runtime_error("no samples in split " + split);
    (void)cfg;
    MiouResult r = evaluate_miou(model, samples);
    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        if (!out) throw std::runtime_error("cannot open " + out_csv + " for writing");
        out << "class,iou,present\n";
        char buf[64];
        for (size_t k = 0; k < r.iou.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%zu,%.9g,%d\n", k, r.iou[k], r.present[k] ? 1 : 0);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "miou,%.9g,1\n", r.miou);
        out << buf;
    }
    return r.miou;
}

double run_depmap(const Config& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                  const std::string& split, const std::string& out_prefix, bool raw_dot) {
    (void)cfg;
    ToySegNet<float> model = load_checkpoint(checkpoint_path);
    auto samples = load_split(data_dir, split_from_string(split), model.cfg.n_class);
    if (samples.empty()) throw std::runtime_error("no samples in split " + split);
    DependencyMap dep = compute_dependency_map(model, samples, raw_dot);
    if (!out_prefix.empty()) render_heatmap(dep.values, dep.n_class, dep.n_class, out_prefix);
    return dep.mean_off_diagonal();
}

void run_pixrel(const Config& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& split, int sample_index, int anchor_row, int anchor_col,
                const std::string& out_prefix) {
    (void)cfg;
    ToySegNet<float> model = load_checkpoint(checkpoint_path);
    auto samples = load_split(data_dir, split_from_string(split), model.cfg.n_class);
    if (sample_index < 0 || sample_index >= int(samples.size()))
        throw std::runtime_error("sample index out of range");
    RelationMap rel = compute_relation_map(model, samples[sample_index], anchor_row, anchor_col);
    render_heatmap(rel.values, rel.height, rel.width, out_prefix);
}

}  // namespace car
