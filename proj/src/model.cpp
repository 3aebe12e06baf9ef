#include "model.hpp"

#include <cstring>
#include <fstream>

namespace car {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'R', 'M'};
constexpr uint8_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void write_f32(std::ostream& out, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(out, u);
}

float read_f32(std::istream& in, const std::string& path) {
    uint32_t u = read_u32(in, path);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, ToySegNet<float>& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    out.put(char(kVersion));
    auto params = net.parameters();
    write_u32(out, uint32_t(params.size()));
    for (auto& p : params) {
        write_u32(out, uint32_t(p.shape().size()));
        for (size_t d : p.shape()) write_u32(out, uint32_t(d));
    }
    for (auto& p : params)
        for (float v : p.data()) write_f32(out, v);
    if (!out) throw std::runtime_error("write failed for " + path);
}

ToySegNet<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("bad checkpoint magic: " + path);
    int version = in.get();
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version in " + path);
    uint32_t n = read_u32(in, path);
    if (n < 4 || n % 2 != 0) throw std::runtime_error("malformed checkpoint shape table: " + path);
    std::vector<Shape> shapes(n);
    for (auto& s : shapes) {
        uint32_t nd = read_u32(in, path);
        if (nd > 4) throw std::runtime_error("malformed checkpoint shape table: " + path);
        s.resize(nd);
        for (auto& d : s) d = read_u32(in, path);
    }

    // layer structure is recoverable from the shape table: tensors alternate
    // weight (rank 4) and bias (rank 1)
    ModelConfig cfg;
    size_t n_layers = n / 2;
    cfg.in_channels = int(shapes[0][2]);
    cfg.trunk_channels.clear();
    for (size_t l = 0; l + 2 < n_layers; ++l) cfg.trunk_channels.push_back(int(shapes[2 * l][3]));
    cfg.head_kernel = int(shapes[2 * (n_layers - 2)][0]);
    cfg.feature_width = int(shapes[2 * (n_layers - 2)][3]);
    cfg.n_class = int(shapes[2 * (n_layers - 1)][3]);
    cfg.validate();

    ToySegNet<float> net = ToySegNet<float>::build(cfg);
    auto params = net.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != shapes[i])
            throw std::runtime_error("checkpoint shape table does not describe a toy-segnet: " + path);
        for (auto& v : params[i].data()) v = read_f32(in, path);
    }
    return net;
}

}  // namespace car
