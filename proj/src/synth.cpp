#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pnm.hpp"
#include "rng.hpp"

namespace car {

namespace {

constexpr double kRareThreshold = 0.05;
constexpr double kTwoPi = 6.283185307179586;

std::vector<int> used_fg_rows(const SceneSpec& spec) {
    std::vector<int> rows;
    for (int f = 0; f < spec.n_class; ++f) {
        double s = 0;
        for (double v : spec.cooccurrence[f]) s += v;
        if (s > 0) rows.push_back(f);
    }
    return rows;
}

std::vector<std::pair<int, int>> rare_pairs(const SceneSpec& spec) {
    auto rows = used_fg_rows(spec);
    std::vector<std::pair<int, int>> pairs;
    for (int f : rows)
        for (int b = 0; b < spec.n_class; ++b) {
            if (b == f || spec.cooccurrence[f][b] <= 0) continue;  // pair never occurs at all
            double joint = spec.cooccurrence[f][b] / double(rows.size());
            if (joint < kRareThreshold) pairs.emplace_back(f, b);
        }
    return pairs;
}

uint8_t quantize(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return uint8_t(std::lround(c * 255.0));
}

Sample render(const SceneSpec& spec, Rng& rng, int fg, int bg) {
    int s = spec.image_size;
    size_t hw = size_t(s) * size_t(s);

    // foreground shape: ellipse or rectangle, resampled until it covers
    // 5-60% of the image
    bool is_ellipse = rng.uniform() < 0.5;
    std::vector<uint8_t> inside(hw, 0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        double cx = rng.uniform(0.30, 0.70) * s;
        double cy = rng.uniform(0.30, 0.70) * s;
        double rx = rng.uniform(0.12, 0.40) * s;
        double ry = rng.uniform(0.12, 0.40) * s;
        size_t count = 0;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                double dx = (x + 0.5 - cx), dy = (y + 0.5 - cy);
                bool in = is_ellipse ? (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0
                                     : std::abs(dx) <= rx && std::abs(dy) <= ry;
                inside[size_t(y) * s + x] = in ? 1 : 0;
                if (in) ++count;
            }
        double cover = double(count) / double(hw);
        if (cover >= 0.05 && cover <= 0.60) break;
    }

    // labels with a 2 px ignore band around the shape boundary
    std::vector<int> labels(hw);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            uint8_t here = inside[size_t(y) * s + x];
            bool boundary = false;
            for (int dy = -2; dy <= 2 && !boundary; ++dy)
                for (int dx = -2; dx <= 2 && !boundary; ++dx) {
                    int ny = std::clamp(y + dy, 0, s - 1);
                    int nx = std::clamp(x + dx, 0, s - 1);
                    if (inside[size_t(ny) * s + nx] != here) boundary = true;
                }
            labels[size_t(y) * s + x] = boundary ? kIgnoreValue : (here ? fg : bg);
        }

    // per-sample texture phases
    double phase_fg_x = rng.uniform(0, kTwoPi), phase_fg_y = rng.uniform(0, kTwoPi);
    double phase_bg_x = rng.uniform(0, kTwoPi), phase_bg_y = rng.uniform(0, kTwoPi);

    Sample out;
    out.height = s;
    out.width = s;
    out.fg = fg;
    out.bg = bg;
    out.image.resize(hw * 3);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            size_t i = size_t(y) * s + x;
            const ClassStyle& st = spec.palette[inside[i] ? fg : bg];
            double px = inside[i] ? phase_fg_x : phase_bg_x;
            double py = inside[i] ? phase_fg_y : phase_bg_y;
            double t;
            switch (st.pattern) {
                case TexturePattern::horizontal:
                    t = st.texture_amp * std::sin(kTwoPi * st.texture_freq * y / s + py);
                    break;
                case TexturePattern::vertical:
                    t = st.texture_amp * std::sin(kTwoPi * st.texture_freq * x / s + px);
                    break;
                default:
                    t = st.texture_amp * std::sin(kTwoPi * st.texture_freq * x / s + px) *
                        std::sin(kTwoPi * st.texture_freq * y / s + py);
            }
            double base[3] = {st.r + t, st.g + t, st.b + t};
            for (int c = 0; c < 3; ++c)
                out.image[i * 3 + c] = quantize(base[c] + spec.noise_std * rng.gaussian());
        }
    out.mask = LabelMask(s, s, spec.n_class, std::move(labels));
    return out;
}

}  // namespace

void SceneSpec::validate() const {
    if (n_class < 2) throw std::invalid_argument("SceneSpec: n_class must be >= 2");
    if (int(palette.size()) != n_class) throw std::invalid_argument("SceneSpec: palette size != n_class");
    if (int(cooccurrence.size()) != n_class)
        throw std::invalid_argument("SceneSpec: cooccurrence must be n_class x n_class");
    bool any_row = false;
    for (const auto& row : cooccurrence) {
        if (int(row.size()) != n_class)
            throw std::invalid_argument("SceneSpec: cooccurrence must be n_class x n_class");
        double s = 0;
        for (double v : row) {
            if (v < 0) throw std::invalid_argument("SceneSpec: negative co-occurrence probability");
            s += v;
        }
        if (s > 0) {
            if (std::abs(s - 1.0) > 1e-9)
                throw std::invalid_argument("SceneSpec: used co-occurrence rows must sum to 1");
            any_row = true;
        }
    }
    if (!any_row) throw std::invalid_argument("SceneSpec: no usable foreground row");
    if (image_size < 8) throw std::invalid_argument("SceneSpec: image_size too small");
}

SceneSpec make_default_spec(int n_class, int image_size, double bias, float noise_std, uint64_t seed) {
    if (n_class < 4 || n_class % 2 != 0)
        throw std::invalid_argument("make_default_spec: n_class must be even and >= 4");
    SceneSpec spec;
    spec.image_size = image_size;
    spec.n_class = n_class;
    spec.noise_std = noise_std;
    spec.seed = seed;
    int half = n_class / 2;
    spec.palette.resize(n_class);
    for (int k = 0; k < half; ++k) {
        // backgrounds: distinct hues, faint low-frequency texture
        double h = double(k) / half;
        spec.palette[k] = {float(0.2 + 0.55 * h), float(0.6 - 0.25 * h), float(0.25 + 0.2 * h), 0.06f,
                           float(2 + k)};
    }
    for (int k = half; k < n_class; ++k) {
        // foregrounds: near-identical color, separable only by stripe
        // orientation (and frequency beyond the first two)
        int j = k - half;
        spec.palette[k] = {float(0.52 + 0.03 * j),
                           float(0.36 + 0.02 * j),
                           float(0.30),
                           0.30f,
                           float(8 + 3 * (j / 2)),
                           j % 2 == 0 ? TexturePattern::horizontal : TexturePattern::vertical};
    }
    spec.cooccurrence.assign(n_class, std::vector<double>(n_class, 0.0));
    for (int k = half; k < n_class; ++k) {
        int preferred = k - half;
        double rest = (1.0 - bias) / double(half - 1 > 0 ? half - 1 : 1);
        for (int b = 0; b < half; ++b) spec.cooccurrence[k][b] = (b == preferred) ? bias : rest;
    }
    spec.validate();
    return spec;
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test_common") return Split::test_common;
    if (s == "test_rare") return Split::test_rare;
    throw std::invalid_argument("unknown split: " + s);
}

std::string split_to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test_common: return "test_common";
        case Split::test_rare: return "test_rare";
    }
    throw std::logic_error("bad split");
}

std::vector<Sample> generate(const SceneSpec& spec, int count, Split split) {
    spec.validate();
    if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
    auto rows = used_fg_rows(spec);
    auto rare = rare_pairs(spec);
    if (split == Split::test_rare && rare.empty())
        throw std::runtime_error("generate: no rare foreground/background pair exists");

    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(splitmix64(spec.seed) ^ splitmix64(uint64_t(split) * 0x100000001ULL + uint64_t(i)));
        int fg, bg;
        if (split == Split::test_rare) {
            auto pr = rare[rng.index(rare.size())];
            fg = pr.first;
            bg = pr.second;
        } else {
            fg = rows[rng.index(rows.size())];
            double u = rng.uniform(), acc = 0;
            bg = spec.n_class - 1;
            for (int b = 0; b < spec.n_class; ++b) {
                acc += spec.cooccurrence[fg][b];
                if (u < acc) { bg = b; break; }
            }
        }
        out.push_back(render(spec, rng, fg, bg));
    }
    return out;
}

void write_sample(const Sample& s, const std::string& image_path, const std::string& mask_path) {
    PnmImage img;
    img.width = s.width;
    img.height = s.height;
    img.channels = 3;
    img.pixels = s.image;
    write_pnm(image_path, img);

    PnmImage m;
    m.width = s.width;
    m.height = s.height;
    m.channels = 1;
    m.pixels.resize(s.mask.pixels());
    for (size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = uint8_t(s.mask.labels[i]);
    write_pnm(mask_path, m);
}

Sample read_sample(const std::string& image_path, const std::string& mask_path, int n_class) {
    PnmImage img = read_pnm(image_path);
    if (img.channels != 3) throw std::runtime_error("expected P6 image: " + image_path);
    PnmImage m = read_pnm(mask_path);
    if (m.channels != 1) throw std::runtime_error("expected P5 mask: " + mask_path);
    if (m.width != img.width || m.height != img.height)
        throw std::runtime_error("image/mask size mismatch: " + image_path);
    Sample s;
    s.width = img.width;
    s.height = img.height;
    s.image = std::move(img.pixels);
    std::vector<int> labels(m.pixels.begin(), m.pixels.end());
    s.mask = LabelMask(m.height, m.width, n_class, std::move(labels));
    return s;
}

void write_dataset(const SceneSpec& spec, const std::string& dir, int n_train, int n_test_common,
                   int n_test_rare) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream index(fs::path(dir) / "index.csv");
    if (!index) throw std::runtime_error("cannot write index in " + dir);

    auto emit = [&](Split split, int count) {
        if (count <= 0) return;
        auto samples = generate(spec, count, split);
        std::string tag = split_to_string(split);
        for (int i = 0; i < count; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%05d", tag.c_str(), i);
            std::string img_rel = "images/" + std::string(name) + ".ppm";
            std::string msk_rel = "masks/" + std::string(name) + ".pgm";
            write_sample(samples[i], (fs::path(dir) / img_rel).string(), (fs::path(dir) / msk_rel).string());
            index << tag << ',' << img_rel << ',' << msk_rel << ',' << samples[i].fg << ',' << samples[i].bg
                  << '\n';
        }
    };
    emit(Split::train, n_train);
    emit(Split::test_common, n_test_common);
    emit(Split::test_rare, n_test_rare);

    std::ofstream meta(fs::path(dir) / "meta.txt");
    meta << "n_class = " << spec.n_class << "\n";
    meta << "image_size = " << spec.image_size << "\n";
}

std::vector<IndexEntry> read_index(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "index.csv");
    if (!in) throw std::runtime_error("cannot open index.csv in " + dir);
    std::vector<IndexEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        IndexEntry e;
        std::string fg, bg;
        if (!std::getline(ls, e.split, ',') || !std::getline(ls, e.image_path, ',') ||
            !std::getline(ls, e.mask_path, ',') || !std::getline(ls, fg, ',') || !std::getline(ls, bg))
            throw std::runtime_error("malformed index line: " + line);
        e.fg = std::stoi(fg);
        e.bg = std::stoi(bg);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<Sample> load_split(const std::string& dir, Split split, int n_class) {
    namespace fs = std::filesystem;
    std::vector<Sample> out;
    std::string tag = split_to_string(split);
    for (const auto& e : read_index(dir)) {
        if (e.split != tag) continue;
        Sample s = read_sample((fs::path(dir) / e.image_path).string(), (fs::path(dir) / e.mask_path).string(),
                               n_class);
        s.fg = e.fg;
        s.bg = e.bg;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace car
