#include "analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "metrics.hpp"
#include "pnm.hpp"

namespace car {

double DependencyMap::mean_off_diagonal() const {
    double sum = 0;
    size_t cnt = 0;
    for (int i = 0; i < n_class; ++i) {
        if (!present[i]) continue;
        for (int j = 0; j < n_class; ++j) {
            if (i == j || !present[j]) continue;
            sum += values[size_t(i) * n_class + j];
            ++cnt;
        }
    }
    return cnt ? sum / double(cnt) : 0.0;
}

DependencyMap compute_dependency_map(const ToySegNet<float>& model, const std::vector<Sample>& samples,
                                     bool raw_dot) {
    if (samples.empty()) throw std::invalid_argument("compute_dependency_map: no samples");
    int n = model.cfg.n_class;
    int c = model.cfg.feature_width;
    std::vector<double> sums(size_t(n) * c, 0.0);
    std::vector<long> counts(n, 0);

    for (const auto& s : samples) {
        auto [features, logits] = model.forward(sample_input(s));
        (void)logits;
        const auto& f = features.data();
        LabelMask m = s.mask.resized(int(features.dim(1)), int(features.dim(2)));
        for (size_t i = 0; i < m.pixels(); ++i) {
            if (m.ignored(i)) continue;
            int k = m.labels[i];
            for (int j = 0; j < c; ++j) sums[size_t(k) * c + j] += double(f[i * c + j]);
            ++counts[k];
        }
    }

    DependencyMap out;
    out.n_class = n;
    out.raw_dot = raw_dot;
    out.present.assign(n, false);
    out.values.assign(size_t(n) * n, 0.0);
    int present_classes = 0;
    for (int k = 0; k < n; ++k) {
        out.present[k] = counts[k] > 0;
        if (out.present[k]) {
            ++present_classes;
            for (int j = 0; j < c; ++j) sums[size_t(k) * c + j] /= double(counts[k]);
        }
    }
    if (present_classes < 2) throw std::runtime_error("compute_dependency_map: fewer than 2 present classes");

    auto dot = [&](int a, int b) {
        double d = 0;
        for (int j = 0; j < c; ++j) d += sums[size_t(a) * c + j] * sums[size_t(b) * c + j];
        return d;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (!out.present[i] || !out.present[j]) continue;
            double v = dot(i, j);
            if (!raw_dot) {
                double ni = std::sqrt(dot(i, i)), nj = std::sqrt(dot(j, j));
                v = (ni > 0 && nj > 0) ? v / (ni * nj) : 0.0;
            }
            out.values[size_t(i) * n + j] = v;
        }
    return out;
}

RelationMap compute_relation_map(const ToySegNet<float>& model, const Sample& sample, int anchor_row,
                                 int anchor_col) {
    auto [features, logits] = model.forward(sample_input(sample));
    (void)logits;
    int h = int(features.dim(1)), w = int(features.dim(2)), c = int(features.dim(3));
    if (anchor_row < 0 || anchor_row >= h || anchor_col < 0 || anchor_col >= w)
        throw std::invalid_argument("compute_relation_map: anchor out of bounds");
    const auto& f = features.data();
    const float* anchor = f.data() + (size_t(anchor_row) * w + anchor_col) * c;
    double na = 0;
    for (int j = 0; j < c; ++j) na += double(anchor[j]) * anchor[j];
    na = std::sqrt(na);

    RelationMap out;
    out.height = h;
    out.width = w;
    out.anchor_row = anchor_row;
    out.anchor_col = anchor_col;
    out.values.assign(size_t(h) * w, 0.0);
    for (size_t i = 0; i < size_t(h) * w; ++i) {
        double d = 0, np = 0;
        for (int j = 0; j < c; ++j) {
            d += double(anchor[j]) * f[i * c + j];
            np += double(f[i * c + j]) * f[i * c + j];
        }
        np = std::sqrt(np);
        out.values[i] = (na > 0 && np > 0) ? d / (na * np) : 0.0;
    }
    return out;
}

namespace {

// fixed 256-entry blue -> white -> red table
void colormap(double t, uint8_t rgb[3]) {
    t = std::min(1.0, std::max(0.0, t));
    double r, g, b;
    if (t < 0.5) {
        double u = t * 2.0;
        r = u;
        g = u;
        b = 1.0;
    } else {
        double u = (t - 0.5) * 2.0;
        r = 1.0;
        g = 1.0 - u;
        b = 1.0 - u;
    }
    rgb[0] = uint8_t(std::lround(r * 255.0));
    rgb[1] = uint8_t(std::lround(g * 255.0));
    rgb[2] = uint8_t(std::lround(b * 255.0));
}

}  // namespace

void render_heatmap(const std::vector<double>& values, int rows, int cols, const std::string& path_base) {
    if (values.size() != size_t(rows) * size_t(cols))
        throw std::invalid_argument("render_heatmap: value count does not match dimensions");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("render_heatmap: non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    PnmImage img;
    img.width = cols;
    img.height = rows;
    img.channels = 3;
    img.pixels.resize(values.size() * 3);
    for (size_t i = 0; i < values.size(); ++i) {
        double t = hi > lo ? (values[i] - lo) / (hi - lo) : 0.5;  // constant maps to mid-color
        uint8_t rgb[3];
        colormap(double(uint8_t(std::lround(t * 255.0))) / 255.0, rgb);  // through the 256-entry table
        img.pixels[i * 3] = rgb[0];
        img.pixels[i * 3 + 1] = rgb[1];
        img.pixels[i * 3 + 2] = rgb[2];
    }
    write_pnm(path_base + ".ppm", img);

    std::ofstream csv(path_base + ".csv");
    if (!csv) throw std::runtime_error("cannot open " + path_base + ".csv for writing");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "# min=%.9g max=%.9g\n", lo, hi);
    csv << buf;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", values[size_t(r) * cols + c]);
            csv << (c ? "," : "") << buf;
        }
        csv << '\n';
    }
    if (!csv) throw std::runtime_error("write failed for " + path_base + ".csv");
}

std::vector<double> read_heatmap_csv(const std::string& path, int& rows, int& cols) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<double> out;
    std::string line;
    rows = 0;
    cols = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string cell;
        int c = 0;
        while (std::getline(ls, cell, ',')) {
            out.push_back(std::stod(cell));
            ++c;
        }
        if (cols == 0) cols = c;
        else if (c != cols) throw std::runtime_error("ragged heatmap CSV: " + path);
        ++rows;
    }
    return out;
}

}  // namespace car
