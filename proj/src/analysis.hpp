#pragma once

// Diagnostics: class dependency maps (pairwise class-center similarity over a
// dataset) and pixel relation maps (anchor-to-all feature similarity), plus
// heatmap rendering to PPM with the numeric matrix written as CSV beside it.

#include <string>
#include <vector>

#include "model.hpp"
#include "synth.hpp"

namespace car {

struct DependencyMap {
    int n_class = 0;
    std::vector<double> values;   // n_class x n_class
    std::vector<bool> present;
    bool raw_dot = false;         // raw dot products instead of cosine

    double mean_off_diagonal() const;
};

struct RelationMap {
    int height = 0, width = 0;
    int anchor_row = 0, anchor_col = 0;
    std::vector<double> values;  // H x W
};

// Dataset-scope GT class centers of the model's feature maps, compared
// pairwise by cosine similarity (or raw dot product).
DependencyMap compute_dependency_map(const ToySegNet<float>& model, const std::vector<Sample>& samples,
                                     bool raw_dot = false);

RelationMap compute_relation_map(const ToySegNet<float>& model, const Sample& sample, int anchor_row,
                                 int anchor_col);

// Writes `<path_base>.ppm` (min-max normalized, 256-entry blue-to-red table)
// and `<path_base>.csv` with the exact values and the normalization range in
// the header comment.
void render_heatmap(const std::vector<double>& values, int rows, int cols, const std::string& path_base);

// CSV companion reader, used by tests and the compare tooling.
std::vector<double> read_heatmap_csv(const std::string& path, int& rows, int& cols);

}  // namespace car
