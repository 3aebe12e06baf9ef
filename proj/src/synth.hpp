#pragma once

// Deterministic toy segmentation dataset with controllable foreground /
// background co-occurrence bias. Every sample is a pure function of
// (spec, split, index), so generation is bitwise reproducible and
// parallelizable.

#include <cstdint>
#include <string>
#include <vector>

#include "labels.hpp"

namespace car {

// Texture pattern: `cross` multiplies sinusoids along both axes; `horizontal`
// and `vertical` are single-axis stripes, separable by orientation alone.
enum class TexturePattern { cross, horizontal, vertical };

struct ClassStyle {
    float r = 0, g = 0, b = 0;  // mean color in [0,1]
    float texture_amp = 0;
    float texture_freq = 1;     // cycles across the image
    TexturePattern pattern = TexturePattern::cross;
};

struct SceneSpec {
    int image_size = 32;
    int n_class = 4;
    std::vector<ClassStyle> palette;
    // row f: P(bg = c | fg = f); all-zero rows are never used as foreground
    std::vector<std::vector<double>> cooccurrence;
    float noise_std = 0.04f;
    uint64_t seed = 1234;

    void validate() const;
};

// Default scene: the first half of the classes are backgrounds with distinct
// colors, the second half foregrounds sharing a similar color but differing
// in texture frequency. `bias` is the probability that foreground k pairs
// with its preferred background.
SceneSpec make_default_spec(int n_class = 4, int image_size = 32, double bias = 0.95,
                            float noise_std = 0.04f, uint64_t seed = 1234);

enum class Split { train, test_common, test_rare };

Split split_from_string(const std::string& s);
std::string split_to_string(Split s);

struct Sample {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> image;  // H*W*3, interleaved RGB
    LabelMask mask;
    int fg = -1;
    int bg = -1;
};

std::vector<Sample> generate(const SceneSpec& spec, int count, Split split);

void write_sample(const Sample& s, const std::string& image_path, const std::string& mask_path);
Sample read_sample(const std::string& image_path, const std::string& mask_path, int n_class);

// Dataset directory: images/, masks/ and an index.csv with lines
// `split,image_path,mask_path,fg,bg`.
void write_dataset(const SceneSpec& spec, const std::string& dir, int n_train, int n_test_common,
                   int n_test_rare);

struct IndexEntry {
    std::string split, image_path, mask_path;
    int fg = -1, bg = -1;
};

std::vector<IndexEntry> read_index(const std::string& dir);
std::vector<Sample> load_split(const std::string& dir, Split split, int n_class);

}  // namespace car
