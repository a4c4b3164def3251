#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dacnn/labels.hpp"
#include "dacnn/similarity.hpp"
#include "dacnn/tensor.hpp"

namespace dacnn {

// One synthetic RGB-D frame: rgb in [0,1], metric depth, per-pixel class ids.
struct Scene {
    Tensor rgb;       // [3,h,w]
    DepthMap depth;   // meters; holes carry valid=false
    LabelMap labels;  // 0..n_C-1, 255 = ignore
};

// Depth maps at resolutions h/2^k x w/2^k for k = 0..L, built by
// nearest-neighbor downsampling (top-left sample of each 2x2 block) so no
// fabricated depths appear at object boundaries. Missing-ness travels with
// the chosen sample.
class DepthPyramid {
  public:
    DepthPyramid() = default;
    static DepthPyramid build(const DepthMap& depth, int levels);

    int levels() const { return static_cast<int>(levels_.size()); }
    const DepthMap& level(int k) const;
    std::shared_ptr<const DepthMap> level_ptr(int k) const;

  private:
    std::vector<std::shared_ptr<const DepthMap>> levels_;
};

// Synthetic scene generator configuration. Objects are axis-aligned
// rectangles and discs placed at per-class depth bands; with
// `color_ambiguity` on, one object class shares the background's color
// distribution and is separable only through depth.
struct DatasetSpec {
    int num_images = 200;
    int64_t height = 64;
    int64_t width = 64;
    int num_classes = 4;
    int shapes_per_image = 6;
    double depth_min = 0.5;   // near limit of object bands, meters
    double depth_max = 5.0;   // far limit of the background band, meters
    bool color_ambiguity = true;
    double noise_sigma = 0.02;        // RGB, per channel
    double depth_noise_sigma = 0.0;   // meters
    double hole_prob = 0.0;
    uint64_t seed = 42;

    void validate() const;
};

std::vector<Scene> generate(const DatasetSpec& spec);

DepthPyramid build_pyramid(const DepthMap& depth, int levels);

// Binary PPM (P6, maxval 255) for RGB in [0,1].
void write_ppm_rgb(const std::string& path, const Tensor& rgb);
Tensor read_ppm_rgb(const std::string& path);

// Binary PGM (P5, maxval 65535, big-endian samples); value = round(meters*1000),
// 0 = missing depth.
void write_pgm16_depth(const std::string& path, const DepthMap& depth);
DepthMap read_pgm16_depth(const std::string& path);

// Binary PGM (P5, maxval 255); 255 = ignore.
void write_pgm8_labels(const std::string& path, const LabelMap& labels);
LabelMap read_pgm8_labels(const std::string& path);

// Directory layout: <root>/{rgb,depth,label}/<index:06d>.{ppm,pgm,pgm} plus
// manifest.txt with one index per line.
void write_dataset(const std::string& root, const std::vector<Scene>& scenes);
std::vector<Scene> load_dataset(const std::string& root);

}  // namespace dacnn
