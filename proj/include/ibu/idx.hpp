#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibu/data.hpp"

namespace ibu::idx {

// Raw parsed IDX content, kept byte-exact so the reader can be shown lossless.
struct RawImages {
    std::uint32_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // count*rows*cols bytes
};

struct RawLabels {
    std::uint32_t count = 0;
    std::vector<std::uint8_t> labels;
};

RawImages read_images(const std::string& path);
RawLabels read_labels(const std::string& path);

std::vector<std::uint8_t> serialize_images(const RawImages& raw);
std::vector<std::uint8_t> serialize_labels(const RawLabels& raw);

// Flattened rows*cols features scaled to [0,1] by /255; classes = max label + 1.
data::Dataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace ibu::idx
