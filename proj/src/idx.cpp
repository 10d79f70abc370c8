#include "ibu/idx.hpp"

#include <fstream>
#include <stdexcept>

namespace ibu::idx {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 24));
    b.push_back(static_cast<std::uint8_t>(v >> 16));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

RawImages read_images(const std::string& path) {
    auto bytes = read_all(path);
    if (bytes.size() < 16) throw std::runtime_error(path + ": truncated IDX image header");
    if (be32(bytes, 0) != kImagesMagic)
        throw std::runtime_error(path + ": bad IDX image magic (expected 0x00000803)");
    RawImages raw;
    raw.count = be32(bytes, 4);
    raw.rows = be32(bytes, 8);
    raw.cols = be32(bytes, 12);
    std::size_t expect = std::size_t(raw.count) * raw.rows * raw.cols;
    if (bytes.size() != 16 + expect) throw std::runtime_error(path + ": truncated IDX image payload");
    raw.pixels.assign(bytes.begin() + 16, bytes.end());
    return raw;
}

RawLabels read_labels(const std::string& path) {
    auto bytes = read_all(path);
    if (bytes.size() < 8) throw std::runtime_error(path + ": truncated IDX label header");
    if (be32(bytes, 0) != kLabelsMagic)
        throw std::runtime_error(path + ": bad IDX label magic (expected 0x00000801)");
    RawLabels raw;
    raw.count = be32(bytes, 4);
    if (bytes.size() != 8 + raw.count) throw std::runtime_error(path + ": truncated IDX label payload");
    raw.labels.assign(bytes.begin() + 8, bytes.end());
    return raw;
}

std::vector<std::uint8_t> serialize_images(const RawImages& raw) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + raw.pixels.size());
    put_be32(out, kImagesMagic);
    put_be32(out, raw.count);
    put_be32(out, raw.rows);
    put_be32(out, raw.cols);
    out.insert(out.end(), raw.pixels.begin(), raw.pixels.end());
    return out;
}

std::vector<std::uint8_t> serialize_labels(const RawLabels& raw) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + raw.labels.size());
    put_be32(out, kLabelsMagic);
    put_be32(out, raw.count);
    out.insert(out.end(), raw.labels.begin(), raw.labels.end());
    return out;
}

data::Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    RawImages imgs = read_images(images_path);
    RawLabels labs = read_labels(labels_path);
    if (imgs.count != labs.count)
        throw std::runtime_error("IDX image count " + std::to_string(imgs.count) +
                                 " does not match label count " + std::to_string(labs.count));
    data::Dataset ds;
    std::size_t n = std::size_t(imgs.rows) * imgs.cols;
    ds.inputs = Tensor::zeros({imgs.count, n});
    for (std::size_t i = 0; i < imgs.pixels.size(); ++i)
        ds.inputs.data[i] = static_cast<double>(imgs.pixels[i]) / 255.0;
    ds.labels.assign(labs.labels.begin(), labs.labels.end());
    std::uint32_t max_label = 0;
    for (std::uint32_t y : ds.labels) max_label = std::max(max_label, y);
    ds.num_classes = std::max<std::size_t>(2, max_label + 1);
    return ds;
}

}  // namespace ibu::idx
