#include "cpcfl/idx.hpp"

#include <cstdint>
#include <fstream>
#include <vector>

namespace cpcfl {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) {
        throw FormatError("idx: truncated header in " + path);
    }
    return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
           (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

std::ifstream open_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx: cannot open " + path);
    return in;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images = open_idx(images_path);
    if (read_be_u32(images, images_path) != kImageMagic) {
        throw FormatError("idx: bad image magic in " + images_path);
    }
    const std::uint32_t image_count = read_be_u32(images, images_path);
    const std::uint32_t rows = read_be_u32(images, images_path);
    const std::uint32_t cols = read_be_u32(images, images_path);

    std::ifstream labels = open_idx(labels_path);
    if (read_be_u32(labels, labels_path) != kLabelMagic) {
        throw FormatError("idx: bad label magic in " + labels_path);
    }
    const std::uint32_t label_count = read_be_u32(labels, labels_path);
    if (image_count != label_count) {
        throw FormatError("idx: count mismatch: " + std::to_string(image_count) + " images vs " +
                          std::to_string(label_count) + " labels");
    }

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    LabeledDataset data;
    data.features = Tensor({image_count, dim});
    std::vector<unsigned char> pixel_buf(dim);
    for (std::uint32_t i = 0; i < image_count; ++i) {
        if (!images.read(reinterpret_cast<char*>(pixel_buf.data()),
                         static_cast<std::streamsize>(dim))) {
            throw FormatError("idx: truncated image payload in " + images_path);
        }
        double* row = data.features.row(i);
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = static_cast<double>(pixel_buf[j]) / 255.0;
        }
    }
    data.labels.resize(image_count);
    int max_label = 0;
    for (std::uint32_t i = 0; i < label_count; ++i) {
        const int c = labels.get();
        if (c == EOF) throw FormatError("idx: truncated label payload in " + labels_path);
        data.labels[i] = c;
        max_label = std::max(max_label, c);
    }
    data.class_count = max_label + 1;
    return data;
}

}  // namespace cpcfl
