#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "bfl/data.hpp"

namespace bfl {

namespace {

// Big-endian cursor over an IDX byte buffer.
class IdxReader {
public:
    IdxReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    std::uint32_t u32()
    {
        need(4);
        const std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                                (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
        pos_ += 4;
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n)
    {
        need(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) {
            throw IdxError(IdxErrorKind::truncated, std::string(what_) + ": truncated at byte " +
                                                        std::to_string(pos_) + " (needed " + std::to_string(n) +
                                                        " more)");
        }
    }

    std::span<const std::uint8_t> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IdxError(IdxErrorKind::io, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void expect_magic(std::uint32_t got, std::uint32_t want, const char* what)
{
    if (got != want) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s: bad magic 0x%08x (expected 0x%08x)", what, got, want);
        throw IdxError(IdxErrorKind::bad_magic, buf);
    }
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes)
{
    IdxReader images(image_bytes, "image file");
    expect_magic(images.u32(), kIdxImageMagic, "image file");
    const std::uint32_t n_images = images.u32();
    const std::uint32_t rows = images.u32();
    const std::uint32_t cols = images.u32();

    IdxReader labels(label_bytes, "label file");
    expect_magic(labels.u32(), kIdxLabelMagic, "label file");
    const std::uint32_t n_labels = labels.u32();

    if (n_images != n_labels) {
        throw IdxError(IdxErrorKind::count_mismatch, "image file holds " + std::to_string(n_images) +
                                                         " images but label file holds " +
                                                         std::to_string(n_labels) + " labels");
    }

    const std::size_t pixels = std::size_t{rows} * cols;
    const auto raw_pixels = images.take(std::size_t{n_images} * pixels);
    const auto raw_labels = labels.take(n_labels);

    Dataset data;
    data.features = Tensor2(n_images, pixels);
    for (std::size_t i = 0; i < raw_pixels.size(); ++i) {
        data.features.values[i] = static_cast<double>(raw_pixels[i]) / 255.0;
    }
    int max_label = -1;
    data.labels.reserve(n_labels);
    for (std::uint8_t y : raw_labels) {
        data.labels.push_back(y);
        max_label = std::max(max_label, static_cast<int>(y));
    }
    data.num_classes = max_label + 1;
    return data;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path)
{
    const auto images = read_file(images_path);
    const auto labels = read_file(labels_path);
    return parse_idx(images, labels);
}

}  // namespace bfl
