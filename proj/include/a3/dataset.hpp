#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "a3/binary_io.hpp"
#include "a3/errors.hpp"
#include "a3/tensor.hpp"

namespace a3 {

/// Labelled images with pixel values in [0,1]. Immutable after load.
struct Dataset {
    Shape image_shape;            // (C, H, W)
    std::vector<double> pixels;   // N * C * H * W, row-major
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t image_size() const noexcept { return shape_size(image_shape); }

    template <typename T>
    Tensor<T> image(std::size_t i) const {
        const std::size_t d = image_size();
        const auto first = pixels.begin() + std::ptrdiff_t(i * d);
        return Tensor<T>(image_shape, std::vector<T>(first, first + std::ptrdiff_t(d)));
    }

    /// Structural checks; with num_classes > 0 also checks every label.
    void validate(std::size_t num_classes = 0) const {
        if (labels.empty()) throw ValidationError("dataset is empty");
        if (image_shape.size() != 3 || image_size() == 0) throw ValidationError("dataset image shape must be (C,H,W)");
        if (pixels.size() != labels.size() * image_size())
            throw ValidationError("dataset pixel count does not match N x C x H x W");
        for (double v : pixels)
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("dataset pixel outside [0,1]");
        if (num_classes > 0)
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] >= num_classes)
                    throw ValidationError("label " + std::to_string(labels[i]) + " of image " + std::to_string(i) +
                                          " is not below num_classes " + std::to_string(num_classes));
    }

    /// Subset of the first `n` images.
    Dataset head(std::size_t n) const {
        n = std::min(n, size());
        Dataset d{image_shape, {}, {}};
        d.pixels.assign(pixels.begin(), pixels.begin() + std::ptrdiff_t(n * image_size()));
        d.labels.assign(labels.begin(), labels.begin() + std::ptrdiff_t(n));
        return d;
    }
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// IDX ubyte image/label pair. Pixels are divided by 255.
inline Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes) {
    ByteReader ir(image_bytes);
    if (ir.u32_be("image magic") != kIdxImagesMagic) throw FormatError("bad IDX image magic", 0);
    const std::uint32_t n = ir.u32_be("image count");
    const std::uint32_t rows = ir.u32_be("rows");
    const std::uint32_t cols = ir.u32_be("cols");
    if (rows == 0 || cols == 0) throw FormatError("IDX image dimensions must be positive", 8);
    const std::size_t d = std::size_t(rows) * cols;
    auto px = ir.take(std::size_t(n) * d, "image pixels");
    if (!ir.at_end()) throw FormatError("trailing bytes after IDX images", ir.offset());

    ByteReader lr(label_bytes);
    if (lr.u32_be("label magic") != kIdxLabelsMagic) throw FormatError("bad IDX label magic", 0);
    const std::uint32_t nl = lr.u32_be("label count");
    if (nl != n)
        throw ValidationError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) +
                              " labels");
    auto lb = lr.take(nl, "labels");
    if (!lr.at_end()) throw FormatError("trailing bytes after IDX labels", lr.offset());

    Dataset ds{{1, rows, cols}, std::vector<double>(px.size()), std::vector<std::size_t>(lb.begin(), lb.end())};
    for (std::size_t i = 0; i < px.size(); ++i) ds.pixels[i] = double(px[i]) / 255.0;
    ds.validate();
    return ds;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    return parse_idx(read_file_bytes(images_path), read_file_bytes(labels_path));
}

inline std::vector<std::uint8_t> quantize_pixels(const Dataset& ds) {
    std::vector<std::uint8_t> out(ds.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::uint8_t(std::lround(std::clamp(ds.pixels[i], 0.0, 1.0) * 255.0));
    return out;
}

inline void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.image_shape.size() != 3 || ds.image_shape[0] != 1) throw ValidationError("IDX images must be single-channel");
    ByteWriter iw;
    iw.u32_be(kIdxImagesMagic);
    iw.u32_be(std::uint32_t(ds.size()));
    iw.u32_be(std::uint32_t(ds.image_shape[1]));
    iw.u32_be(std::uint32_t(ds.image_shape[2]));
    iw.raw(quantize_pixels(ds));
    ByteWriter lw;
    lw.u32_be(kIdxLabelsMagic);
    lw.u32_be(std::uint32_t(ds.size()));
    for (auto l : ds.labels) lw.u8(std::uint8_t(l));
    write_file_bytes(images_path, iw.bytes());
    write_file_bytes(labels_path, lw.bytes());
}

/// A3DS container: "A3DS", u32 version=1, u32 N,C,H,W (little-endian),
/// N*C*H*W u8 pixels, N u8 labels.
inline Dataset parse_a3ds(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("A3DS", "dataset file");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32_le("version");
    if (version != 1) throw FormatError("unsupported A3DS version " + std::to_string(version), version_at);
    const std::uint32_t n = r.u32_le("N"), c = r.u32_le("C"), h = r.u32_le("H"), w = r.u32_le("W");
    if (n == 0) throw ValidationError("A3DS dataset holds no images");
    const std::size_t d = std::size_t(c) * h * w;
    if (d == 0) throw FormatError("A3DS image dimensions must be positive", 12);
    auto px = r.take(std::size_t(n) * d, "pixels");
    auto lb = r.take(n, "labels");
    if (!r.at_end()) throw FormatError("trailing bytes after A3DS labels", r.offset());
    Dataset ds{{c, h, w}, std::vector<double>(px.size()), std::vector<std::size_t>(lb.begin(), lb.end())};
    for (std::size_t i = 0; i < px.size(); ++i) ds.pixels[i] = double(px[i]) / 255.0;
    return ds;
}

inline Dataset load_a3ds(const std::string& path) { return parse_a3ds(read_file_bytes(path)); }

inline std::vector<std::uint8_t> serialize_a3ds(const Dataset& ds) {
    ds.validate();
    ByteWriter w;
    w.magic("A3DS");
    w.u32_le(1);
    w.u32_le(std::uint32_t(ds.size()));
    for (auto d : ds.image_shape) w.u32_le(std::uint32_t(d));
    w.raw(quantize_pixels(ds));
    for (auto l : ds.labels) {
        if (l > 255) throw ValidationError("A3DS labels must fit in one byte");
        w.u8(std::uint8_t(l));
    }
    return w.take();
}

inline void save_a3ds(const Dataset& ds, const std::string& path) { write_file_bytes(path, serialize_a3ds(ds)); }

/// Loads A3DS or IDX by sniffing the file magic. IDX needs a labels path.
inline Dataset load_dataset(const std::string& path, const std::string& labels_path = {}) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && bytes[0] == 'A' && bytes[1] == '3' && bytes[2] == 'D' && bytes[3] == 'S')
        return parse_a3ds(bytes);
    if (labels_path.empty()) throw ValidationError("IDX image file '" + path + "' needs --labels");
    return parse_idx(bytes, read_file_bytes(labels_path));
}

}  // namespace a3
