#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <ws3d/camera.hpp>

namespace ws3d {

/// 8-bit RGB raster, row-major.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb; // 3 bytes per pixel
};

/// Grayscale raster; `maxval` 255 uses one byte per sample, larger values two
/// (big-endian on disk, as the PGM format requires).
struct GrayImage {
    int height = 0;
    int width = 0;
    int maxval = 255;
    std::vector<std::uint16_t> values;
};

void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

std::array<std::uint8_t, 3> class_color(int class_id);

/// One color per class, black for empty pixels.
RgbImage label_image(const RenderedView& view);
/// Finite depths linearly mapped onto [1, 65535]; empty pixels are 0.
GrayImage depth_image(const RenderedView& view);
/// Lambert-shaded grayscale rendering shipped to external mask oracles.
RgbImage shaded_image(const RenderedView& view, const LabeledScan& scan);

/// Writes `h w index` lines for every set pixel.
void write_pixel_map(const std::filesystem::path& path, const RenderedView& view);

/// Line plot of equally spaced series on a white canvas, one class color per
/// series, with a shared y range. Non-finite samples break the line.
RgbImage line_plot(const std::vector<std::vector<double>>& series, int height, int width);

} // namespace ws3d
