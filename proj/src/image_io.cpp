#include <ws3d/image_io.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <ws3d/errors.hpp>

namespace ws3d {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& header,
          const std::vector<std::uint8_t>& body)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << header;
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!out)
        throw Error("failed writing " + path.string());
}

// Netpbm header: magic, width, height, maxval, then a single whitespace byte.
struct PnmHeader {
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t data_offset = 0;
};

PnmHeader parse_header(const std::vector<std::uint8_t>& b, const char* magic,
                       const std::filesystem::path& path)
{
    const std::string name = path.filename().string();
    if (b.size() < 2 || b[0] != magic[0] || b[1] != magic[1])
        throw FormatError(name + ": expected " + magic + " magic", 0);
    std::size_t pos = 2;
    auto next_int = [&]() {
        for (;;) {
            while (pos < b.size() && std::isspace(b[pos]))
                ++pos;
            if (pos < b.size() && b[pos] == '#') {
                while (pos < b.size() && b[pos] != '\n')
                    ++pos;
                continue;
            }
            break;
        }
        if (pos >= b.size() || !std::isdigit(b[pos]))
            throw FormatError(name + ": malformed header", pos);
        long v = 0;
        while (pos < b.size() && std::isdigit(b[pos])) {
            v = v * 10 + (b[pos] - '0');
            if (v > 1'000'000)
                throw FormatError(name + ": header value too large", pos);
            ++pos;
        }
        return static_cast<int>(v);
    };
    PnmHeader h;
    h.width = next_int();
    h.height = next_int();
    h.maxval = next_int();
    if (pos >= b.size() || !std::isspace(b[pos]))
        throw FormatError(name + ": missing separator after header", pos);
    h.data_offset = pos + 1;
    if (h.width < 1 || h.height < 1 || h.maxval < 1 || h.maxval > 65535)
        throw FormatError(name + ": invalid dimensions or maxval", 2);
    return h;
}

} // namespace

void write_ppm(const std::filesystem::path& path, const RgbImage& image)
{
    dump(path, "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n",
         image.rgb);
}

RgbImage read_ppm(const std::filesystem::path& path)
{
    const auto b = slurp(path);
    const PnmHeader h = parse_header(b, "P6", path);
    if (h.maxval != 255)
        throw FormatError(path.filename().string() + ": only 8-bit PPM supported", 2);
    const std::size_t n = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) * 3;
    if (b.size() - h.data_offset < n)
        throw FormatError(path.filename().string() + ": truncated pixel data", b.size());
    RgbImage img{h.height, h.width, {}};
    img.rgb.assign(b.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                   b.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
    return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image)
{
    std::vector<std::uint8_t> body;
    const bool wide = image.maxval > 255;
    body.reserve(image.values.size() * (wide ? 2 : 1));
    for (std::uint16_t v : image.values) {
        if (wide)
            body.push_back(static_cast<std::uint8_t>(v >> 8));
        body.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    dump(path,
         "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
             std::to_string(image.maxval) + "\n",
         body);
}

GrayImage read_pgm(const std::filesystem::path& path)
{
    const auto b = slurp(path);
    const PnmHeader h = parse_header(b, "P5", path);
    const bool wide = h.maxval > 255;
    const std::size_t count = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
    const std::size_t n = count * (wide ? 2 : 1);
    if (b.size() - h.data_offset < n)
        throw FormatError(path.filename().string() + ": truncated pixel data", b.size());
    GrayImage img{h.height, h.width, h.maxval, std::vector<std::uint16_t>(count)};
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = h.data_offset + i * (wide ? 2 : 1);
        img.values[i] = wide ? static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]) : b[at];
    }
    return img;
}

std::array<std::uint8_t, 3> class_color(int class_id)
{
    if (class_id < 0)
        return {0, 0, 0};
    if (class_id == 0)
        return {200, 120, 120};
    // Golden-angle hue walk keeps neighbouring classes visually distinct.
    const double hue = std::fmod(class_id * 137.508, 360.0) / 60.0;
    const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue)) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
    }
    auto q = [](double c) { return static_cast<std::uint8_t>(std::lround(55 + 200 * c)); };
    return {q(r), q(g), q(b)};
}

RgbImage label_image(const RenderedView& view)
{
    RgbImage img{view.height(), view.width(), {}};
    img.rgb.reserve(view.label_image.size() * 3);
    for (int label : view.label_image) {
        const auto c = class_color(label);
        img.rgb.insert(img.rgb.end(), c.begin(), c.end());
    }
    return img;
}

GrayImage depth_image(const RenderedView& view)
{
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double d : view.depth)
        if (std::isfinite(d)) {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    GrayImage img{view.height(), view.width(), 65535, std::vector<std::uint16_t>(view.depth.size(), 0)};
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t p = 0; p < view.depth.size(); ++p)
        if (std::isfinite(view.depth[p]))
            img.values[p] = static_cast<std::uint16_t>(1 + std::lround((view.depth[p] - lo) / span * 65534.0));
    return img;
}

RgbImage shaded_image(const RenderedView& view, const LabeledScan& scan)
{
    RgbImage img{view.height(), view.width(), std::vector<std::uint8_t>(view.point_index.size() * 3, 0)};
    const Mat3 r = view.camera.extrinsics.rotation();
    for (std::size_t p = 0; p < view.point_index.size(); ++p) {
        const std::int32_t i = view.point_index[p];
        if (i < 0)
            continue;
        double shade = 0.6;
        if (!scan.normals.empty()) {
            const Vec3 n = r * scan.normals[static_cast<std::size_t>(i)];
            shade = 0.15 + 0.85 * std::clamp(-n.z, 0.0, 1.0);
        }
        const auto v = static_cast<std::uint8_t>(std::lround(255.0 * shade));
        img.rgb[p * 3] = img.rgb[p * 3 + 1] = img.rgb[p * 3 + 2] = v;
    }
    return img;
}

void write_pixel_map(const std::filesystem::path& path, const RenderedView& view)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    for (int h = 0; h < view.height(); ++h)
        for (int w = 0; w < view.width(); ++w) {
            const std::int32_t i = view.point_index[view.pixel(h, w)];
            if (i >= 0)
                out << h << ' ' << w << ' ' << i << '\n';
        }
}

RgbImage line_plot(const std::vector<std::vector<double>>& series, int height, int width)
{
    if (height < 8 || width < 8)
        throw ConfigError("line_plot: canvas too small");
    RgbImage img{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width * 3, 255)};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.size());
        for (double v : s)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    const int margin = 4;
    auto put = [&](int x, int y, const std::array<std::uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= width || y >= height)
            return;
        const std::size_t p = (static_cast<std::size_t>(y) * width + x) * 3;
        img.rgb[p] = c[0];
        img.rgb[p + 1] = c[1];
        img.rgb[p + 2] = c[2];
    };
    const std::array<std::uint8_t, 3> axis{0, 0, 0};
    for (int x = margin; x < width - margin; ++x)
        put(x, height - margin, axis);
    for (int y = margin; y <= height - margin; ++y)
        put(margin, y, axis);
    if (longest == 0 || !std::isfinite(lo))
        return img;
    if (hi == lo)
        hi = lo + 1.0;
    const double sx = longest > 1 ? static_cast<double>(width - 2 * margin - 1) / static_cast<double>(longest - 1) : 0.0;
    const double sy = static_cast<double>(height - 2 * margin - 1) / (hi - lo);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto color = class_color(static_cast<int>(k) + 1);
        bool have_prev = false;
        int px = 0, py = 0;
        for (std::size_t i = 0; i < series[k].size(); ++i) {
            const double v = series[k][i];
            if (!std::isfinite(v)) {
                have_prev = false;
                continue;
            }
            const int x = margin + static_cast<int>(std::lround(static_cast<double>(i) * sx));
            const int y = height - margin - 1 - static_cast<int>(std::lround((v - lo) * sy));
            if (!have_prev) {
                put(x, y, color);
            } else {
                // Bresenham
                int x0 = px, y0 = py;
                const int dx = std::abs(x - x0), dy = -std::abs(y - y0);
                const int stx = x0 < x ? 1 : -1, sty = y0 < y ? 1 : -1;
                int err = dx + dy;
                while (true) {
                    put(x0, y0, color);
                    if (x0 == x && y0 == y)
                        break;
                    const int e2 = 2 * err;
                    if (e2 >= dy) {
                        err += dy;
                        x0 += stx;
                    }
                    if (e2 <= dx) {
                        err += dx;
                        y0 += sty;
                    }
                }
            }
            px = x;
            py = y;
            have_prev = true;
        }
    }
    return img;
}

} // namespace ws3d
