#include <ws3d/synthgen.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <ws3d/errors.hpp>

namespace ws3d {

namespace {

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

Vec3 to_float_precision(const Vec3& v)
{
    return {to_float_precision(v.x), to_float_precision(v.y), to_float_precision(v.z)};
}

bool finite(const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

// Uniform direction on the unit sphere restricted to z >= min_z.
Vec3 sample_direction(std::mt19937_64& rng, double min_z)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (;;) {
        Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
        const double n = norm(d);
        if (n < 1e-12)
            continue;
        d *= 1.0 / n;
        if (d.z >= min_z)
            return d;
    }
}

} // namespace

void JawConfig::validate() const
{
    if (num_teeth < 1)
        throw ConfigError("num_teeth must be >= 1");
    if (num_teeth > 65534)
        throw ConfigError("num_teeth exceeds the container's class range");
    if (points_per_tooth < 1 || gingiva_points < 1)
        throw ConfigError("point counts must be >= 1");
    if (!(jitter_sigma >= 0.0))
        throw ConfigError("jitter_sigma must be >= 0");
    if (!(arch_radius > 0.0))
        throw ConfigError("arch_radius must be > 0");
    if (!(tooth_scale.x > 0.0 && tooth_scale.y > 0.0 && tooth_scale.z > 0.0))
        throw ConfigError("tooth_scale semi-axes must be > 0");
}

void LabeledScan::validate() const
{
    const std::size_t n = positions.size();
    if (num_classes < 1)
        throw DataError("scan has no classes");
    if (class_labels.size() != n || instance_ids.size() != n)
        throw DataError("scan label arrays do not match the point count");
    if (!normals.empty() && normals.size() != n)
        throw DataError("scan normal array does not match the point count");
    for (std::size_t i = 0; i < n; ++i) {
        if (!finite(positions[i]))
            throw DataError("non-finite position at point " + std::to_string(i));
        if (class_labels[i] < 0 || class_labels[i] >= num_classes)
            throw DataError("class label out of range at point " + std::to_string(i));
        if (instance_ids[i] < 0 || instance_ids[i] >= num_classes)
            throw DataError("instance id out of range at point " + std::to_string(i));
        if ((instance_ids[i] == 0) != (class_labels[i] == 0))
            throw DataError("instance 0 must coincide with class 0 at point " + std::to_string(i));
    }
}

LabeledScan generate_jaw(const JawConfig& config)
{
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int teeth = config.num_teeth;
    const double radius = config.arch_radius * uniform(0.95, 1.05);
    const double yaw = uniform(-0.15, 0.15);
    const Vec3 offset{uniform(-1.0, 1.0), uniform(-1.0, 1.0), 0.0};
    const Mat3 arch_rotation = axis_angle({0, 0, 1}, yaw);

    std::vector<Vec3> semi_axes(static_cast<std::size_t>(teeth));
    double max_axis = 0.0;
    for (auto& a : semi_axes) {
        const double s = uniform(0.9, 1.0);
        a = config.tooth_scale * s;
        max_axis = std::max({max_axis, a.x, a.y, a.z});
    }
    if (teeth > 1) {
        const double spacing = 2.0 * radius * std::sin(std::numbers::pi / (2.0 * teeth));
        if (spacing <= 2.0 * max_axis)
            throw ConfigError("teeth overlap: arch spacing " + std::to_string(spacing) +
                              " <= twice the largest semi-axis " + std::to_string(max_axis));
    }

    LabeledScan scan;
    scan.num_classes = teeth + 1;
    const std::size_t total = static_cast<std::size_t>(teeth) *
                                  static_cast<std::size_t>(config.points_per_tooth) +
                              static_cast<std::size_t>(config.gingiva_points);
    scan.positions.reserve(total);
    scan.normals.reserve(total);
    scan.class_labels.reserve(total);
    scan.instance_ids.reserve(total);

    auto push = [&](const Vec3& p, const Vec3& n, int label) {
        const Vec3 world = arch_rotation * p + offset;
        scan.positions.push_back(to_float_precision(world));
        scan.normals.push_back(to_float_precision(normalized(arch_rotation * n)));
        scan.class_labels.push_back(label);
        scan.instance_ids.push_back(label);
    };

    for (int t = 0; t < teeth; ++t) {
        const double angle = std::numbers::pi * (t + 0.5) / teeth;
        const Vec3 radial{std::cos(angle), std::sin(angle), 0.0};
        const Vec3 tangent{-radial.y, radial.x, 0.0};
        const Vec3& a = semi_axes[static_cast<std::size_t>(t)];
        const Vec3 center = radial * radius + Vec3{0.0, 0.0, 0.2 * a.z};
        for (int i = 0; i < config.points_per_tooth; ++i) {
            const Vec3 d = sample_direction(rng, -0.2);
            const Vec3 local{a.x * d.x, a.y * d.y, a.z * d.z};
            const Vec3 local_normal =
                normalized({d.x / a.x, d.y / a.y, d.z / a.z});
            const Vec3 jitter{gauss(rng), gauss(rng), gauss(rng)};
            const Vec3 p = center + radial * local.x + tangent * local.y +
                           Vec3{0.0, 0.0, local.z} + jitter * config.jitter_sigma;
            const Vec3 n = radial * local_normal.x + tangent * local_normal.y +
                           Vec3{0.0, 0.0, local_normal.z};
            push(p, n, t + 1);
        }
    }

    const double band = 2.6 * config.tooth_scale.x;
    for (int i = 0; i < config.gingiva_points; ++i) {
        const double angle = uniform(-0.15, std::numbers::pi + 0.15);
        const double r = radius + uniform(-band, band);
        const double z = -0.3 + 0.1 * gauss(rng);
        const Vec3 p{r * std::cos(angle), r * std::sin(angle), z};
        push(p, {0.0, 0.0, 1.0}, 0);
    }
    return scan;
}

SparseLabelMask sample_sparse_labels(const LabeledScan& scan, int per_tooth, std::uint64_t seed,
                                     int background_count)
{
    if (per_tooth < 1)
        throw ConfigError("per_tooth must be >= 1");
    if (background_count < 0)
        throw ConfigError("background_count must be >= 0");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(scan.num_classes));
    for (std::size_t i = 0; i < scan.size(); ++i)
        by_class[static_cast<std::size_t>(scan.class_labels[i])].push_back(i);

    std::mt19937_64 rng(seed);
    SparseLabelMask mask;
    mask.per_tooth = per_tooth;
    auto draw = [&](std::vector<std::size_t>& pool, int count, int cls) {
        if (pool.size() < static_cast<std::size_t>(count))
            throw DataError("class " + std::to_string(cls) + " has " + std::to_string(pool.size()) +
                            " points, fewer than the " + std::to_string(count) + " requested");
        // Partial Fisher-Yates: the first `count` slots become the sample.
        for (int j = 0; j < count; ++j) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(j),
                                                            pool.size() - 1);
            std::swap(pool[static_cast<std::size_t>(j)], pool[pick(rng)]);
        }
        std::vector<std::size_t> chosen(pool.begin(), pool.begin() + count);
        std::sort(chosen.begin(), chosen.end());
        mask.labeled_indices.insert(mask.labeled_indices.end(), chosen.begin(), chosen.end());
    };
    if (background_count > 0)
        draw(by_class[0], background_count, 0);
    for (int c = 1; c < scan.num_classes; ++c)
        draw(by_class[static_cast<std::size_t>(c)], per_tooth, c);
    return mask;
}

double labeled_fraction(const LabeledScan& scan, const SparseLabelMask& mask)
{
    return scan.size() == 0 ? 0.0
                            : static_cast<double>(mask.labeled_indices.size()) /
                                  static_cast<double>(scan.size());
}

// ---------------------------------------------------------------------------
// Container: "WS3D" | u8 version | u32 N | u16 K | f32 xyz * N | f32 normal * N
//            | u16 class * N | u16 instance * N, all little-endian.

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n)
    {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <typename T> void le(T v)
    {
        using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
        U u;
        std::memcpy(&u, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T); ++i)
            out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
    void need(std::size_t n, const char* what) const
    {
        if (buf.size() - pos < n)
            throw FormatError(std::string("truncated scan container while reading ") + what, pos);
    }
    template <typename T> T le(const char* what)
    {
        need(sizeof(T), what);
        using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<U>(static_cast<U>(buf[pos + i]) << (8 * i));
        pos += sizeof(T);
        T v;
        std::memcpy(&v, &u, sizeof(T));
        return v;
    }
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
};

} // namespace

std::vector<std::uint8_t> encode_scan(const LabeledScan& scan)
{
    scan.validate();
    if (scan.size() > 0xFFFFFFFFu)
        throw DataError("scan too large for the container");
    if (scan.num_classes - 1 > 0xFFFF)
        throw DataError("too many classes for the container");
    Writer w;
    w.bytes("WS3D", 4);
    w.out.push_back(kScanFormatVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(scan.size()));
    w.le<std::uint16_t>(static_cast<std::uint16_t>(scan.num_classes - 1));
    for (const Vec3& p : scan.positions) {
        w.le(static_cast<float>(p.x));
        w.le(static_cast<float>(p.y));
        w.le(static_cast<float>(p.z));
    }
    for (std::size_t i = 0; i < scan.size(); ++i) {
        const Vec3 n = scan.normals.empty() ? Vec3{} : scan.normals[i];
        w.le(static_cast<float>(n.x));
        w.le(static_cast<float>(n.y));
        w.le(static_cast<float>(n.z));
    }
    for (int c : scan.class_labels)
        w.le<std::uint16_t>(static_cast<std::uint16_t>(c));
    for (int c : scan.instance_ids)
        w.le<std::uint16_t>(static_cast<std::uint16_t>(c));
    return std::move(w.out);
}

LabeledScan decode_scan(const std::vector<std::uint8_t>& bytes)
{
    Reader r(bytes);
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), "WS3D", 4) != 0)
        throw FormatError("bad magic, expected \"WS3D\"", 0);
    r.pos = 4;
    const auto version = r.le<std::uint8_t>("version");
    if (version != kScanFormatVersion)
        throw UnsupportedVersionError(version, kScanFormatVersion);
    const std::uint32_t n = r.le<std::uint32_t>("point count");
    const std::uint16_t k = r.le<std::uint16_t>("class count");
    const std::size_t payload = static_cast<std::size_t>(n) * (12 + 12 + 2 + 2);
    r.need(payload, "point payload");

    LabeledScan scan;
    scan.num_classes = static_cast<int>(k) + 1;
    scan.positions.resize(n);
    scan.normals.resize(n);
    scan.class_labels.resize(n);
    scan.instance_ids.resize(n);
    for (auto& p : scan.positions) {
        p.x = r.le<float>("position");
        p.y = r.le<float>("position");
        p.z = r.le<float>("position");
    }
    for (auto& nm : scan.normals) {
        nm.x = r.le<float>("normal");
        nm.y = r.le<float>("normal");
        nm.z = r.le<float>("normal");
    }
    const std::size_t labels_at = r.pos;
    for (auto& c : scan.class_labels)
        c = r.le<std::uint16_t>("class label");
    for (auto& c : scan.instance_ids)
        c = r.le<std::uint16_t>("instance id");
    if (r.pos != bytes.size())
        throw FormatError("trailing bytes after scan payload", r.pos);
    try {
        scan.validate();
    } catch (const DataError& e) {
        throw FormatError(std::string("invalid scan content: ") + e.what(), labels_at);
    }
    return scan;
}

void save_scan(const LabeledScan& scan, const std::filesystem::path& path)
{
    const auto bytes = encode_scan(scan);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("failed writing " + path.string());
}

LabeledScan load_scan(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_scan(bytes);
}

} // namespace ws3d
