#include <ws3d/segnet.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <ws3d/errors.hpp>

namespace ws3d {

namespace kn = kernels::omp;

void NetworkDims::validate() const
{
    if (input < 1 || hidden < 1 || classes < 2 || embed < 1 || conf_hidden < 1 || knn < 1)
        throw ConfigError("network dims must be positive (classes >= 2)");
}

NetworkParams::NetworkParams(const NetworkDims& dims) : m_dims(dims)
{
    dims.validate();
    const auto h = static_cast<std::size_t>(dims.hidden);
    const std::array<std::pair<std::size_t, std::size_t>, kNumLayers> io{{
        {static_cast<std::size_t>(dims.input), h},
        {h, h},
        {2 * h, h},
        {h, static_cast<std::size_t>(dims.classes)},
        {h, static_cast<std::size_t>(dims.conf_hidden)},
        {static_cast<std::size_t>(dims.conf_hidden), 1},
        {h, h},
        {h, static_cast<std::size_t>(dims.embed)},
    }};
    static constexpr std::array<std::string_view, kNumLayers> names{
        "encoder1", "encoder2", "mixer", "seg_head", "conf_hidden", "conf_out", "proj1", "proj2"};
    std::size_t offset = 0;
    for (std::size_t l = 0; l < kNumLayers; ++l) {
        LayerShape& s = m_layers[l];
        s.name = names[l];
        s.in = io[l].first;
        s.out = io[l].second;
        s.weight_offset = offset;
        offset += s.in * s.out;
        s.bias_offset = offset;
        offset += s.out;
    }
    m_values.assign(offset, 0.0);
}

kernels::LinearView NetworkParams::view(Layer layer) const
{
    const LayerShape& s = shape(layer);
    return {std::span<const double>(m_values).subspan(s.weight_offset, s.in * s.out),
            std::span<const double>(m_values).subspan(s.bias_offset, s.out), s.in, s.out};
}

kernels::LinearGradView NetworkParams::grad_view(Layer layer, std::span<double> grads) const
{
    const LayerShape& s = shape(layer);
    return {grads.subspan(s.weight_offset, s.in * s.out), grads.subspan(s.bias_offset, s.out)};
}

bool NetworkParams::all_finite() const
{
    return std::all_of(m_values.begin(), m_values.end(), [](double v) { return std::isfinite(v); });
}

NetworkParams init_params(const NetworkDims& dims, std::uint64_t seed)
{
    NetworkParams params(dims);
    std::mt19937_64 rng(seed);
    for (const LayerShape& s : params.layers()) {
        const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < s.in * s.out; ++i)
            params.values()[s.weight_offset + i] = dist(rng);
    }
    return params;
}

ScanInput prepare_input(const LabeledScan& scan, int knn)
{
    const std::size_t n = scan.size();
    if (n == 0)
        throw DataError("cannot build network input for an empty scan");
    Vec3 center;
    for (const Vec3& p : scan.positions)
        center += p;
    center *= 1.0 / static_cast<double>(n);
    double spread = 0.0;
    for (const Vec3& p : scan.positions) {
        const Vec3 d = p - center;
        spread += dot(d, d);
    }
    spread = std::sqrt(spread / static_cast<double>(n));
    const double inv = spread > 0.0 ? 1.0 / spread : 1.0;

    ScanInput input;
    input.features = Matrix(n, 7);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = (scan.positions[i] - center) * inv;
        const Vec3 nm = scan.normals.empty() ? Vec3{} : scan.normals[i];
        auto row = input.features.row(i);
        row[0] = d.x;
        row[1] = d.y;
        row[2] = d.z;
        row[3] = nm.x;
        row[4] = nm.y;
        row[5] = nm.z;
        row[6] = norm(d);
    }
    const std::size_t k = std::min(static_cast<std::size_t>(knn), n);
    input.neighbors = kn::knn_search(scan.positions, scan.positions, k);
    return input;
}

PredictionGrad PredictionGrad::zeros_like(const Prediction& pred)
{
    PredictionGrad g;
    g.logits = Matrix(pred.logits.rows(), pred.logits.cols());
    g.confidence.assign(pred.confidence.size(), 0.0);
    g.embedding = Matrix(pred.embedding.rows(), pred.embedding.cols());
    return g;
}

namespace {

void add_into(Matrix& dst, const Matrix& src)
{
    if (src.empty())
        return;
    if (dst.empty()) {
        dst = src;
        return;
    }
    for (std::size_t i = 0; i < dst.values().size(); ++i)
        dst.values()[i] += src.values()[i];
}

} // namespace

PredictionGrad& PredictionGrad::operator+=(const PredictionGrad& other)
{
    add_into(logits, other.logits);
    add_into(embedding, other.embedding);
    if (!other.confidence.empty()) {
        if (confidence.empty())
            confidence = other.confidence;
        else
            for (std::size_t i = 0; i < confidence.size(); ++i)
                confidence[i] += other.confidence[i];
    }
    return *this;
}

PredictionGrad& PredictionGrad::scale(double s)
{
    for (double& v : logits.values())
        v *= s;
    for (double& v : embedding.values())
        v *= s;
    for (double& v : confidence)
        v *= s;
    return *this;
}

namespace {

void relu_inplace(Matrix& m)
{
    for (double& v : m.values())
        v = v > 0.0 ? v : 0.0;
}

// Zeroes gradient entries where the ReLU output was clamped.
void relu_backward(const Matrix& activated, Matrix& grad)
{
    for (std::size_t i = 0; i < grad.values().size(); ++i)
        if (!(activated.values()[i] > 0.0))
            grad.values()[i] = 0.0;
}

double sigmoid(double z)
{
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}


Matrix concat_columns(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

} // namespace

Prediction forward(const ScanInput& input, const NetworkParams& params, ForwardTape* tape)
{
    const NetworkDims& dims = params.dims();
    if (input.features.cols() != static_cast<std::size_t>(dims.input))
        throw ConfigError("input feature width does not match network dims");
    if (!params.all_finite())
        throw NumericError("network parameters contain NaN or Inf");

    Matrix h1, h2, pooled, hidden, conf_hidden, conf_logit, proj_hidden;
    Prediction pred;
    kn::linear_forward(input.features, params.view(Layer::Encoder1), h1);
    relu_inplace(h1);
    kn::linear_forward(h1, params.view(Layer::Encoder2), h2);
    relu_inplace(h2);
    kn::neighbor_mean(h2, input.neighbors, pooled);
    Matrix concat = concat_columns(h2, pooled);
    kn::linear_forward(concat, params.view(Layer::Mixer), hidden);
    relu_inplace(hidden);

    kn::linear_forward(hidden, params.view(Layer::SegHead), pred.logits);

    kn::linear_forward(hidden, params.view(Layer::ConfHidden), conf_hidden);
    relu_inplace(conf_hidden);
    kn::linear_forward(conf_hidden, params.view(Layer::ConfOut), conf_logit);
    const double floor = kConfidenceFloor;
    std::vector<double> gate(conf_logit.rows());
    pred.confidence.resize(conf_logit.rows());
    for (std::size_t i = 0; i < conf_logit.rows(); ++i) {
        gate[i] = sigmoid(conf_logit(i, 0));
        pred.confidence[i] = floor + (1.0 - 2.0 * floor) * gate[i];
    }

    kn::linear_forward(hidden, params.view(Layer::Proj1), proj_hidden);
    relu_inplace(proj_hidden);
    kn::linear_forward(proj_hidden, params.view(Layer::Proj2), pred.embedding);

    pred.hidden = hidden;
    if (tape) {
        tape->m_input = &input;
        tape->m_h1 = std::move(h1);
        tape->m_h2 = std::move(h2);
        tape->m_pooled = std::move(pooled);
        tape->m_concat = std::move(concat);
        tape->m_hidden = std::move(hidden);
        tape->m_conf_hidden = std::move(conf_hidden);
        tape->m_proj_hidden = std::move(proj_hidden);
        tape->m_gate = std::move(gate);
    }
    return pred;
}

std::vector<double> backward(const ForwardTape& tape, const NetworkParams& params,
                             const PredictionGrad& grad)
{
    if (!tape.recorded())
        throw UsageError("backward called without a recorded forward pass");
    const std::size_t n = tape.m_hidden.rows();
    const std::size_t h = static_cast<std::size_t>(params.dims().hidden);
    std::vector<double> grads(params.size(), 0.0);
    std::span<double> g(grads);

    Matrix d_hidden(n, h);
    Matrix tmp;

    if (!grad.logits.empty()) {
        kn::linear_backward_params(tape.m_hidden, grad.logits, params.grad_view(Layer::SegHead, g));
        kn::linear_backward_input(grad.logits, params.view(Layer::SegHead), tmp);
        add_into(d_hidden, tmp);
    }
    if (!grad.confidence.empty()) {
        Matrix d_logit(n, 1);
        const double scale = 1.0 - 2.0 * kConfidenceFloor;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = tape.m_gate[i];
            d_logit(i, 0) = grad.confidence[i] * scale * s * (1.0 - s);
        }
        kn::linear_backward_params(tape.m_conf_hidden, d_logit, params.grad_view(Layer::ConfOut, g));
        Matrix d_conf_hidden;
        kn::linear_backward_input(d_logit, params.view(Layer::ConfOut), d_conf_hidden);
        relu_backward(tape.m_conf_hidden, d_conf_hidden);
        kn::linear_backward_params(tape.m_hidden, d_conf_hidden, params.grad_view(Layer::ConfHidden, g));
        kn::linear_backward_input(d_conf_hidden, params.view(Layer::ConfHidden), tmp);
        add_into(d_hidden, tmp);
    }
    if (!grad.embedding.empty()) {
        kn::linear_backward_params(tape.m_proj_hidden, grad.embedding, params.grad_view(Layer::Proj2, g));
        Matrix d_proj_hidden;
        kn::linear_backward_input(grad.embedding, params.view(Layer::Proj2), d_proj_hidden);
        relu_backward(tape.m_proj_hidden, d_proj_hidden);
        kn::linear_backward_params(tape.m_hidden, d_proj_hidden, params.grad_view(Layer::Proj1, g));
        kn::linear_backward_input(d_proj_hidden, params.view(Layer::Proj1), tmp);
        add_into(d_hidden, tmp);
    }

    relu_backward(tape.m_hidden, d_hidden);
    kn::linear_backward_params(tape.m_concat, d_hidden, params.grad_view(Layer::Mixer, g));
    Matrix d_concat;
    kn::linear_backward_input(d_hidden, params.view(Layer::Mixer), d_concat);

    Matrix d_h2(n, h), d_pooled(n, h);
    for (std::size_t r = 0; r < n; ++r) {
        const auto src = d_concat.row(r);
        std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(h), d_h2.row(r).begin());
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(h), src.end(), d_pooled.row(r).begin());
    }
    kn::neighbor_mean_backward(d_pooled, tape.m_input->neighbors, d_h2);
    relu_backward(tape.m_h2, d_h2);
    kn::linear_backward_params(tape.m_h1, d_h2, params.grad_view(Layer::Encoder2, g));
    Matrix d_h1;
    kn::linear_backward_input(d_h2, params.view(Layer::Encoder2), d_h1);
    relu_backward(tape.m_h1, d_h1);
    kn::linear_backward_params(tape.m_input->features, d_h1, params.grad_view(Layer::Encoder1, g));
    return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint: "WSNN" | u8 version | u32 input, hidden, classes, embed,
//             conf_hidden, knn | u64 count | f64 * count, little-endian.

std::vector<std::uint8_t> encode_params(const NetworkParams& params)
{
    std::vector<std::uint8_t> out{'W', 'S', 'N', 'N', kCheckpointVersion};
    auto put = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i)
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    const NetworkDims& d = params.dims();
    for (int v : {d.input, d.hidden, d.classes, d.embed, d.conf_hidden, d.knn})
        put(static_cast<std::uint32_t>(v), 4);
    put(params.size(), 8);
    for (double v : params.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put(bits, 8);
    }
    return out;
}

NetworkParams decode_params(const std::vector<std::uint8_t>& bytes)
{
    std::size_t pos = 0;
    auto get = [&](int n, const char* what) {
        if (bytes.size() - pos < static_cast<std::size_t>(n))
            throw FormatError(std::string("truncated checkpoint while reading ") + what, pos);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += static_cast<std::size_t>(n);
        return v;
    };
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "WSNN", 4) != 0)
        throw FormatError("bad magic, expected \"WSNN\"", 0);
    pos = 4;
    const auto version = static_cast<unsigned>(get(1, "version"));
    if (version != kCheckpointVersion)
        throw UnsupportedVersionError(version, kCheckpointVersion);
    NetworkDims d;
    for (int* f : {&d.input, &d.hidden, &d.classes, &d.embed, &d.conf_hidden, &d.knn})
        *f = static_cast<int>(get(4, "dims"));
    const std::size_t dims_end = pos;
    try {
        d.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid dims: ") + e.what(), dims_end);
    }
    NetworkParams params(d);
    const std::uint64_t count = get(8, "parameter count");
    if (count != params.size())
        throw FormatError("parameter count does not match dims", pos - 8);
    for (double& v : params.values()) {
        const std::uint64_t bits = get(8, "parameters");
        std::memcpy(&v, &bits, 8);
    }
    if (pos != bytes.size())
        throw FormatError("trailing bytes after checkpoint", pos);
    return params;
}

void save_params(const NetworkParams& params, const std::filesystem::path& path)
{
    const auto bytes = encode_params(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NetworkParams load_params(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_params(bytes);
}

} // namespace ws3d
