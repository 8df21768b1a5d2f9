#include <ws3d/maskoracle.hpp>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include <ws3d/errors.hpp>
#include <ws3d/image_io.hpp>

extern char** environ;

namespace ws3d {

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void OracleNoiseConfig::validate() const
{
    if (dilate_px < 0 || erode_px < 0)
        throw ConfigError("oracle morphology radii must be >= 0");
    if (!(flip_prob >= 0.0 && flip_prob < 1.0))
        throw ConfigError("oracle flip_prob must lie in [0, 1)");
}

namespace {

// Separable square-window max (dilate) or min (erode). Pixels outside the
// image do not take part in the window.
BinaryMask morph(const BinaryMask& mask, int radius, bool dilation)
{
    if (radius == 0)
        return mask;
    const int h = mask.height, w = mask.width;
    auto pass = [&](const BinaryMask& src, bool rows) {
        BinaryMask out(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::uint8_t acc = dilation ? 0 : 1;
                for (int d = -radius; d <= radius; ++d) {
                    const int yy = rows ? y : y + d;
                    const int xx = rows ? x + d : x;
                    if (yy < 0 || xx < 0 || yy >= h || xx >= w)
                        continue;
                    acc = dilation ? std::max(acc, src.at(yy, xx)) : std::min(acc, src.at(yy, xx));
                }
                out.at(y, x) = acc;
            }
        return out;
    };
    return pass(pass(mask, true), false);
}

} // namespace

BinaryMask dilate(const BinaryMask& mask, int radius) { return morph(mask, radius, true); }
BinaryMask erode(const BinaryMask& mask, int radius) { return morph(mask, radius, false); }

BinaryMask gt_oracle_segment(const RenderedView& view, int u, int v, const OracleNoiseConfig& noise)
{
    if (!view.in_bounds(v, u))
        throw std::out_of_range("prompt (u=" + std::to_string(u) + ", v=" + std::to_string(v) +
                                ") outside the view");
    const int h = view.height(), w = view.width();
    BinaryMask mask(h, w);

    int instance = view.instance_image[view.pixel(v, u)];
    if (instance < 0) {
        constexpr int search = 3;
        int best = search * search + 1;
        for (int dv = -search; dv <= search; ++dv)
            for (int du = -search; du <= search; ++du) {
                const int d2 = dv * dv + du * du;
                if (d2 >= best || !view.in_bounds(v + dv, u + du))
                    continue;
                const int inst = view.instance_image[view.pixel(v + dv, u + du)];
                if (inst >= 0) {
                    best = d2;
                    instance = inst;
                }
            }
    }
    if (instance >= 0)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                mask.at(y, x) = view.instance_image[view.pixel(y, x)] == instance ? 1 : 0;

    mask = erode(dilate(mask, noise.dilate_px), noise.erode_px);
    if (noise.flip_prob > 0.0) {
        std::seed_seq seq{static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32),
                          static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)};
        std::mt19937_64 rng(seq);
        std::bernoulli_distribution flip(noise.flip_prob);
        for (auto& b : mask.bits)
            if (flip(rng))
                b ^= 1;
    }
    return mask;
}

GtOracle::GtOracle(OracleNoiseConfig noise) : m_noise(noise) { m_noise.validate(); }

MaskSet GtOracle::segment(const RenderedView& view, const LabeledScan&, int view_id,
                          std::span<const Prompt> prompts)
{
    MaskSet set{view_id, view.height(), view.width(), {}};
    set.masks.reserve(prompts.size());
    for (const Prompt& p : prompts)
        set.masks.push_back({p.class_id, p.u, p.v, gt_oracle_segment(view, p.u, p.v, m_noise)});
    return set;
}

// ---------------------------------------------------------------------------

std::string prompts_json(std::span<const Prompt> prompts)
{
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t k = 0; k < prompts.size(); ++k)
        arr.push_back({{"id", k}, {"u", prompts[k].u}, {"v", prompts[k].v}});
    return arr.dump();
}

ExternalOracle::ExternalOracle(std::string command, std::filesystem::path workdir, bool strict)
    : m_command(std::move(command)), m_workdir(std::move(workdir)), m_strict(strict)
{
    if (m_command.empty())
        throw ConfigError("external oracle command is empty");
}

std::chrono::milliseconds ExternalOracle::timeout_from_env()
{
    const char* env = std::getenv("WS3D_ORACLE_TIMEOUT_SECS");
    double secs = 60.0;
    if (env && *env) {
        char* end = nullptr;
        const double parsed = std::strtod(env, &end);
        if (end != env && parsed > 0.0)
            secs = parsed;
    }
    return std::chrono::milliseconds(static_cast<long long>(secs * 1000.0));
}

void ExternalOracle::incident(int prompt_id, std::string message)
{
    if (m_strict)
        throw OracleError(message);
    m_incidents.push_back({prompt_id, std::move(message)});
}

std::vector<OracleIncident> ExternalOracle::take_incidents() { return std::exchange(m_incidents, {}); }

namespace {

std::mutex& workdir_mutex(const std::filesystem::path& dir)
{
    static std::mutex registry_lock;
    static std::map<std::string, std::unique_ptr<std::mutex>> registry;
    std::lock_guard lock(registry_lock);
    auto& slot = registry[std::filesystem::weakly_canonical(dir).string()];
    if (!slot)
        slot = std::make_unique<std::mutex>();
    return *slot;
}

// Runs `/bin/sh -c '<command> "$1"' sh <workdir>` in its own process group.
// Returns an error description, or an empty string on exit status 0.
std::string run_command(const std::string& command, const std::filesystem::path& workdir,
                        std::chrono::milliseconds timeout)
{
    const std::string script = command + " \"$1\"";
    const std::string dir = workdir.string();
    std::vector<char*> argv{const_cast<char*>("sh"), const_cast<char*>("-c"),
                            const_cast<char*>(script.c_str()), const_cast<char*>("sh"),
                            const_cast<char*>(dir.c_str()), nullptr};
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, "/bin/sh", nullptr, &attr, argv.data(), environ);
    posix_spawnattr_destroy(&attr);
    if (rc != 0)
        return "failed to spawn oracle command: " + std::string(std::strerror(rc));

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid)
            break;
        if (r < 0 && errno != EINTR)
            return "waitpid failed: " + std::string(std::strerror(errno));
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            waitpid(pid, &status, 0);
            return "oracle command timed out after " + std::to_string(timeout.count()) + " ms";
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (WIFEXITED(status) && WEXITSTATUS(status) == 0)
        return {};
    if (WIFEXITED(status))
        return "oracle command exited with status " + std::to_string(WEXITSTATUS(status));
    return "oracle command terminated by a signal";
}

} // namespace

MaskSet ExternalOracle::segment(const RenderedView& view, const LabeledScan& scan, int view_id,
                                std::span<const Prompt> prompts)
{
    std::lock_guard lock(workdir_mutex(m_workdir));
    const int h = view.height(), w = view.width();
    MaskSet set{view_id, h, w, {}};
    for (const Prompt& p : prompts)
        set.masks.push_back({p.class_id, p.u, p.v, BinaryMask(h, w)});
    if (prompts.empty())
        return set;

    std::filesystem::create_directories(m_workdir);
    for (const auto& entry : std::filesystem::directory_iterator(m_workdir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("mask_") && name.ends_with(".pgm"))
            std::filesystem::remove(entry.path());
    }
    write_ppm(m_workdir / "view.ppm", shaded_image(view, scan));
    {
        std::ofstream out(m_workdir / "prompts.json", std::ios::trunc);
        out << prompts_json(prompts);
        if (!out)
            throw OracleError("cannot write prompts.json in " + m_workdir.string());
    }

    const std::string failure = run_command(m_command, m_workdir, timeout_from_env());
    if (!failure.empty()) {
        incident(-1, failure);
        return set;
    }

    for (std::size_t k = 0; k < prompts.size(); ++k) {
        const auto path = m_workdir / ("mask_" + std::to_string(k) + ".pgm");
        const int id = static_cast<int>(k);
        if (!std::filesystem::exists(path)) {
            incident(id, "missing oracle output " + path.filename().string());
            continue;
        }
        GrayImage img;
        try {
            img = read_pgm(path);
        } catch (const Error& e) {
            incident(id, std::string("malformed oracle output: ") + e.what());
            continue;
        }
        if (img.height != h || img.width != w) {
            incident(id, "oracle output " + path.filename().string() + " is " + std::to_string(img.height) +
                             "x" + std::to_string(img.width) + ", expected " + std::to_string(h) + "x" +
                             std::to_string(w));
            continue;
        }
        BinaryMask mask(h, w);
        bool valid = true;
        for (std::size_t i = 0; i < img.values.size() && valid; ++i) {
            if (img.values[i] == 0)
                continue;
            if (img.values[i] != img.maxval) {
                valid = false;
                break;
            }
            mask.bits[i] = 1;
        }
        if (!valid) {
            incident(id, "oracle output " + path.filename().string() + " is not a 0/255 mask");
            continue;
        }
        set.masks[k].mask = std::move(mask);
    }
    return set;
}

BinaryMask background_mask(std::span<const BinaryMask> masks, int height, int width)
{
    BinaryMask bg(height, width, 1);
    for (const BinaryMask& m : masks) {
        if (m.height != height || m.width != width)
            throw DataError("background_mask: mask dimensions differ from the view");
        for (std::size_t p = 0; p < bg.bits.size(); ++p)
            bg.bits[p] = static_cast<std::uint8_t>(bg.bits[p] & (1 - m.bits[p]));
    }
    return bg;
}

BinaryMask background_mask(const MaskSet& masks)
{
    std::vector<BinaryMask> ms;
    ms.reserve(masks.masks.size());
    for (const auto& m : masks.masks)
        ms.push_back(m.mask);
    return background_mask(ms, masks.height, masks.width);
}

} // namespace ws3d
