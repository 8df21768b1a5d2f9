#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <ws3d/camera.hpp>
#include <ws3d/prompter.hpp>

namespace ws3d {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits; // 0 or 1, row-major

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), bits(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill)
    {
    }

    std::uint8_t at(int h, int w) const { return bits[static_cast<std::size_t>(h) * static_cast<std::size_t>(width) + static_cast<std::size_t>(w)]; }
    std::uint8_t& at(int h, int w) { return bits[static_cast<std::size_t>(h) * static_cast<std::size_t>(width) + static_cast<std::size_t>(w)]; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// The oracle's answer to one prompt.
struct OracleMask {
    int class_id = 0;
    int prompt_u = 0;
    int prompt_v = 0;
    BinaryMask mask;
};

struct MaskSet {
    int view_id = 0;
    int height = 0;
    int width = 0;
    std::vector<OracleMask> masks;
};

/// Simulated mask quality: dilation, then erosion (square structuring
/// elements of the given radius), then independent seeded pixel flips.
struct OracleNoiseConfig {
    int dilate_px = 0;
    int erode_px = 0;
    double flip_prob = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Something went wrong for one prompt; its mask fell back to empty.
struct OracleIncident {
    int prompt_id = -1; // -1: the whole invocation
    std::string message;
};

/// A promptable 2D segmenter: one binary mask per point prompt. Must be
/// deterministic for identical inputs and must not throw on model failure
/// (an empty mask stands in).
class MaskOracle {
public:
    virtual ~MaskOracle() = default;
    virtual MaskSet segment(const RenderedView& view, const LabeledScan& scan, int view_id,
                            std::span<const Prompt> prompts) = 0;
    virtual std::string name() const = 0;
    /// Incidents recorded since the last call to `take_incidents`.
    virtual std::vector<OracleIncident> take_incidents() { return {}; }
};

BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);

/// Mask of the rendered instance under the prompt pixel (or the nearest set
/// pixel within 3 px if the prompt pixel is empty; otherwise an empty mask),
/// degraded by `noise`. Throws std::out_of_range for prompts off the image.
BinaryMask gt_oracle_segment(const RenderedView& view, int u, int v, const OracleNoiseConfig& noise);

/// Ground-truth-backed oracle for synthetic scans.
class GtOracle final : public MaskOracle {
public:
    explicit GtOracle(OracleNoiseConfig noise = {});
    MaskSet segment(const RenderedView& view, const LabeledScan& scan, int view_id,
                    std::span<const Prompt> prompts) override;
    std::string name() const override { return "gt"; }

private:
    OracleNoiseConfig m_noise;
};

/// Bridges to an external segmenter process. Per call it writes `view.ppm`
/// and `prompts.json` into the work directory, runs `<command> <workdir>`
/// and reads back `mask_<id>.pgm` (P5, 0/255) for every prompt id.
/// Invocations on one work directory are serialized.
class ExternalOracle final : public MaskOracle {
public:
    /// `strict` turns every incident into a thrown OracleError.
    ExternalOracle(std::string command, std::filesystem::path workdir, bool strict = false);
    MaskSet segment(const RenderedView& view, const LabeledScan& scan, int view_id,
                    std::span<const Prompt> prompts) override;
    std::string name() const override { return "external"; }
    std::vector<OracleIncident> take_incidents() override;

    /// WS3D_ORACLE_TIMEOUT_SECS, default 60 s.
    static std::chrono::milliseconds timeout_from_env();

private:
    void incident(int prompt_id, std::string message);

    std::string m_command;
    std::filesystem::path m_workdir;
    bool m_strict;
    std::vector<OracleIncident> m_incidents;
};

/// Pixels covered by no foreground mask: the product of the complements.
BinaryMask background_mask(std::span<const BinaryMask> masks, int height, int width);
BinaryMask background_mask(const MaskSet& masks);

/// Writes the prompts.json payload of the external protocol.
std::string prompts_json(std::span<const Prompt> prompts);

} // namespace ws3d
