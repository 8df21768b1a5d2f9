#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <ws3d/camera.hpp>
#include <ws3d/losses.hpp>
#include <ws3d/maskoracle.hpp>
#include <ws3d/metrics.hpp>
#include <ws3d/mrl.hpp>
#include <ws3d/optimizer.hpp>
#include <ws3d/prompter.hpp>
#include <ws3d/segnet.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d {

enum class PromptMode { Cpg, Agg };
enum class OracleKind { Gt, External };

struct OracleSettings {
    OracleKind kind = OracleKind::Gt;
    OracleNoiseConfig noise;
    std::string command;             // external only
    std::filesystem::path workdir;   // external only
};

struct TrainConfig {
    int epochs = 60;
    int batch_size = 8;
    double learning_rate = 5e-4;
    double weight_decay = 0.05;
    LossConfig loss;
    OracleSettings oracle;
    int views = 1;
    bool union_views = false;
    int image_height = 128;
    int image_width = 128;
    int splat_radius = 1;
    PromptMode prompt_mode = PromptMode::Cpg;
    std::size_t subgroup_cap = 64;
    int mask_refresh = 1; // epochs between oracle queries for a scan
    int labels_per_tooth = 1;
    int planted_outliers = 0; // extra low-confidence points per predicted subgroup
    double planted_confidence = 0.05;
    int hidden = 64;
    int embed = 32;
    int conf_hidden = 32;
    int knn = 16;
    std::uint64_t seed = 0;

    void validate() const;
    NetworkDims dims(int num_classes) const;
};

/// A scan with everything that does not change during training: sparse
/// labels, network input, cameras and renderings.
struct TrainingSample {
    std::string id;
    LabeledScan scan;
    SparseLabelMask sparse;
    ScanInput input;
    std::vector<Camera> cameras;
    std::vector<RenderedView> views;
};

class Dataset {
public:
    Dataset() = default;
    /// Sparse labels are drawn per scan from `label_seed`.
    static Dataset prepare(std::vector<LabeledScan> scans, std::vector<std::string> ids,
                           const TrainConfig& cfg, std::uint64_t label_seed);
    static Dataset load_dir(const std::filesystem::path& dir, const TrainConfig& cfg,
                            std::uint64_t label_seed);

    std::size_t size() const noexcept { return m_samples.size(); }
    bool empty() const noexcept { return m_samples.empty(); }
    int num_classes() const;
    const TrainingSample& operator[](std::size_t i) const { return *m_samples[i]; }

private:
    // Samples hold a ScanInput referenced by forward tapes; keep them pinned.
    std::vector<std::shared_ptr<const TrainingSample>> m_samples;
};

/// Scan files (`*.ws3d`) of a dataset directory in lexicographic order.
std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir);

struct LossRow {
    int epoch = 0;
    std::string scan_id;
    LossReport report;
    std::size_t prompts = 0;
    std::size_t dropped = 0;
};

struct EpochSummary {
    int epoch = 0;
    double mean_total = 0.0;
    double mean_coseg = 0.0;
    double mean_fg = 0.0;
    double mean_bg = 0.0;
    bool mrl_active = false;
};

struct TrainResult {
    NetworkParams params;
    std::vector<LossRow> log;
    std::vector<EpochSummary> epochs;
    std::size_t oracle_calls = 0;
    std::vector<OracleIncident> incidents;
};

struct TrainHooks {
    std::function<void(const EpochSummary&)> on_epoch;
    std::optional<std::filesystem::path> dump_dir; // written on divergence
};

std::unique_ptr<MaskOracle> make_oracle(const OracleSettings& settings);

/// Subgroups to prompt from: argmax partition, optionally with planted
/// low-confidence gingiva outliers (returned confidence is adjusted).
struct PromptInputs {
    std::vector<Subgroup> subgroups;
    std::vector<double> confidence;
};
PromptInputs prompt_inputs(const Prediction& pred, const LabeledScan& scan, int planted_outliers,
                           double planted_confidence, std::uint64_t seed);

/// Adds `per_group` gingiva points, chosen uniformly (seeded) among those
/// farther than `min_distance` from the subgroup's mean, to every subgroup
/// and assigns them confidence `confidence`. Points are not reused.
void plant_outliers(std::vector<Subgroup>& subgroups, std::vector<double>& confidence,
                    const LabeledScan& scan, int per_group, double confidence_value,
                    double min_distance, std::uint64_t seed);

/// Prompt generation, oracle query and re-projection for one scan. Views
/// with no prompt, or whose masks are all empty, yield no group set.
struct MrlTargets {
    PromptSet prompts;
    std::vector<ReprojectedGroups> groups; // one per view, or one merged
    std::size_t oracle_calls = 0;
};
MrlTargets build_mrl_targets(const TrainingSample& sample, const Prediction& pred,
                             const TrainConfig& cfg, MaskOracle& oracle, std::uint64_t seed);

TrainResult train(const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Metrics over all points of all scans. With `eval_points` > 0 the network
/// sees a seeded subsample of that many points per scan and predictions are
/// upsampled with three-neighbour interpolation.
Metrics evaluate(const NetworkParams& params, const Dataset& data, std::size_t eval_points = 0,
                 std::uint64_t seed = 0);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const Metrics& metrics);

} // namespace ws3d
