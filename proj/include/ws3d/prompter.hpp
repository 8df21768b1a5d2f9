#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <ws3d/camera.hpp>
#include <ws3d/segnet.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d {

/// Points sharing one predicted tooth class.
struct Subgroup {
    int class_id = 0;
    std::vector<std::size_t> indices;
};

/// A 2D point prompt; `u` is the column and `v` the row of the pixel.
struct Prompt {
    int view_id = 0;
    int class_id = 0;
    int u = 0;
    int v = 0;

    friend bool operator==(const Prompt&, const Prompt&) = default;
};

enum class DropReason { EmptyAfterFilter, ProjectedOutOfBounds, BehindCamera };
std::string to_string(DropReason reason);

struct DroppedPrompt {
    int view_id = 0;
    int class_id = 0;
    DropReason reason = DropReason::EmptyAfterFilter;

    friend bool operator==(const DroppedPrompt&, const DroppedPrompt&) = default;
};

struct PromptSet {
    std::vector<Prompt> prompts;
    std::vector<DroppedPrompt> dropped;

    std::vector<Prompt> for_view(int view_id) const;
};

/// Groups points by argmax class (ties to the lower class), tooth classes
/// only, ascending class id; empty classes are omitted.
std::vector<Subgroup> partition_subgroups(const Prediction& pred);

/// Keeps points with confidence strictly above `tau`, preserving order.
Subgroup filter_confident(const Subgroup& subgroup, std::span<const double> confidence, double tau);

/// One prompt per subgroup and camera: the projection of the subgroup's mean
/// position rounded to the nearest pixel. Empty, off-image and behind-camera
/// subgroups are recorded in `dropped`.
PromptSet generate_prompts(std::span<const Subgroup> subgroups, const LabeledScan& scan,
                           std::span<const Camera> cameras);

/// Confidence-filtered prompts: filter every subgroup at `tau`, then project.
PromptSet generate_prompts_cpg(std::span<const Subgroup> subgroups, std::span<const double> confidence,
                               double tau, const LabeledScan& scan, std::span<const Camera> cameras);

/// Plain aggregation: the unfiltered subgroups are projected directly.
PromptSet generate_prompts_agg(std::span<const Subgroup> subgroups, const LabeledScan& scan,
                               std::span<const Camera> cameras);

/// Plain-text prompt table with a `view_id class_id u v` header.
void write_prompt_table(const std::filesystem::path& path, const PromptSet& prompts);
std::vector<Prompt> read_prompt_table(const std::filesystem::path& path);

} // namespace ws3d
