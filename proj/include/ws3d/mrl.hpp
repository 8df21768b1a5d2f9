#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <ws3d/camera.hpp>
#include <ws3d/maskoracle.hpp>
#include <ws3d/matrix.hpp>
#include <ws3d/prompter.hpp>
#include <ws3d/segnet.hpp>

namespace ws3d {

/// 3D points re-projected from one oracle mask.
struct FgGroup {
    int class_id = 0;
    std::vector<std::size_t> indices;
};

struct ReprojectedGroups {
    std::vector<FgGroup> fg_groups;
    std::vector<std::size_t> bg_indices;
};

/// Maps every mask's set pixels through the view's pixel -> point table. A
/// point claimed by several masks stays with the mask whose prompt pixel is
/// nearest to the point's pixel centroid (ties: lower class id). One group
/// per mask, in mask order; groups are sorted and pairwise disjoint.
std::vector<FgGroup> reproject_mask_groups(const MaskSet& masks, const RenderedView& view);

/// Points under set background pixels that no foreground group claimed.
std::vector<std::size_t> reproject_background(const BinaryMask& background, const RenderedView& view,
                                              std::span<const FgGroup> fg_groups);

/// Foreground groups plus background set for one view and its masks.
ReprojectedGroups reproject_view(const MaskSet& masks, const RenderedView& view);

/// Per-class union across views. A point claimed by different classes in
/// different views keeps the assignment of the earliest view; background is
/// the union minus every foreground point.
ReprojectedGroups merge_views(std::span<const ReprojectedGroups> views);

/// Embedding rows for the contrastive loss and the background rows for the
/// segmentation-head loss.
struct GroupFeatures {
    std::vector<int> class_ids;
    std::vector<std::vector<std::size_t>> indices; // after subsampling
    std::vector<Matrix> features;                   // projection-head rows
    std::vector<std::size_t> bg_indices;            // rows of the logits
};

/// Groups larger than `cap` are uniformly subsampled (seeded) to `cap`
/// points; empty groups are dropped.
GroupFeatures gather_group_embeddings(const Prediction& pred, const ReprojectedGroups& groups,
                                      std::size_t cap, std::uint64_t seed);

/// Fraction of group points whose ground-truth instance matches.
struct GroupPurity {
    int class_id = 0;
    std::size_t count = 0;
    std::size_t matching = 0;
    double purity() const { return count == 0 ? 1.0 : static_cast<double>(matching) / static_cast<double>(count); }
};

std::vector<GroupPurity> fg_purity(const ReprojectedGroups& groups, const LabeledScan& scan);
GroupPurity bg_purity(const ReprojectedGroups& groups, const LabeledScan& scan);

} // namespace ws3d
