#include <ws3d/mrl.hpp>

#include <algorithm>
#include <limits>
#include <map>
#include <random>

#include <ws3d/errors.hpp>

namespace ws3d {

namespace {

void check_dims(const MaskSet& masks, const RenderedView& view)
{
    if (masks.height != view.height() || masks.width != view.width())
        throw DataError("mask set dimensions differ from the rendered view");
    for (const auto& m : masks.masks)
        if (m.mask.height != view.height() || m.mask.width != view.width())
            throw DataError("mask dimensions differ from the rendered view");
}

} // namespace

std::vector<FgGroup> reproject_mask_groups(const MaskSet& masks, const RenderedView& view)
{
    check_dims(masks, view);
    const int h = view.height(), w = view.width();

    // Which masks claim each point, and the point's pixel centroid.
    std::map<std::size_t, std::vector<std::size_t>> claims;
    for (std::size_t m = 0; m < masks.masks.size(); ++m) {
        const BinaryMask& mask = masks.masks[m].mask;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!mask.at(y, x))
                    continue;
                const std::int32_t idx = view.point_index[view.pixel(y, x)];
                if (idx < 0)
                    continue;
                auto& owners = claims[static_cast<std::size_t>(idx)];
                if (owners.empty() || owners.back() != m)
                    owners.push_back(m);
            }
    }
    std::map<std::size_t, std::pair<double, double>> centroid;
    {
        std::map<std::size_t, std::size_t> hits;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::int32_t idx = view.point_index[view.pixel(y, x)];
                if (idx < 0)
                    continue;
                const auto i = static_cast<std::size_t>(idx);
                if (!claims.contains(i))
                    continue;
                auto& c = centroid[i];
                c.first += y;
                c.second += x;
                ++hits[i];
            }
        for (auto& [i, c] : centroid) {
            c.first /= static_cast<double>(hits[i]);
            c.second /= static_cast<double>(hits[i]);
        }
    }

    std::vector<FgGroup> groups(masks.masks.size());
    for (std::size_t m = 0; m < masks.masks.size(); ++m)
        groups[m].class_id = masks.masks[m].class_id;
    for (const auto& [idx, owners] : claims) {
        std::size_t winner = owners.front();
        if (owners.size() > 1) {
            const auto [cy, cx] = centroid[idx];
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t m : owners) {
                const OracleMask& om = masks.masks[m];
                const double d = (om.prompt_v - cy) * (om.prompt_v - cy) + (om.prompt_u - cx) * (om.prompt_u - cx);
                if (d < best || (d == best && om.class_id < masks.masks[winner].class_id)) {
                    best = d;
                    winner = m;
                }
            }
        }
        groups[winner].indices.push_back(idx);
    }
    return groups;
}

std::vector<std::size_t> reproject_background(const BinaryMask& background, const RenderedView& view,
                                              std::span<const FgGroup> fg_groups)
{
    if (background.height != view.height() || background.width != view.width())
        throw DataError("background mask dimensions differ from the rendered view");
    std::vector<std::size_t> out;
    for (int y = 0; y < view.height(); ++y)
        for (int x = 0; x < view.width(); ++x) {
            if (!background.at(y, x))
                continue;
            const std::int32_t idx = view.point_index[view.pixel(y, x)];
            if (idx >= 0)
                out.push_back(static_cast<std::size_t>(idx));
        }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    std::vector<std::size_t> fg;
    for (const FgGroup& g : fg_groups)
        fg.insert(fg.end(), g.indices.begin(), g.indices.end());
    std::sort(fg.begin(), fg.end());
    std::vector<std::size_t> result;
    std::set_difference(out.begin(), out.end(), fg.begin(), fg.end(), std::back_inserter(result));
    return result;
}

ReprojectedGroups reproject_view(const MaskSet& masks, const RenderedView& view)
{
    ReprojectedGroups out;
    out.fg_groups = reproject_mask_groups(masks, view);
    out.bg_indices = reproject_background(background_mask(masks), view, out.fg_groups);
    return out;
}

ReprojectedGroups merge_views(std::span<const ReprojectedGroups> views)
{
    std::map<std::size_t, int> owner; // point -> class, first view wins
    std::vector<int> class_order;
    for (const ReprojectedGroups& v : views)
        for (const FgGroup& g : v.fg_groups) {
            if (std::find(class_order.begin(), class_order.end(), g.class_id) == class_order.end())
                class_order.push_back(g.class_id);
            for (std::size_t i : g.indices)
                owner.emplace(i, g.class_id);
        }
    std::sort(class_order.begin(), class_order.end());
    ReprojectedGroups out;
    for (int c : class_order)
        out.fg_groups.push_back({c, {}});
    for (const auto& [idx, c] : owner) {
        const auto it = std::lower_bound(class_order.begin(), class_order.end(), c);
        out.fg_groups[static_cast<std::size_t>(it - class_order.begin())].indices.push_back(idx);
    }
    std::vector<std::size_t> bg;
    for (const ReprojectedGroups& v : views)
        for (std::size_t i : v.bg_indices)
            if (!owner.contains(i))
                bg.push_back(i);
    std::sort(bg.begin(), bg.end());
    bg.erase(std::unique(bg.begin(), bg.end()), bg.end());
    out.bg_indices = std::move(bg);
    return out;
}

GroupFeatures gather_group_embeddings(const Prediction& pred, const ReprojectedGroups& groups,
                                      std::size_t cap, std::uint64_t seed)
{
    if (cap == 0)
        throw ConfigError("subgroup cap must be >= 1");
    const std::size_t n = pred.embedding.rows(), dim = pred.embedding.cols();
    std::mt19937_64 rng(seed);
    GroupFeatures out;
    for (const FgGroup& g : groups.fg_groups) {
        if (g.indices.empty())
            continue;
        std::vector<std::size_t> idx = g.indices;
        if (idx.size() > cap) {
            for (std::size_t j = 0; j < cap; ++j) {
                std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
                std::swap(idx[j], idx[pick(rng)]);
            }
            idx.resize(cap);
            std::sort(idx.begin(), idx.end());
        }
        Matrix f(idx.size(), dim);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] >= n)
                throw std::out_of_range("group index outside the prediction");
            const auto src = pred.embedding.row(idx[r]);
            std::copy(src.begin(), src.end(), f.row(r).begin());
        }
        out.class_ids.push_back(g.class_id);
        out.indices.push_back(std::move(idx));
        out.features.push_back(std::move(f));
    }
    for (std::size_t i : groups.bg_indices)
        if (i >= pred.size())
            throw std::out_of_range("background index outside the prediction");
    out.bg_indices = groups.bg_indices;
    return out;
}

std::vector<GroupPurity> fg_purity(const ReprojectedGroups& groups, const LabeledScan& scan)
{
    std::vector<GroupPurity> out;
    for (const FgGroup& g : groups.fg_groups) {
        GroupPurity p{g.class_id, g.indices.size(), 0};
        for (std::size_t i : g.indices)
            if (scan.instance_ids[i] == g.class_id)
                ++p.matching;
        out.push_back(p);
    }
    return out;
}

GroupPurity bg_purity(const ReprojectedGroups& groups, const LabeledScan& scan)
{
    GroupPurity p{0, groups.bg_indices.size(), 0};
    for (std::size_t i : groups.bg_indices)
        if (scan.class_labels[i] == 0)
            ++p.matching;
    return p;
}

} // namespace ws3d
