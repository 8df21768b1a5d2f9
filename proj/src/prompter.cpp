#include <ws3d/prompter.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include <ws3d/errors.hpp>

namespace ws3d {

std::string to_string(DropReason reason)
{
    switch (reason) {
    case DropReason::EmptyAfterFilter: return "empty_after_filter";
    case DropReason::ProjectedOutOfBounds: return "projected_out_of_bounds";
    case DropReason::BehindCamera: return "behind_camera";
    }
    return "unknown";
}

std::vector<Prompt> PromptSet::for_view(int view_id) const
{
    std::vector<Prompt> out;
    for (const Prompt& p : prompts)
        if (p.view_id == view_id)
            out.push_back(p);
    return out;
}

std::vector<Subgroup> partition_subgroups(const Prediction& pred)
{
    const std::size_t classes = pred.logits.cols();
    std::vector<std::vector<std::size_t>> members(classes);
    for (std::size_t i = 0; i < pred.logits.rows(); ++i) {
        const auto row = pred.logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (row[c] > row[best])
                best = c;
        members[best].push_back(i);
    }
    std::vector<Subgroup> out;
    for (std::size_t c = 1; c < classes; ++c)
        if (!members[c].empty())
            out.push_back({static_cast<int>(c), std::move(members[c])});
    return out;
}

Subgroup filter_confident(const Subgroup& subgroup, std::span<const double> confidence, double tau)
{
    Subgroup out{subgroup.class_id, {}};
    for (std::size_t i : subgroup.indices)
        if (confidence[i] > tau)
            out.indices.push_back(i);
    return out;
}

PromptSet generate_prompts(std::span<const Subgroup> subgroups, const LabeledScan& scan,
                           std::span<const Camera> cameras)
{
    PromptSet out;
    for (std::size_t view = 0; view < cameras.size(); ++view) {
        const Camera& cam = cameras[view];
        const int view_id = static_cast<int>(view);
        for (const Subgroup& g : subgroups) {
            if (g.indices.empty()) {
                out.dropped.push_back({view_id, g.class_id, DropReason::EmptyAfterFilter});
                continue;
            }
            Vec3 mean;
            for (std::size_t i : g.indices)
                mean += scan.positions[i];
            mean *= 1.0 / static_cast<double>(g.indices.size());
            const auto proj = try_project(mean, cam);
            if (!proj) {
                out.dropped.push_back({view_id, g.class_id, DropReason::BehindCamera});
                continue;
            }
            const double u = std::round(proj->u), v = std::round(proj->v);
            if (!(u >= 0.0 && v >= 0.0 && u < cam.width && v < cam.height)) {
                out.dropped.push_back({view_id, g.class_id, DropReason::ProjectedOutOfBounds});
                continue;
            }
            out.prompts.push_back({view_id, g.class_id, static_cast<int>(u), static_cast<int>(v)});
        }
    }
    return out;
}

PromptSet generate_prompts_cpg(std::span<const Subgroup> subgroups, std::span<const double> confidence,
                               double tau, const LabeledScan& scan, std::span<const Camera> cameras)
{
    std::vector<Subgroup> filtered;
    filtered.reserve(subgroups.size());
    for (const Subgroup& g : subgroups)
        filtered.push_back(filter_confident(g, confidence, tau));
    return generate_prompts(filtered, scan, cameras);
}

PromptSet generate_prompts_agg(std::span<const Subgroup> subgroups, const LabeledScan& scan,
                               std::span<const Camera> cameras)
{
    return generate_prompts(subgroups, scan, cameras);
}

void write_prompt_table(const std::filesystem::path& path, const PromptSet& prompts)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << "view_id class_id u v\n";
    for (const Prompt& p : prompts.prompts)
        out << p.view_id << ' ' << p.class_id << ' ' << p.u << ' ' << p.v << '\n';
}

std::vector<Prompt> read_prompt_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path.string());
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line) || line != "view_id class_id u v")
        throw FormatError("prompt table: missing header", 0);
    offset += line.size() + 1;
    std::vector<Prompt> out;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            std::istringstream ls(line);
            Prompt p;
            std::string extra;
            if (!(ls >> p.view_id >> p.class_id >> p.u >> p.v) || (ls >> extra))
                throw FormatError("prompt table: malformed row '" + line + "'", offset);
            out.push_back(p);
        }
        offset += line.size() + 1;
    }
    return out;
}

} // namespace ws3d
