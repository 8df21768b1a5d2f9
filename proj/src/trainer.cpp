#include <ws3d/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <omp.h>

#include <ws3d/errors.hpp>

namespace ws3d {

void TrainConfig::validate() const
{
    if (epochs < 1 || batch_size < 1)
        throw ConfigError("epochs and batch_size must be positive");
    if (!(learning_rate > 0.0))
        throw ConfigError("learning_rate must be > 0");
    if (!(weight_decay >= 0.0))
        throw ConfigError("weight_decay must be >= 0");
    loss.validate();
    oracle.noise.validate();
    if (oracle.kind == OracleKind::External && oracle.command.empty())
        throw ConfigError("external oracle requires a command");
    if (views < 1 || image_height < 1 || image_width < 1 || splat_radius < 0)
        throw ConfigError("invalid rendering settings");
    if (subgroup_cap < 1 || mask_refresh < 1 || labels_per_tooth < 1 || planted_outliers < 0)
        throw ConfigError("invalid MRL settings");
    if (!(planted_confidence > 0.0 && planted_confidence < 1.0))
        throw ConfigError("planted_confidence must lie in (0, 1)");
}

NetworkDims TrainConfig::dims(int num_classes) const
{
    NetworkDims d;
    d.classes = num_classes;
    d.hidden = hidden;
    d.embed = embed;
    d.conf_hidden = conf_hidden;
    d.knn = knn;
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------

Dataset Dataset::prepare(std::vector<LabeledScan> scans, std::vector<std::string> ids,
                         const TrainConfig& cfg, std::uint64_t label_seed)
{
    if (ids.size() != scans.size())
        throw DataError("dataset ids and scans differ in count");
    Dataset data;
    data.m_samples.resize(scans.size());
    std::vector<std::exception_ptr> errors(scans.size());
    const auto n = static_cast<std::ptrdiff_t>(scans.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        try {
            auto sample = std::make_shared<TrainingSample>();
            sample->id = ids[s];
            sample->scan = std::move(scans[s]);
            sample->scan.validate();
            sample->sparse = sample_sparse_labels(sample->scan, cfg.labels_per_tooth, label_seed + s);
            sample->input = prepare_input(sample->scan, cfg.knn);
            sample->cameras = default_cameras(sample->scan, cfg.views, cfg.image_height, cfg.image_width);
            for (const Camera& cam : sample->cameras)
                sample->views.push_back(render(sample->scan, cam, cfg.splat_radius));
            data.m_samples[s] = std::move(sample);
        } catch (...) {
            errors[s] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    if (!data.m_samples.empty()) {
        const int k = data.m_samples.front()->scan.num_classes;
        for (const auto& s : data.m_samples)
            if (s->scan.num_classes != k)
                throw DataError("scans in one dataset must share the class count");
    }
    return data;
}

std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw DataError("dataset directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ws3d")
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Dataset Dataset::load_dir(const std::filesystem::path& dir, const TrainConfig& cfg, std::uint64_t label_seed)
{
    std::vector<LabeledScan> scans;
    std::vector<std::string> ids;
    for (const auto& p : list_scans(dir)) {
        scans.push_back(load_scan(p));
        ids.push_back(p.stem().string());
    }
    if (scans.empty())
        throw DataError("no .ws3d scans in " + dir.string());
    return prepare(std::move(scans), std::move(ids), cfg, label_seed);
}

int Dataset::num_classes() const
{
    if (m_samples.empty())
        throw DataError("empty dataset");
    return m_samples.front()->scan.num_classes;
}

// ---------------------------------------------------------------------------

std::unique_ptr<MaskOracle> make_oracle(const OracleSettings& settings)
{
    if (settings.kind == OracleKind::External)
        return std::make_unique<ExternalOracle>(settings.command, settings.workdir);
    return std::make_unique<GtOracle>(settings.noise);
}

void plant_outliers(std::vector<Subgroup>& subgroups, std::vector<double>& confidence,
                    const LabeledScan& scan, int per_group, double confidence_value,
                    double min_distance, std::uint64_t seed)
{
    if (per_group <= 0)
        return;
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> used(scan.size(), 0);
    for (Subgroup& g : subgroups) {
        if (g.indices.empty())
            continue;
        Vec3 mean;
        for (std::size_t i : g.indices)
            mean += scan.positions[i];
        mean *= 1.0 / static_cast<double>(g.indices.size());
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < scan.size(); ++i)
            if (scan.class_labels[i] == 0 && !used[i] && norm(scan.positions[i] - mean) > min_distance)
                pool.push_back(i);
        const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(per_group));
        for (std::size_t j = 0; j < take; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
            std::swap(pool[j], pool[pick(rng)]);
            const std::size_t idx = pool[j];
            used[idx] = 1;
            confidence[idx] = confidence_value;
            // A point sits in exactly one subgroup.
            for (Subgroup& other : subgroups)
                std::erase(other.indices, idx);
            g.indices.push_back(idx);
        }
        std::sort(g.indices.begin(), g.indices.end());
    }
}

PromptInputs prompt_inputs(const Prediction& pred, const LabeledScan& scan, int planted_outliers,
                           double planted_confidence, std::uint64_t seed)
{
    PromptInputs in{partition_subgroups(pred), pred.confidence};
    constexpr double kOutlierMinDistance = 8.0;
    plant_outliers(in.subgroups, in.confidence, scan, planted_outliers, planted_confidence,
                   kOutlierMinDistance, seed);
    return in;
}

MrlTargets build_mrl_targets(const TrainingSample& sample, const Prediction& pred,
                             const TrainConfig& cfg, MaskOracle& oracle, std::uint64_t seed)
{
    MrlTargets out;
    const PromptInputs in = prompt_inputs(pred, sample.scan, cfg.planted_outliers,
                                          cfg.planted_confidence, seed);
    out.prompts = cfg.prompt_mode == PromptMode::Cpg
                      ? generate_prompts_cpg(in.subgroups, in.confidence, cfg.loss.tau, sample.scan,
                                             sample.cameras)
                      : generate_prompts_agg(in.subgroups, sample.scan, sample.cameras);
    std::vector<ReprojectedGroups> per_view;
    for (std::size_t v = 0; v < sample.views.size(); ++v) {
        const auto prompts = out.prompts.for_view(static_cast<int>(v));
        // Without a single foreground mask the background would be the whole
        // view, teeth included; such views constrain nothing.
        if (prompts.empty())
            continue;
        const MaskSet masks = oracle.segment(sample.views[v], sample.scan, static_cast<int>(v), prompts);
        ++out.oracle_calls;
        if (std::none_of(masks.masks.begin(), masks.masks.end(),
                         [](const OracleMask& m) { return m.mask.count() > 0; }))
            continue;
        per_view.push_back(reproject_view(masks, sample.views[v]));
    }
    if (cfg.union_views && per_view.size() > 1)
        out.groups.push_back(merge_views(per_view));
    else
        out.groups = std::move(per_view);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0)
{
    std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull) * 0xBF58476D1CE4E5B9ull ^
                      (c + 0x94D049BB133111EBull) * 0x2545F4914F6CDD1Dull;
    x ^= x >> 31;
    x *= 0xD6E8FEB86659FD93ull;
    x ^= x >> 29;
    return x;
}

struct CachedTargets {
    int epoch = 0;
    MrlTargets targets;
};

struct ScanStep {
    LossReport report;
    std::vector<double> grads;
    std::size_t prompts = 0;
    std::size_t dropped = 0;
};

ScanStep scan_step(const TrainingSample& sample, const Prediction& pred, const ForwardTape& tape,
                   const NetworkParams& params, const TrainConfig& cfg, int epoch,
                   const MrlTargets* targets, std::uint64_t gather_seed)
{
    const LossConfig& lc = cfg.loss;
    LossValue coseg = coseg_loss(pred, sample.scan.class_labels, sample.sparse, lc.coseg_norm);
    LossParts parts{coseg.value, 0.0, 0.0};
    PredictionGrad grad = std::move(coseg.grad);
    const LossReport gates = total_loss(parts, epoch, lc);
    grad.scale(gates.coseg_weight);

    ScanStep step;
    if (targets && (gates.fg_weight > 0.0 || gates.bg_weight > 0.0)) {
        step.prompts = targets->prompts.prompts.size();
        step.dropped = targets->prompts.dropped.size();
        const double share = 1.0 / static_cast<double>(std::max<std::size_t>(1, targets->groups.size()));
        for (std::size_t t = 0; t < targets->groups.size(); ++t) {
            const GroupFeatures feats = gather_group_embeddings(pred, targets->groups[t], cfg.subgroup_cap,
                                                                mix_seed(gather_seed, t));
            if (gates.fg_weight > 0.0) {
                const ContrastiveResult fg = contrastive_fg(feats.features, lc.temperature);
                parts.fg += share * fg.value;
                if (!fg.degenerate) {
                    if (grad.embedding.empty())
                        grad.embedding = Matrix(pred.embedding.rows(), pred.embedding.cols());
                    const double w = gates.fg_weight * share;
                    for (std::size_t g = 0; g < feats.features.size(); ++g)
                        for (std::size_t r = 0; r < feats.indices[g].size(); ++r) {
                            auto dst = grad.embedding.row(feats.indices[g][r]);
                            const auto src = fg.grads[g].row(r);
                            for (std::size_t d = 0; d < dst.size(); ++d)
                                dst[d] += w * src[d];
                        }
                }
            }
            if (gates.bg_weight > 0.0) {
                LossValue bg = background_loss(pred, feats.bg_indices);
                parts.bg += share * bg.value;
                if (!bg.degenerate)
                    grad += bg.grad.scale(gates.bg_weight * share);
            }
        }
    }
    step.report = total_loss(parts, epoch, lc);
    step.grads = backward(tape, params, grad);
    return step;
}

void dump_state(const std::filesystem::path& dir, const NetworkParams& params, int epoch,
                std::size_t batch, const std::string& scan_id, const LossReport& r)
{
    std::filesystem::create_directories(dir);
    save_params(params, dir / "params_at_divergence.wsnn");
    std::ofstream out(dir / "divergence.txt", std::ios::trunc);
    out << std::setprecision(17) << "epoch " << epoch << "\nbatch " << batch << "\nscan " << scan_id
        << "\ncoseg " << r.coseg << "\nfg " << r.fg << "\nbg " << r.bg << "\ntotal " << r.total << '\n';
}

void zero_confidence_head(const NetworkParams& params, std::vector<double>& grads)
{
    for (Layer layer : {Layer::ConfHidden, Layer::ConfOut}) {
        const LayerShape& l = params.shape(layer);
        std::fill_n(grads.begin() + static_cast<std::ptrdiff_t>(l.weight_offset), l.in * l.out, 0.0);
        std::fill_n(grads.begin() + static_cast<std::ptrdiff_t>(l.bias_offset), l.out, 0.0);
    }
}

} // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks)
{
    cfg.validate();
    if (data.empty())
        throw DataError("training dataset is empty");
    TrainResult result;
    result.params = init_params(cfg.dims(data.num_classes()), cfg.seed);
    NetworkParams& params = result.params;
    AdamWState state;
    const AdamWConfig opt{cfg.learning_rate, cfg.weight_decay};
    std::unique_ptr<MaskOracle> oracle;
    std::vector<std::optional<CachedTargets>> cache(data.size());

    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5348u));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t j = order.size(); j > 1; --j) {
            std::uniform_int_distribution<std::size_t> pick(0, j - 1);
            std::swap(order[j - 1], order[pick(shuffle_rng)]);
        }
        const bool mrl = mrl_active(epoch, cfg.loss);
        if (mrl && !oracle)
            oracle = make_oracle(cfg.oracle);

        EpochSummary summary{epoch, 0, 0, 0, 0, mrl};
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            const std::size_t b = end - start;
            std::vector<Prediction> preds(b);
            std::vector<ForwardTape> tapes(b);

#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(b); ++k) {
                const auto s = static_cast<std::size_t>(k);
                preds[s] = forward(data[order[start + s]].input, params, &tapes[s]);
            }

            // Oracle queries run serially in batch order.
            std::vector<const MrlTargets*> targets(b, nullptr);
            if (mrl) {
                for (std::size_t s = 0; s < b; ++s) {
                    const std::size_t idx = order[start + s];
                    auto& slot = cache[idx];
                    if (!slot || epoch - slot->epoch >= cfg.mask_refresh) {
                        slot = CachedTargets{epoch, build_mrl_targets(data[idx], preds[s], cfg, *oracle,
                                                                      mix_seed(cfg.seed, idx, epoch))};
                        result.oracle_calls += slot->targets.oracle_calls;
                    }
                    targets[s] = &slot->targets;
                }
                for (auto& inc : oracle->take_incidents())
                    result.incidents.push_back(std::move(inc));
            }

            std::vector<ScanStep> steps(b);
            std::vector<std::exception_ptr> errors(b);
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(b); ++k) {
                const auto s = static_cast<std::size_t>(k);
                const std::size_t idx = order[start + s];
                try {
                    steps[s] = scan_step(data[idx], preds[s], tapes[s], params, cfg, epoch, targets[s],
                                         mix_seed(cfg.seed, idx, 1000003u * static_cast<std::uint64_t>(epoch)));
                } catch (...) {
                    errors[s] = std::current_exception();
                }
            }
            for (const auto& e : errors)
                if (e)
                    std::rethrow_exception(e);

            // Ordered reduction: mean gradient over the batch.
            std::vector<double> grads(params.size(), 0.0);
            double labeled_ce = 0.0;
            std::size_t labeled = 0;
            for (std::size_t s = 0; s < b; ++s) {
                const TrainingSample& sample = data[order[start + s]];
                for (std::size_t i : sample.sparse.labeled_indices)
                    labeled_ce += cross_entropy(preds[s].logits.row(i), sample.scan.class_labels[i]);
                labeled += sample.sparse.labeled_indices.size();
                const LossReport& r = steps[s].report;
                const bool finite_grads = std::all_of(steps[s].grads.begin(), steps[s].grads.end(),
                                                      [](double v) { return std::isfinite(v); });
                if (!std::isfinite(r.total) || !finite_grads) {
                    if (hooks.dump_dir)
                        dump_state(*hooks.dump_dir, params, epoch, batch_index, sample.id, r);
                    std::ostringstream msg;
                    msg << "non-finite loss or gradient at epoch " << epoch << ", batch " << batch_index
                        << ", scan " << sample.id << " (coseg " << r.coseg << ", fg " << r.fg << ", bg "
                        << r.bg << ")";
                    throw DivergenceError(msg.str());
                }
                for (std::size_t p = 0; p < grads.size(); ++p)
                    grads[p] += steps[s].grads[p];
                result.log.push_back({epoch, sample.id, r, steps[s].prompts, steps[s].dropped});
                summary.mean_total += r.total;
                summary.mean_coseg += r.coseg;
                summary.mean_fg += r.fg;
                summary.mean_bg += r.bg;
            }
            const double inv_b = 1.0 / static_cast<double>(b);
            for (double& g : grads)
                g *= inv_b;
            // While the mean labelled CE is at or above 2(1 - floor), the
            // coseg optimum for c is the floor itself and the confidence
            // gradient only saturates the gate; the head waits.
            if (labeled > 0 && labeled_ce / static_cast<double>(labeled) >= 2.0 * (1.0 - kConfidenceFloor))
                zero_confidence_head(params, grads);
            adamw_step(params.values(), grads, state, opt);
        }
        const double inv_n = 1.0 / static_cast<double>(data.size());
        summary.mean_total *= inv_n;
        summary.mean_coseg *= inv_n;
        summary.mean_fg *= inv_n;
        summary.mean_bg *= inv_n;
        result.epochs.push_back(summary);
        if (hooks.on_epoch)
            hooks.on_epoch(summary);
    }
    return result;
}

Metrics evaluate(const NetworkParams& params, const Dataset& data, std::size_t eval_points, std::uint64_t seed)
{
    const int k = params.dims().classes;
    if (!data.empty() && data.num_classes() != k)
        throw ConfigError("checkpoint class count does not match the dataset");
    std::vector<std::vector<int>> predicted(data.size());
    std::vector<std::exception_ptr> errors(data.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.size()); ++i) {
        const auto s = static_cast<std::size_t>(i);
        try {
            const TrainingSample& sample = data[s];
            if (eval_points == 0 || eval_points >= sample.scan.size()) {
                predicted[s] = argmax_rows(forward(sample.input, params).logits);
                continue;
            }
            std::mt19937_64 rng(mix_seed(seed, s));
            std::vector<std::size_t> pick(sample.scan.size());
            for (std::size_t j = 0; j < pick.size(); ++j)
                pick[j] = j;
            for (std::size_t j = 0; j < eval_points; ++j) {
                std::uniform_int_distribution<std::size_t> d(j, pick.size() - 1);
                std::swap(pick[j], pick[d(rng)]);
            }
            pick.resize(eval_points);
            std::sort(pick.begin(), pick.end());
            LabeledScan sub;
            sub.num_classes = sample.scan.num_classes;
            for (std::size_t j : pick) {
                sub.positions.push_back(sample.scan.positions[j]);
                sub.normals.push_back(sample.scan.normals.empty() ? Vec3{} : sample.scan.normals[j]);
                sub.class_labels.push_back(sample.scan.class_labels[j]);
                sub.instance_ids.push_back(sample.scan.instance_ids[j]);
            }
            const ScanInput input = prepare_input(sub, params.dims().knn);
            const Matrix logits = forward(input, params).logits;
            predicted[s] = argmax_rows(knn_interpolate(logits, sub.positions, sample.scan.positions, 3));
        } catch (...) {
            errors[s] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    ConfusionMatrix cm(k);
    for (std::size_t s = 0; s < data.size(); ++s)
        cm.add(data[s].scan.class_labels, predicted[s]);
    const ClassBuckets buckets = ClassBuckets::dental_arch(k - 1);
    return compute_metrics(cm, &buckets);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << "epoch,scan_id,coseg,fg,bg,total,fg_active,bg_active\n" << std::setprecision(17);
    for (const LossRow& r : rows)
        out << r.epoch << ',' << r.scan_id << ',' << r.report.coseg << ',' << r.report.fg << ','
            << r.report.bg << ',' << r.report.total << ',' << (r.report.fg_active ? 1 : 0) << ','
            << (r.report.bg_active ? 1 : 0) << '\n';
}

void write_metrics_csv(const std::filesystem::path& path, const Metrics& m)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << "metric,value\n" << std::setprecision(17);
    out << "mIoU," << m.miou << "\nDSC," << m.dsc_mean << "\nAcc," << m.accuracy << '\n';
    for (const auto& [name, v] : m.bucket_iou)
        out << "IoU_" << name << ',' << v << '\n';
    for (std::size_t c = 0; c < m.iou.size(); ++c)
        if (!std::isnan(m.iou[c]))
            out << "IoU_class_" << c << ',' << m.iou[c] << '\n';
}

} // namespace ws3d
