// ws3d: dataset generation, rendering, training, evaluation, ablations,
// prompt inspection and reports.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include <ws3d/config.hpp>
#include <ws3d/errors.hpp>
#include <ws3d/image_io.hpp>
#include <ws3d/manifest.hpp>
#include <ws3d/trainer.hpp>

namespace fs = std::filesystem;
using namespace ws3d;

namespace {

struct Invocation {
    std::string command;
    std::vector<std::string> argv;
};

TomlDocument load_doc(const std::string& path)
{
    return path.empty() ? TomlDocument{} : TomlDocument::load(path);
}

std::pair<int, int> parse_size(const std::string& text)
{
    int h = 0, w = 0;
    char x = 0;
    std::istringstream is(text);
    if (!(is >> h >> x >> w) || (x != 'x' && x != 'X') || h < 1 || w < 1 || !is.eof())
        throw UsageError("--size expects HxW, got '" + text + "'");
    return {h, w};
}

RunManifest manifest_for(const Invocation& inv, std::string config)
{
    RunManifest m;
    m.command = inv.command;
    m.argv = inv.argv;
    m.config_toml = std::move(config);
    return m;
}

void print_metrics(const Metrics& m)
{
    std::printf("mIoU %.4f  DSC %.4f  Acc %.4f\n", m.miou, m.dsc_mean, m.accuracy);
    for (const auto& [name, v] : m.bucket_iou)
        std::printf("  %-9s IoU %.4f\n", name.c_str(), v);
}

std::vector<fs::path> scan_inputs(const fs::path& dir)
{
    return list_scans(dir);
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string config, out;
    int count = 1;
    std::uint64_t seed = 0;
};

int run_gen(const GenArgs& a, const Invocation& inv)
{
    if (a.count < 1)
        throw UsageError("--count must be at least 1");
    JawConfig base = jaw_config_from(load_doc(a.config));
    base.seed = a.seed;
    RunManifest m = manifest_for(inv, to_toml(base));
    m.seeds["seed"] = a.seed;
    if (!a.config.empty())
        m.inputs.push_back(a.config);
    for (int i = 0; i < a.count; ++i) {
        std::ostringstream name;
        name << "scan_" << std::setw(4) << std::setfill('0') << i << ".ws3d";
        m.outputs.push_back(fs::path(a.out) / name.str());
    }
    m.write(a.out);
    double fraction = 0.0;
    for (int i = 0; i < a.count; ++i) {
        JawConfig cfg = base;
        cfg.seed = a.seed + static_cast<std::uint64_t>(i);
        const LabeledScan scan = generate_jaw(cfg);
        save_scan(scan, m.outputs[static_cast<std::size_t>(i)]);
        if (i == 0)
            fraction = labeled_fraction(scan, sample_sparse_labels(scan, 1, cfg.seed));
    }
    std::printf("wrote %d scans to %s (one label per tooth labels %.2f%% of points)\n", a.count,
                a.out.c_str(), 100.0 * fraction);
    return 0;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string scan, out, size = "128x128";
    int views = 1;
    int splat = 1;
};

int run_render(const RenderArgs& a, const Invocation& inv)
{
    const auto [h, w] = parse_size(a.size);
    if (a.views < 1 || a.splat < 0)
        throw UsageError("--views must be >= 1 and --splat >= 0");
    RunManifest m = manifest_for(inv, "");
    m.inputs.push_back(a.scan);
    for (int v = 0; v < a.views; ++v)
        for (const char* suffix : {"_label.ppm", "_depth.pgm", "_pixels.txt"})
            m.outputs.push_back(fs::path(a.out) / ("view_" + std::to_string(v) + suffix));
    m.write(a.out);
    const LabeledScan scan = load_scan(a.scan);
    const auto cameras = default_cameras(scan, a.views, h, w);
    for (int v = 0; v < a.views; ++v) {
        const RenderedView view = render(scan, cameras[static_cast<std::size_t>(v)], a.splat);
        const fs::path stem = fs::path(a.out) / ("view_" + std::to_string(v));
        write_ppm(stem.string() + "_label.ppm", label_image(view));
        write_pgm(stem.string() + "_depth.pgm", depth_image(view));
        write_pixel_map(stem.string() + "_pixels.txt", view);
    }
    std::printf("rendered %d view(s) of %s\n", a.views, a.scan.c_str());
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data, test_data, config, out;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

TrainConfig resolve_train_config(const TrainArgs& a)
{
    TrainConfig cfg = train_config_from(load_doc(a.config));
    if (a.epochs)
        cfg.epochs = *a.epochs;
    if (a.seed)
        cfg.seed = *a.seed;
    if (cfg.oracle.kind == OracleKind::External && cfg.oracle.workdir.is_relative())
        cfg.oracle.workdir = fs::path(a.out) / cfg.oracle.workdir;
    cfg.validate();
    return cfg;
}

// Trains, then writes the checkpoint, logs and test metrics into `out`.
int train_and_report(const TrainArgs& a, const TrainConfig& cfg, const Invocation& inv)
{
    const fs::path out(a.out);
    RunManifest m = manifest_for(inv, to_toml(cfg));
    m.seeds["train"] = cfg.seed;
    m.seeds["labels"] = cfg.seed;
    m.seeds["oracle_noise"] = cfg.oracle.noise.seed;
    if (!a.config.empty())
        m.inputs.push_back(a.config);
    for (const auto& p : scan_inputs(a.data))
        m.inputs.push_back(p);
    if (!a.test_data.empty())
        for (const auto& p : scan_inputs(a.test_data))
            m.inputs.push_back(p);
    m.outputs = {out / "checkpoint.wsnn", out / "losses.csv", out / "epochs.csv", out / "metrics.csv"};
    m.write(out);

    const Dataset train_set = Dataset::load_dir(a.data, cfg, cfg.seed);
    TrainHooks hooks;
    hooks.dump_dir = out / "divergence";
    std::ofstream epochs(out / "epochs.csv", std::ios::trunc);
    epochs << "epoch,coseg,fg,bg,total,mrl_active\n" << std::setprecision(17);
    hooks.on_epoch = [&](const EpochSummary& e) {
        epochs << e.epoch << ',' << e.mean_coseg << ',' << e.mean_fg << ',' << e.mean_bg << ','
               << e.mean_total << ',' << (e.mrl_active ? 1 : 0) << '\n';
        if (!a.quiet)
            std::printf("epoch %3d  total %.5f  coseg %.5f  fg %.5f  bg %.5f%s\n", e.epoch, e.mean_total,
                        e.mean_coseg, e.mean_fg, e.mean_bg, e.mrl_active ? "" : "  (warmup)");
    };
    const TrainResult result = train(train_set, cfg, hooks);
    save_params(result.params, out / "checkpoint.wsnn");
    write_loss_csv(out / "losses.csv", result.log);
    for (const auto& inc : result.incidents)
        std::fprintf(stderr, "oracle incident: prompt %d: %s\n", inc.prompt_id,
                     inc.message.c_str());

    const Dataset eval_set = a.test_data.empty() ? train_set : Dataset::load_dir(a.test_data, cfg, cfg.seed);
    const Metrics metrics = evaluate(result.params, eval_set);
    write_metrics_csv(out / "metrics.csv", metrics);
    std::printf("%s (%zu oracle calls)\n", a.test_data.empty() ? "train-set metrics" : "test metrics",
                result.oracle_calls);
    print_metrics(metrics);
    return 0;
}

int run_train(const TrainArgs& a, const Invocation& inv)
{
    return train_and_report(a, resolve_train_config(a), inv);
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    TrainArgs train;
    std::string mode;
};

// Ablation switches on top of the configured run.
void apply_mode(TrainConfig& cfg, const std::string& mode)
{
    if (mode == "baseline") {
        cfg.loss.lambda2 = 0.0;
        cfg.loss.lambda3 = 0.0;
    } else if (mode == "agg") {
        cfg.prompt_mode = PromptMode::Agg;
    } else if (mode == "cpg" || mode == "mrl") {
        cfg.prompt_mode = PromptMode::Cpg;
    } else if (mode == "fl") {
        cfg.loss.lambda3 = 0.0;
    } else if (mode == "bl") {
        cfg.loss.lambda2 = 0.0;
    } else {
        throw UsageError("unknown ablation mode '" + mode + "'");
    }
}

int run_ablate(const AblateArgs& a, const Invocation& inv)
{
    TrainConfig cfg = resolve_train_config(a.train);
    apply_mode(cfg, a.mode);
    cfg.validate();
    std::printf("ablation mode %s\n", a.mode.c_str());
    return train_and_report(a.train, cfg, inv);
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt, data, csv;
    std::size_t eval_points = 0;
    std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a, const Invocation&)
{
    const NetworkParams params = load_params(a.ckpt);
    TrainConfig cfg;
    cfg.knn = params.dims().knn;
    const Dataset data = Dataset::load_dir(a.data, cfg, a.seed);
    const Metrics metrics = evaluate(params, data, a.eval_points, a.seed);
    if (!a.csv.empty())
        write_metrics_csv(a.csv, metrics);
    print_metrics(metrics);
    return 0;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
    std::string ckpt, data, config, csv;
};

int run_inspect(const InspectArgs& a, const Invocation&)
{
    TrainConfig cfg = train_config_from(load_doc(a.config));
    const NetworkParams params = load_params(a.ckpt);
    cfg.knn = params.dims().knn;
    if (cfg.oracle.kind == OracleKind::External && cfg.oracle.workdir.is_relative())
        cfg.oracle.workdir = fs::path(a.csv).parent_path() / cfg.oracle.workdir;
    const Dataset data = Dataset::load_dir(a.data, cfg, cfg.seed);
    const auto oracle = make_oracle(cfg.oracle);

    std::ofstream out(a.csv, std::ios::trunc);
    if (!out)
        throw Error("cannot open " + a.csv + " for writing");
    out << "scan_id,view,group,class_id,count,matching,purity\n" << std::setprecision(17);
    std::size_t prompts = 0, dropped = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const TrainingSample& sample = data[s];
        const Prediction pred = forward(sample.input, params);
        const MrlTargets targets = build_mrl_targets(sample, pred, cfg, *oracle, cfg.seed + s);
        prompts += targets.prompts.prompts.size();
        dropped += targets.prompts.dropped.size();
        for (std::size_t v = 0; v < targets.groups.size(); ++v) {
            for (const GroupPurity& g : fg_purity(targets.groups[v], sample.scan))
                out << sample.id << ',' << v << ",fg," << g.class_id << ',' << g.count << ',' << g.matching
                    << ',' << g.purity() << '\n';
            const GroupPurity bg = bg_purity(targets.groups[v], sample.scan);
            out << sample.id << ',' << v << ",bg,0," << bg.count << ',' << bg.matching << ',' << bg.purity()
                << '\n';
        }
    }
    std::printf("%zu prompts issued, %zu dropped, over %zu scans\n", prompts, dropped, data.size());
    return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string run, data;
    std::string size = "240x320";
};

int run_report(const ReportArgs& a, const Invocation&)
{
    const fs::path run(a.run);
    std::ifstream in(run / "losses.csv");
    if (!in)
        throw Error("no losses.csv in " + a.run);
    std::string line;
    std::getline(in, line);
    // Epoch means over scans, in file order.
    std::map<int, std::array<double, 5>> sums;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ss, field, ','))
            f.push_back(field);
        if (f.size() < 6)
            throw FormatError("malformed losses.csv row: " + line, 0);
        auto& acc = sums[std::stoi(f[0])];
        for (int k = 0; k < 4; ++k)
            acc[static_cast<std::size_t>(k)] += std::stod(f[static_cast<std::size_t>(k) + 2]);
        acc[4] += 1.0;
    }
    std::vector<std::vector<double>> series(4);
    std::ofstream csv(run / "loss_curve.csv", std::ios::trunc);
    csv << "epoch,coseg,fg,bg,total\n" << std::setprecision(17);
    for (const auto& [epoch, acc] : sums) {
        csv << epoch;
        for (std::size_t k = 0; k < 4; ++k) {
            series[k].push_back(acc[k] / acc[4]);
            csv << ',' << acc[k] / acc[4];
        }
        csv << '\n';
    }
    const auto [h, w] = parse_size(a.size);
    write_ppm(run / "loss_curve.ppm", line_plot(series, h, w));
    write_ppm(run / "loss_total.ppm", line_plot({series[3]}, h, w));
    std::printf("wrote loss_curve.csv, loss_curve.ppm and loss_total.ppm in %s\n", a.run.c_str());

    if (!a.data.empty()) {
        const NetworkParams params = load_params(run / "checkpoint.wsnn");
        TrainConfig cfg;
        cfg.knn = params.dims().knn;
        const Metrics m = evaluate(params, Dataset::load_dir(a.data, cfg, 0));
        write_metrics_csv(run / "report_metrics.csv", m);
        std::ofstream per(run / "report_classes.csv", std::ios::trunc);
        per << "class,iou,dsc\n" << std::setprecision(17);
        for (std::size_t c = 0; c < m.iou.size(); ++c)
            per << c << ',' << m.iou[c] << ',' << m.dsc[c] << '\n';
        print_metrics(m);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weakly supervised tooth point-cloud segmentation with promptable mask oracles"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Invocation inv;
    for (int i = 0; i < argc; ++i)
        inv.argv.emplace_back(argv[i]);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate synthetic jaw scans");
    g->add_option("--config", gen.config, "TOML file with a [jaw] table")->check(CLI::ExistingFile);
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--count", gen.count, "number of scans")->default_val(1);
    g->add_option("--seed", gen.seed, "seed of the first scan; scan i uses seed + i")->default_val(0);

    RenderArgs rend;
    auto* r = app.add_subcommand("render", "render a scan to label, depth and pixel-map files");
    r->add_option("--scan", rend.scan, "scan file")->required()->check(CLI::ExistingFile);
    r->add_option("--out", rend.out, "output directory")->required();
    r->add_option("--views", rend.views, "number of default views")->default_val(1);
    r->add_option("--size", rend.size, "image size HxW")->default_val("128x128");
    r->add_option("--splat", rend.splat, "splat radius in pixels")->default_val(1);

    auto add_train_options = [](CLI::App* sub, TrainArgs& t) {
        sub->add_option("--data", t.data, "training scan directory")->required()->check(CLI::ExistingDirectory);
        sub->add_option("--test-data", t.test_data, "held-out scan directory for metrics")
            ->check(CLI::ExistingDirectory);
        sub->add_option("--config", t.config, "TOML run config")->check(CLI::ExistingFile);
        sub->add_option("--out", t.out, "run directory")->required();
        sub->add_option("--epochs", t.epochs, "override train.epochs");
        sub->add_option("--seed", t.seed, "override train.seed");
        sub->add_flag("--quiet", t.quiet, "no per-epoch output");
    };
    TrainArgs train_args;
    auto* t = app.add_subcommand("train", "train a network");
    add_train_options(t, train_args);

    AblateArgs abl;
    auto* ab = app.add_subcommand("ablate", "train one ablation setting");
    add_train_options(ab, abl.train);
    ab->add_option("--mode", abl.mode, "baseline, agg, cpg, fl, bl or mrl")
        ->required()
        ->check(CLI::IsMember({"baseline", "agg", "cpg", "fl", "bl", "mrl"}));

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
    e->add_option("--ckpt", ev.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    e->add_option("--data", ev.data, "scan directory")->required()->check(CLI::ExistingDirectory);
    e->add_option("--csv", ev.csv, "metrics CSV to write");
    e->add_option("--eval-points", ev.eval_points,
                  "subsample this many points per scan and upsample by three-neighbour interpolation");
    e->add_option("--seed", ev.seed, "subsampling seed")->default_val(0);

    InspectArgs ins;
    auto* ip = app.add_subcommand("inspect-prompts", "dump re-projected group sizes and purity");
    ip->add_option("--ckpt", ins.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    ip->add_option("--data", ins.data, "scan directory")->required()->check(CLI::ExistingDirectory);
    ip->add_option("--config", ins.config, "TOML run config")->check(CLI::ExistingFile);
    ip->add_option("--csv", ins.csv, "output CSV")->required();

    ReportArgs rep;
    auto* rp = app.add_subcommand("report", "loss curves and metric tables for a run directory");
    rp->add_option("--run", rep.run, "run directory written by train or ablate")
        ->required()
        ->check(CLI::ExistingDirectory);
    rp->add_option("--data", rep.data, "scan directory to evaluate the run's checkpoint on")
        ->check(CLI::ExistingDirectory);
    rp->add_option("--size", rep.size, "plot size HxW")->default_val("240x320");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForVersion& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 2;
    }

    try {
        if (*g) {
            inv.command = "gen";
            return run_gen(gen, inv);
        }
        if (*r) {
            inv.command = "render";
            return run_render(rend, inv);
        }
        if (*t) {
            inv.command = "train";
            return run_train(train_args, inv);
        }
        if (*ab) {
            inv.command = "ablate";
            return run_ablate(abl, inv);
        }
        if (*e) {
            inv.command = "eval";
            return run_eval(ev, inv);
        }
        if (*ip) {
            inv.command = "inspect-prompts";
            return run_inspect(ins, inv);
        }
        if (*rp) {
            inv.command = "report";
            return run_report(rep, inv);
        }
    } catch (const UsageError& err) {
        std::fprintf(stderr, "usage error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 2;
}
