#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <ws3d/errors.hpp>
#include <ws3d/trainer.hpp>

#include "support.hpp"

using namespace ws3d;

namespace {

TrainConfig tiny_config()
{
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 2;
    c.learning_rate = 2e-3;
    c.hidden = 16;
    c.embed = 8;
    c.conf_hidden = 8;
    c.knn = 8;
    c.image_height = 64;
    c.image_width = 64;
    c.subgroup_cap = 16;
    c.loss.warmup_epochs = 2;
    return c;
}

Dataset tiny_data(const TrainConfig& cfg, int count = 3)
{
    std::vector<LabeledScan> scans;
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
        scans.push_back(test::small_scan(static_cast<std::uint64_t>(40 + i)));
        ids.push_back("s" + std::to_string(i));
    }
    return Dataset::prepare(std::move(scans), std::move(ids), cfg, 7);
}

} // namespace

TEST(Trainer, ZeroMrlWeightsEqualWarmupOnlyRun)
{
    TrainConfig off = tiny_config();
    off.loss.lambda2 = 0.0;
    off.loss.lambda3 = 0.0;
    TrainConfig late = tiny_config();
    late.loss.warmup_epochs = late.epochs;
    const Dataset data = tiny_data(off);
    const TrainResult a = train(data, off);
    const TrainResult b = train(data, late);
    EXPECT_EQ(a.oracle_calls, 0u);
    EXPECT_EQ(b.oracle_calls, 0u);
    EXPECT_EQ(a.params, b.params);
    for (const EpochSummary& e : b.epochs)
        EXPECT_FALSE(e.mrl_active);
}

TEST(Trainer, MrlQueriesOracleAfterWarmup)
{
    const TrainConfig cfg = tiny_config();
    const Dataset data = tiny_data(cfg);
    const TrainResult r = train(data, cfg);
    ASSERT_EQ(r.epochs.size(), 4u);
    EXPECT_FALSE(r.epochs[1].mrl_active);
    EXPECT_TRUE(r.epochs[2].mrl_active);
    // One view per scan, queried every epoch at most once.
    EXPECT_LE(r.oracle_calls, 2u * data.size());
    for (const LossRow& row : r.log) {
        if (row.epoch <= 2) {
            EXPECT_FALSE(row.report.fg_active);
            EXPECT_EQ(row.report.fg, 0.0);
        }
        EXPECT_TRUE(std::isfinite(row.report.total));
    }
    EXPECT_EQ(r.log.size(), 4u * data.size());
}

TEST(Trainer, MaskRefreshCachesTargets)
{
    TrainConfig cfg = tiny_config();
    cfg.epochs = 6;
    cfg.mask_refresh = 100;
    const Dataset data = tiny_data(cfg);
    const TrainResult cached = train(data, cfg);
    cfg.mask_refresh = 1;
    const TrainResult fresh = train(data, cfg);
    EXPECT_LE(cached.oracle_calls, data.size());
    EXPECT_GE(fresh.oracle_calls, cached.oracle_calls);
}

TEST(Trainer, Deterministic)
{
    const TrainConfig cfg = tiny_config();
    const Dataset data = tiny_data(cfg);
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.oracle_calls, b.oracle_calls);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i)
        EXPECT_EQ(a.log[i].report.total, b.log[i].report.total);

    TrainConfig other = cfg;
    other.seed = 1;
    EXPECT_NE(train(data, other).params, a.params);
}

// With 14 teeth the labelled cross-entropy at initialization is about
// ln 15, above 2 (1 - floor); the confidence head then only sees weight decay.
TEST(Trainer, ConfidenceHeadHeldWhileCrossEntropyHigh)
{
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    cfg.batch_size = 8;
    std::vector<LabeledScan> scans{test::default_scan(1), test::default_scan(2)};
    const Dataset data = Dataset::prepare(std::move(scans), {"a", "b"}, cfg, 7);
    const TrainResult r = train(data, cfg);
    const NetworkParams init = init_params(cfg.dims(data.num_classes()), cfg.seed);
    const double lr = cfg.learning_rate, wd = cfg.weight_decay;
    for (Layer layer : {Layer::ConfHidden, Layer::ConfOut}) {
        const LayerShape& s = init.shape(layer);
        for (std::size_t i = 0; i < s.in * s.out; ++i) {
            const double p = init.values()[s.weight_offset + i];
            EXPECT_EQ(r.params.values()[s.weight_offset + i], p - lr * 0.0 - lr * wd * p);
        }
    }
    // Other layers moved by the full Adam step.
    const LayerShape& seg = init.shape(Layer::SegHead);
    EXPECT_NE(r.params.values()[seg.bias_offset], init.values()[seg.bias_offset]);
}

TEST(Trainer, PlantOutliersProperties)
{
    const LabeledScan scan = test::default_scan(5);
    const Prediction pred = test::perfect_prediction(scan);
    PromptInputs in = prompt_inputs(pred, scan, 5, 0.05, 3);
    std::vector<int> seen(scan.size(), 0);
    std::size_t gingiva = 0;
    for (const Subgroup& g : in.subgroups)
        for (std::size_t i : g.indices) {
            ++seen[i];
            if (scan.class_labels[i] == 0) {
                ++gingiva;
                EXPECT_EQ(in.confidence[i], 0.05);
            }
        }
    for (int s : seen)
        EXPECT_LE(s, 1);
    EXPECT_EQ(gingiva, 5u * in.subgroups.size());
}

TEST(Trainer, BuildTargetsWithPerfectPrediction)
{
    const TrainConfig cfg = tiny_config();
    const Dataset data = tiny_data(cfg, 1);
    const TrainingSample& sample = data[0];
    const Prediction pred = test::perfect_prediction(sample.scan);
    GtOracle oracle;
    const MrlTargets t = build_mrl_targets(sample, pred, cfg, oracle, 1);
    EXPECT_EQ(t.oracle_calls, 1u);
    EXPECT_FALSE(t.prompts.prompts.empty());
    ASSERT_EQ(t.groups.size(), 1u);
    for (const GroupPurity& p : fg_purity(t.groups[0], sample.scan))
        EXPECT_EQ(p.matching, p.count);

    // Nothing above tau: no prompts, no oracle call, no targets.
    const Prediction unsure = test::perfect_prediction(sample.scan, 0.3);
    const MrlTargets none = build_mrl_targets(sample, unsure, cfg, oracle, 1);
    EXPECT_EQ(none.oracle_calls, 0u);
    EXPECT_TRUE(none.groups.empty());
}

TEST(Trainer, EvaluateBoundedAndRepeatable)
{
    const TrainConfig cfg = tiny_config();
    const Dataset data = tiny_data(cfg, 2);
    const NetworkParams params = init_params(cfg.dims(data.num_classes()), 0);
    const Metrics full = evaluate(params, data);
    EXPECT_GE(full.miou, 0.0);
    EXPECT_LE(full.miou, 1.0);
    const Metrics sub = evaluate(params, data, 100, 3);
    EXPECT_GE(sub.accuracy, 0.0);
    EXPECT_EQ(evaluate(params, data, 100, 3).miou, sub.miou);
}

TEST(Trainer, RejectsBadInput)
{
    TrainConfig cfg = tiny_config();
    EXPECT_THROW(train(Dataset{}, cfg), DataError);
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.oracle.kind = OracleKind::External;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.planted_confidence = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Trainer, LossCsvLayout)
{
    const TrainConfig cfg = tiny_config();
    const Dataset data = tiny_data(cfg, 2);
    const TrainResult r = train(data, cfg);
    test::TempDir dir("csv");
    write_loss_csv(dir / "losses.csv", r.log);
    std::ifstream in(dir / "losses.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "epoch,scan_id,coseg,fg,bg,total,fg_active,bg_active");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);)
        ++rows;
    EXPECT_EQ(rows, r.log.size());
}
