#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <omp.h>

#include "seqfake/error.hpp"
#include "seqfake/train/checkpoint.hpp"
#include "seqfake/train/trainer.hpp"

using namespace seqfake;
namespace fs = std::filesystem;

namespace {

train::RunConfig tiny_run() {
    train::RunConfig c;
    c.model.image_size = 64;
    c.model.width = 16;
    c.model.heads = 2;
    c.model.ffn_hidden = 32;
    c.model.backbone_channels = {4, 8, 8};
    c.model.projection_dim = 8;
    c.epochs = 2;
    c.warmup_epochs = 1;
    c.milestones = {1};
    c.batch_size = 8;
    c.seed = 3;
    return c;
}

struct Fixture {
    fs::path dir;
    synth::Manifest manifest;
    train::ImageSet train, val;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture x;
        x.dir = fs::temp_directory_path() / "seqfake_test_train";
        fs::remove_all(x.dir);
        synth::DatasetConfig cfg;
        cfg.count = 40;
        cfg.image_size = 64;
        x.manifest = synth::generate_dataset(cfg, 4, x.dir / "data");
        x.train = train::load_split(x.manifest, x.dir / "data", synth::Split::train);
        x.val = train::load_split(x.manifest, x.dir / "data", synth::Split::val);
        return x;
    }();
    return f;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Train, ScheduleArithmetic) {
    auto c = train::preset("full");
    EXPECT_EQ(c.epochs, 170);
    EXPECT_EQ(c.optimizer, "sgd");
    EXPECT_DOUBLE_EQ(train::learning_rates(c, 0).transformer, 1e-3 / 20);
    EXPECT_DOUBLE_EQ(train::learning_rates(c, 0).backbone, 1e-4 / 20);
    EXPECT_DOUBLE_EQ(train::learning_rates(c, 19).transformer, 1e-3);
    EXPECT_DOUBLE_EQ(train::learning_rates(c, 69).transformer, 1e-3);
    EXPECT_NEAR(train::learning_rates(c, 70).transformer, 1e-4, 1e-18);
    EXPECT_NEAR(train::learning_rates(c, 120).transformer, 1e-5, 1e-19);
    EXPECT_NEAR(train::learning_rates(c, 169).backbone, 1e-6, 1e-20);

    const auto d = train::preset("desk");
    EXPECT_EQ(d.epochs, 30);
    EXPECT_EQ(d.warmup_epochs, 4);
    EXPECT_EQ(d.milestones, (std::vector<int>{15, 24}));
    EXPECT_EQ(d.batch_size, 32);
    EXPECT_DOUBLE_EQ(train::learning_rates(d, 0).transformer, d.lr_transformer / 4);
    EXPECT_NEAR(train::learning_rates(d, 15).transformer, 0.1 * train::learning_rates(d, 14).transformer, 1e-18);
    EXPECT_THROW(train::preset("huge"), ConfigError);
}

TEST(Train, ConfigValidationAndJson) {
    auto c = tiny_run();
    c.warmup_epochs = c.epochs;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_run();
    c.lr_backbone = 0;
    EXPECT_THROW(c.validate(), ConfigError);

    c = tiny_run();
    c.model.kind = model::ModelKind::seqfakeformer_pp;
    c.model.ism = false;
    const nlohmann::json j = c;
    const auto back = j.get<train::RunConfig>();
    EXPECT_EQ(nlohmann::json(back), j);

    // Missing keys fall back to the named preset.
    const auto partial = nlohmann::json::parse(R"({"preset": "full", "seed": 9, "model": {"width": 64}})").get<train::RunConfig>();
    EXPECT_EQ(partial.epochs, 170);
    EXPECT_EQ(partial.seed, 9u);
    EXPECT_EQ(partial.model.width, 64);
    EXPECT_EQ(partial.model.heads, 4);
}

TEST(Train, EmptySplitIsADataError) {
    const auto& f = fixture();
    synth::Manifest m = f.manifest;
    std::erase_if(m.records, [](const synth::DatasetRecord& r) { return r.split == synth::Split::val; });
    EXPECT_THROW(train::load_split(m, f.dir / "data", synth::Split::val), DataError);
    auto cfg = tiny_run();
    model::Model<float> model(cfg.model, f.manifest.vocabulary(), 0);
    EXPECT_THROW(train::train(cfg, model, f.train, train::ImageSet{64, {}, {}, {}}, f.dir / "empty"), DataError);
}

TEST(Train, DeterministicAndCheckpointsRoundTrip) {
    const auto& f = fixture();
    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    auto cfg = tiny_run();
    cfg.model.kind = model::ModelKind::seqfakeformer_pp;
    model::Model<float> a(cfg.model, f.manifest.vocabulary(), cfg.seed), b(cfg.model, f.manifest.vocabulary(), cfg.seed);
    const auto ra = train::train(cfg, a, f.train, f.val, f.dir / "run_a");
    train::train(cfg, b, f.train, f.val, f.dir / "run_b");
    omp_set_num_threads(threads);
    for (std::size_t i = 0; i < a.store().params().size(); ++i) {
        EXPECT_EQ(a.store().params()[i]->value, b.store().params()[i]->value) << a.store().params()[i]->name;
    }
    EXPECT_EQ(slurp(f.dir / "run_a" / "last.ckpt"), slurp(f.dir / "run_b" / "last.ckpt"));

    ASSERT_EQ(ra.history.size(), 2u);
    std::ifstream log(f.dir / "run_a" / "log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j.contains("epoch") && j.contains("lr") && j.contains("losses") && j.at("val").contains("adaptive_acc"));
        ++lines;
    }
    EXPECT_EQ(lines, 2);

    // save -> load -> save is byte-identical, and restore reproduces the best model.
    const auto ck = train::load_checkpoint(f.dir / "run_a" / "best.ckpt");
    EXPECT_EQ(ck.best_epoch, ra.best_epoch);
    EXPECT_DOUBLE_EQ(ck.best_metric, ra.best_val_adaptive);
    train::save_checkpoint(ck, f.dir / "again.ckpt");
    EXPECT_EQ(slurp(f.dir / "run_a" / "best.ckpt"), slurp(f.dir / "again.ckpt"));
    EXPECT_FALSE(ck.sharing.empty());
    model::Model<float> c(cfg.model, f.manifest.vocabulary(), 99);
    train::restore(ck, c);
    for (std::size_t i = 0; i < a.store().params().size(); ++i) {
        EXPECT_EQ(a.store().params()[i]->value, c.store().params()[i]->value);
    }
    EXPECT_DOUBLE_EQ(train::evaluate(c, f.val, 64).adaptive_acc, ra.best_val_adaptive);

    auto other = cfg.model;
    other.width = 32;
    model::Model<float> wrong(other, f.manifest.vocabulary(), 0);
    EXPECT_THROW(train::restore(ck, wrong), IncompatibleError);
}

TEST(Train, MetricReportCounts) {
    const auto& f = fixture();
    auto cfg = tiny_run();
    model::Model<float> m(cfg.model, f.manifest.vocabulary(), 1);
    const auto r = train::evaluate(m, f.val, 3);
    EXPECT_EQ(r.samples, f.val.count());
    std::size_t total = 0;
    for (const auto& row : r.per_type) total += row.count;
    EXPECT_EQ(total, f.val.count());
    EXPECT_GE(r.fixed_acc, 0.0);
    EXPECT_LE(r.fixed_acc, 1.0);
}
