#include "seqfake/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "seqfake/error.hpp"
#include "seqfake/image.hpp"
#include "seqfake/train/checkpoint.hpp"

namespace seqfake::train {

void RunConfig::validate() const {
    model.validate();
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ConfigError("warmup must be shorter than training");
    if (!(lr_transformer > 0) || !(lr_backbone > 0)) throw ConfigError("learning rates must be positive");
    if (weight_decay < 0 || momentum < 0 || momentum >= 1) throw ConfigError("bad weight decay or momentum");
    if (optimizer != "sgd" && optimizer != "adamw") throw ConfigError("optimizer must be sgd or adamw");
    if (batch_size < 2 || eval_batch_size < 1) throw ConfigError("batch size must be >= 2");
    if (!std::is_sorted(milestones.begin(), milestones.end())) throw ConfigError("milestones must be ascending");
}

RunConfig preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") return c;
    if (name == "full") {
        c.epochs = 170;
        c.warmup_epochs = 20;
        c.milestones = {70, 120};
        c.optimizer = "sgd";
        c.lr_transformer = 1e-3;
        c.lr_backbone = 1e-4;
        c.grad_clip = 0.0;
        return c;
    }
    throw ConfigError("unknown preset: " + name);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"preset", c.preset},
                       {"model", c.model},
                       {"epochs", c.epochs},
                       {"warmup_epochs", c.warmup_epochs},
                       {"milestones", c.milestones},
                       {"lr_transformer", c.lr_transformer},
                       {"lr_backbone", c.lr_backbone},
                       {"weight_decay", c.weight_decay},
                       {"momentum", c.momentum},
                       {"optimizer", c.optimizer},
                       {"grad_clip", c.grad_clip},
                       {"batch_size", c.batch_size},
                       {"eval_batch_size", c.eval_batch_size},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    const RunConfig d = preset(j.value("preset", std::string("desk")));
    c = d;
    if (j.contains("model")) {
        nlohmann::json merged = d.model;
        merged.merge_patch(j.at("model"));
        c.model = merged.get<model::ModelConfig>();
    }
    c.epochs = j.value("epochs", d.epochs);
    c.warmup_epochs = j.value("warmup_epochs", d.warmup_epochs);
    c.milestones = j.value("milestones", d.milestones);
    c.lr_transformer = j.value("lr_transformer", d.lr_transformer);
    c.lr_backbone = j.value("lr_backbone", d.lr_backbone);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.momentum = j.value("momentum", d.momentum);
    c.optimizer = j.value("optimizer", d.optimizer);
    c.grad_clip = j.value("grad_clip", d.grad_clip);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.eval_batch_size = j.value("eval_batch_size", d.eval_batch_size);
    c.seed = j.value("seed", d.seed);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open run config: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad run config " + path.string() + ": " + e.what());
    }
    RunConfig c = j.get<RunConfig>();
    c.validate();
    return c;
}

LearningRates learning_rates(const RunConfig& cfg, int epoch) {
    double f = 1.0;
    if (epoch < cfg.warmup_epochs) f = static_cast<double>(epoch + 1) / cfg.warmup_epochs;
    for (int m : cfg.milestones) {
        if (epoch >= m) f *= 0.1;
    }
    return {cfg.lr_backbone * f, cfg.lr_transformer * f};
}

nn::Matrix<float> ImageSet::batch(const std::vector<std::size_t>& items) const {
    const Eigen::Index px = static_cast<Eigen::Index>(size) * size;
    nn::Matrix<float> out(3, px * static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::uint8_t* src = pixels.data() + items[i] * static_cast<std::size_t>(px) * 3;
        float* dst = out.data() + static_cast<Eigen::Index>(i) * px * 3;
        for (Eigen::Index k = 0; k < px * 3; ++k) dst[k] = static_cast<float>(src[k]) * (1.0f / 255.0f);
    }
    return out;
}

ImageSet load_split(const synth::Manifest& manifest, const std::filesystem::path& dir, synth::Split split) {
    const auto records = manifest.split(split);
    if (records.empty()) throw DataError("manifest has no " + std::string(synth::to_string(split)) + " records");
    ImageSet set;
    set.size = manifest.header.image_size;
    const std::size_t bytes = static_cast<std::size_t>(set.size) * set.size * 3;
    set.pixels.resize(bytes * records.size());
    set.annotations.resize(records.size());
    set.paths.resize(records.size());
    std::string failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(records.size()); ++i) {
        const auto& r = *records[static_cast<std::size_t>(i)];
        try {
            const Image img = read_png(dir / r.image_path);
            if (img.width() != set.size || img.height() != set.size) throw DataError("unexpected image size: " + r.image_path);
            const auto rgb = to_rgb8(img);
            std::copy(rgb.begin(), rgb.end(), set.pixels.begin() + static_cast<std::ptrdiff_t>(bytes) * i);
        } catch (const std::exception& e) {
#pragma omp critical
            if (failure.empty()) failure = e.what();
        }
        set.annotations[static_cast<std::size_t>(i)] = r.sequence;
        set.paths[static_cast<std::size_t>(i)] = r.image_path;
    }
    if (!failure.empty()) throw IoError(failure);
    return set;
}

Optimizer::Optimizer(const nn::ParamStore<float>& store, const RunConfig& cfg) : params_(store.params()), cfg_(cfg) {
    for (const auto& p : params_) {
        m1_.push_back(nn::Matrix<float>::Zero(p->value.rows(), p->value.cols()));
        if (cfg.optimizer == "adamw") m2_.push_back(nn::Matrix<float>::Zero(p->value.rows(), p->value.cols()));
    }
}

double Optimizer::step(const LearningRates& lr) {
    double sq = 0.0;
    for (const auto& p : params_) sq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sq);
    const float clip = (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) ? static_cast<float>(cfg_.grad_clip / norm) : 1.0f;
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        const float rate = static_cast<float>(p.group == nn::ParamGroup::backbone ? lr.backbone : lr.transformer);
        const float wd = p.decay ? static_cast<float>(cfg_.weight_decay) : 0.0f;
        if (cfg_.optimizer == "sgd") {
            m1_[i] = static_cast<float>(cfg_.momentum) * m1_[i] + clip * p.grad + wd * p.value;
            p.value -= rate * m1_[i];
        } else {
            const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
            m1_[i] = b1 * m1_[i] + (1 - b1) * clip * p.grad;
            m2_[i] = b2 * m2_[i] + (1 - b2) * (clip * p.grad).cwiseAbs2();
            const float c1 = 1.0f - std::pow(b1, static_cast<float>(steps_));
            const float c2 = 1.0f - std::pow(b2, static_cast<float>(steps_));
            p.value *= 1.0f - rate * wd;
            p.value.array() -= rate * (m1_[i].array() / c1) / ((m2_[i].array() / c2).sqrt() + eps);
        }
        p.zero_grad();
    }
    return norm;
}

std::vector<ManipulationSequence> predict_set(const model::Model<float>& m, const ImageSet& set, int batch_size) {
    std::vector<ManipulationSequence> preds;
    preds.reserve(set.count());
    for (std::size_t start = 0; start < set.count(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> items;
        for (std::size_t i = start; i < std::min(set.count(), start + static_cast<std::size_t>(batch_size)); ++i) {
            items.push_back(i);
        }
        auto out = m.predict(set.batch(items), static_cast<int>(items.size()));
        preds.insert(preds.end(), out.begin(), out.end());
    }
    return preds;
}

MetricReport evaluate(const model::Model<float>& m, const ImageSet& set, int batch_size) {
    return per_sequence_report(m.vocab(), predict_set(m, set, batch_size), set.annotations);
}

TrainResult train(const RunConfig& cfg, model::Model<float>& m, const ImageSet& train_set, const ImageSet& val_set,
                  const std::filesystem::path& out_dir, const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    if (train_set.count() < 2) throw DataError("training split needs at least 2 records");
    if (val_set.count() == 0) throw DataError("validation split is empty");
    if (train_set.size != m.config().image_size) throw DataError("image size differs from the model configuration");
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write training log in " + out_dir.string());
    const nlohmann::json run_json = cfg;

    Optimizer opt(m.store(), cfg);
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 17);
    TrainResult result;
    result.best_checkpoint = out_dir / "best.ckpt";
    result.last_checkpoint = out_dir / "last.ckpt";
    std::vector<std::size_t> order(train_set.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = learning_rates(cfg, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        int batches = 0;
        for (std::size_t start = 0; start + 1 < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            if (end - start < 2) break;
            std::vector<std::size_t> items(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            model::ImageBatch<float> b;
            b.pixels = train_set.batch(items);
            b.batch = static_cast<int>(items.size());
            b.size = train_set.size;
            for (auto i : items) b.annotations.push_back(train_set.annotations[i]);

            nn::Tape<float> tape;
            nn::Context<float> ctx{tape, true, static_cast<float>(m.config().dropout), &rng};
            const auto terms = m.loss(ctx, b);
            tape.backward(terms.total);
            opt.step(rec.lr);
            rec.loss += tape.value(terms.total)(0, 0);
            rec.dec += tape.value(terms.dec)(0, 0);
            if (terms.isc.valid()) rec.isc += tape.value(terms.isc)(0, 0);
            if (terms.ism.valid()) rec.ism += tape.value(terms.ism)(0, 0);
            ++batches;
        }
        if (batches > 0) {
            rec.loss /= batches;
            rec.dec /= batches;
            rec.isc /= batches;
            rec.ism /= batches;
        }
        const auto report = evaluate(m, val_set, cfg.eval_batch_size);
        rec.val_fixed = report.fixed_acc;
        rec.val_adaptive = report.adaptive_acc;
        if (rec.val_adaptive > result.best_val_adaptive) {
            result.best_val_adaptive = rec.val_adaptive;
            result.best_epoch = epoch;
            save_checkpoint(capture(m, run_json, rec.val_adaptive, epoch), result.best_checkpoint);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        nlohmann::json line{{"epoch", epoch},
                            {"lr", {{"backbone", rec.lr.backbone}, {"transformer", rec.lr.transformer}}},
                            {"losses", {{"total", rec.loss}, {"dec", rec.dec}, {"isc", rec.isc}, {"ism", rec.ism}}},
                            {"val", {{"fixed_acc", rec.val_fixed}, {"adaptive_acc", rec.val_adaptive}}},
                            {"seconds", rec.seconds}};
        log << line.dump() << '\n' << std::flush;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    save_checkpoint(capture(m, run_json, result.best_val_adaptive, result.best_epoch), result.last_checkpoint);
    restore(load_checkpoint(result.best_checkpoint), m);
    return result;
}

}  // namespace seqfake::train
