// seqfake: dataset generation, training, evaluation and inspection.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include <omp.h>

#include <CLI11.hpp>

#include "seqfake/error.hpp"
#include "seqfake/image.hpp"
#include "seqfake/perturb/perturb.hpp"
#include "seqfake/synth/dataset.hpp"
#include "seqfake/train/checkpoint.hpp"
#include "seqfake/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace seqfake;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kIncompatible = 4 };

fs::path manifest_file(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.jsonl" : p; }

synth::Split split_arg(const std::string& s) {
    try {
        return synth::parse_split(s);
    } catch (const DataError&) {
        throw ConfigError("unknown split '" + s + "'");
    }
}

model::Model<float> model_from(const train::Checkpoint& ck) {
    model::Model<float> m(ck.model, ck.vocabulary(), 0);
    train::restore(ck, m);
    return m;
}

nn::Matrix<float> image_pixels(const fs::path& path, int size) {
    const Image img = read_png(path);
    if (img.width() != size || img.height() != size) {
        throw DataError("image " + path.string() + " is " + std::to_string(img.width()) + "x" +
                        std::to_string(img.height()) + ", model expects " + std::to_string(size));
    }
    train::ImageSet set;
    set.size = size;
    set.pixels = to_rgb8(img);
    set.annotations.resize(1);
    return set.batch({0});
}

void print_audit(const model::Model<float>& m) {
    const auto& sharing = m.sharing();
    std::cout << "parameter sharing audit (" << m.store().params().size() << " tensors, " << m.store().count()
              << " values)\n";
    if (sharing.empty()) std::cout << "  no shared parameters\n";
    for (const auto& [name, aliases] : sharing) {
        std::cout << "  " << name << " <- ";
        for (std::size_t i = 0; i < aliases.size(); ++i) std::cout << (i ? ", " : "") << aliases[i];
        std::cout << '\n';
    }
}

int cmd_gen_data(const std::string& track, std::size_t count, std::uint64_t seed, int size, double alpha,
                 const fs::path& out) {
    synth::DatasetConfig cfg;
    cfg.track = parse_track(track);
    cfg.count = count;
    cfg.image_size = size;
    cfg.entanglement.alpha = alpha;
    const auto m = synth::generate_dataset(cfg, seed, out);
    std::map<std::size_t, std::size_t> lengths;
    for (const auto& r : m.records) ++lengths[r.sequence.size()];
    std::cout << "wrote " << m.records.size() << " records to " << (out / "manifest.jsonl").string() << '\n';
    for (const auto& [len, n] : lengths) std::cout << "  length " << len << ": " << n << '\n';
    return kOk;
}

int cmd_perturb(const fs::path& in, const fs::path& out, std::uint64_t seed) {
    const auto file = manifest_file(in);
    const auto m = synth::read_manifest(file);
    const auto p = perturb::perturb_manifest(m, file.parent_path(), out, seed);
    std::map<std::size_t, std::size_t> ks;
    for (const auto& r : p.records) ++ks[r.perturbations.size()];
    std::cout << "perturbed " << p.records.size() << " records into " << (out / "manifest.jsonl").string() << '\n';
    for (const auto& [k, n] : ks) std::cout << "  " << k << " perturbation(s): " << n << '\n';
    return kOk;
}

int cmd_train(const std::string& config, const fs::path& data, const fs::path& out, std::optional<std::uint64_t> seed,
              const std::string& kind, std::optional<int> epochs, bool audit) {
    train::RunConfig cfg = config.empty() ? train::preset("desk") : train::load_run_config(config);
    if (seed) cfg.seed = *seed;
    if (!kind.empty()) cfg.model.kind = model::parse_model_kind(kind);
    if (epochs) {
        cfg.epochs = *epochs;
        cfg.warmup_epochs = std::min(cfg.warmup_epochs, std::max(0, cfg.epochs - 1));
    }
    cfg.validate();
    const auto file = manifest_file(data);
    const auto m = synth::read_manifest(file);
    cfg.model.image_size = m.header.image_size;
    model::Model<float> model(cfg.model, m.vocabulary(), cfg.seed);
    if (audit) print_audit(model);
    const auto tr = train::load_split(m, file.parent_path(), synth::Split::train);
    const auto va = train::load_split(m, file.parent_path(), synth::Split::val);
    std::cout << "training " << model::to_string(cfg.model.kind) << " on " << tr.count() << " images ("
              << va.count() << " val), " << cfg.epochs << " epochs\n";
    const auto res = train::train(cfg, model, tr, va, out, [](const train::EpochRecord& r) {
        std::cout << "epoch " << std::setw(3) << r.epoch << "  loss " << std::fixed << std::setprecision(4) << r.loss
                  << "  val fixed " << r.val_fixed << "  adaptive " << r.val_adaptive << "  (" << std::setprecision(1)
                  << r.seconds << "s)\n"
                  << std::defaultfloat << std::setprecision(6) << std::flush;
    });
    if (audit) print_audit(model);
    std::cout << "best val adaptive " << res.best_val_adaptive << " at epoch " << res.best_epoch << '\n'
              << "checkpoints: " << res.best_checkpoint.string() << ", " << res.last_checkpoint.string() << '\n';
    return kOk;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const std::string& split, const fs::path& csv,
             const fs::path& chart) {
    const auto ck = train::load_checkpoint(ckpt);
    const auto model = model_from(ck);
    const auto file = manifest_file(data);
    const auto m = synth::read_manifest(file);
    if (!(m.vocabulary() == model.vocab())) throw IncompatibleError("dataset vocabulary differs from the checkpoint's");
    const auto set = train::load_split(m, file.parent_path(), split_arg(split));
    const auto report = train::evaluate(model, set, 64);
    std::cout << std::setprecision(8) << "split " << split << " (" << report.samples << " images)\n"
              << "fixed_acc " << report.fixed_acc << '\n'
              << "adaptive_acc " << report.adaptive_acc << '\n'
              << "adaptive_acc_macro " << report.adaptive_acc_macro << '\n'
              << "exact_match " << report.exact_match << '\n';
    const fs::path csv_path = csv.empty() ? fs::path("report_" + split + ".csv") : csv;
    train::write_report_csv(model.vocab(), report, csv_path);
    std::cout << "per-sequence report: " << csv_path.string() << '\n';
    if (!chart.empty()) {
        train::write_report_chart(report, chart);
        std::cout << "chart: " << chart.string() << '\n';
    }
    return kOk;
}

int cmd_predict(const fs::path& ckpt, const fs::path& image) {
    const auto ck = train::load_checkpoint(ckpt);
    const auto model = model_from(ck);
    const auto seq = model.predict(image_pixels(image, ck.model.image_size), 1).front();
    std::cout << model.vocab().display(strip_padding(model.vocab(), seq.ops)) << '\n';
    return kOk;
}

int cmd_recover(const fs::path& data, const std::string& record, const std::string& sequence, const fs::path& ckpt,
                const fs::path& out) {
    const auto file = manifest_file(data);
    const auto m = synth::read_manifest(file);
    const auto vocab = m.vocabulary();
    const synth::DatasetRecord* rec = nullptr;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        if (m.records[i].image_path == record || std::to_string(i) == record) rec = &m.records[i];
    }
    if (!rec) throw DataError("no record '" + record + "' in " + file.string());
    ManipulationSequence seq;
    if (!sequence.empty()) {
        seq = vocab.parse_display(sequence);
    } else if (!ckpt.empty()) {
        const auto ck = train::load_checkpoint(ckpt);
        const auto model = model_from(ck);
        seq = strip_padding(vocab, model.predict(image_pixels(file.parent_path() / rec->image_path, ck.model.image_size), 1)
                                       .front()
                                       .ops);
    } else {
        throw ConfigError("recover needs --sequence or --checkpoint");
    }
    vocab.validate(seq);
    synth::EntanglementConfig ent;
    ent.alpha = m.header.alpha;
    const synth::ManipulationLibrary lib(vocab, ent);
    const auto faces = synth::record_faces(lib, *rec);
    const auto recovered = synth::recover(lib, faces.manipulated, seq, synth::degrees_for(*rec, seq));
    const double dist = synth::distance(recovered, faces.original);
    const Image img = synth::render(recovered, m.header.image_size);
    const Image orig = synth::render(faces.original, m.header.image_size);
    write_png(img, out);
    std::cout << "sequence " << vocab.display(seq) << " (annotation " << vocab.display(rec->sequence) << ")\n"
              << std::setprecision(10) << "parameter_distance " << dist << '\n'
              << "pixel_identical " << (to_rgb8(img) == to_rgb8(orig) ? "yes" : "no") << '\n'
              << "wrote " << out.string() << '\n';
    return kOk;
}

int cmd_dump_attention(const fs::path& ckpt, const fs::path& image, const fs::path& out) {
    const auto ck = train::load_checkpoint(ckpt);
    const auto model = model_from(ck);
    const auto tr = model.trace(image_pixels(image, ck.model.image_size));
    fs::create_directories(out);
    const int g = ck.model.grid();
    const int heads = ck.model.heads;
    std::size_t files = 0;
    for (std::size_t s = 0; s < tr.steps.size(); ++s) {
        const int steps = static_cast<int>(s) + 1;
        for (std::size_t l = 0; l < tr.steps[s].size(); ++l) {
            const auto& t = tr.steps[s][l];
            for (int h = 0; h < heads; ++h) {
                // Column of the last query (the token predicted at this step).
                const Eigen::Index col = static_cast<Eigen::Index>(h) * steps + steps - 1;
                std::vector<float> w(static_cast<std::size_t>(g * g)), mp(w.size());
                const float wmax = std::max(1e-12f, t.weights.col(col).maxCoeff());
                for (int k = 0; k < g * g; ++k) {
                    w[static_cast<std::size_t>(k)] = t.weights(k, col) / wmax;
                    mp[static_cast<std::size_t>(k)] = std::exp(t.log_maps(k, col));
                }
                const std::string stem = "step" + std::to_string(s) + "_layer" + std::to_string(l) + "_head" + std::to_string(h);
                write_gray_png(w, g, g, out / (stem + "_attention.png"));
                write_gray_png(mp, g, g, out / (stem + "_map.png"));
                files += 2;
            }
        }
    }
    std::cout << "decoded " << model.vocab().display(tr.sequence) << "; wrote " << files << " maps to " << out.string()
              << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seqfake: sequential facial manipulation detection on synthetic faces"};
    app.require_subcommand(1);
    std::string workdir;
    app.add_option("--workdir", workdir, "Directory all relative paths resolve against");

    std::string track = "components", config, kind, split = "test", record, sequence;
    std::size_t count = 2500;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> train_seed;
    std::optional<int> epochs;
    int size = 128;
    double alpha = 0.15;
    bool audit = false;
    std::string out, in, data, ckpt, image, csv, chart;

    auto* gen = app.add_subcommand("gen-data", "Render a synthetic manipulation dataset");
    gen->add_option("--track", track, "components | attributes")->capture_default_str();
    gen->add_option("--count", count, "Number of records")->capture_default_str();
    gen->add_option("--seed", seed, "Master seed")->capture_default_str();
    gen->add_option("--size", size, "Image side in pixels")->capture_default_str();
    gen->add_option("--alpha", alpha, "Entanglement coupling")->capture_default_str();
    gen->add_option("--out", out, "Output directory")->required();

    auto* per = app.add_subcommand("perturb", "Apply sampled perturbation mixes to a dataset");
    per->add_option("--in", in, "Input manifest or dataset directory")->required();
    per->add_option("--out", out, "Output directory")->required();
    per->add_option("--seed", seed, "Master seed")->capture_default_str();

    auto* trn = app.add_subcommand("train", "Train a model");
    trn->add_option("--config", config, "Run configuration JSON (default: desk preset)");
    trn->add_option("--data", data, "Manifest or dataset directory")->required();
    trn->add_option("--out", out, "Run directory for checkpoints and log")->required();
    trn->add_option("--seed", train_seed, "Override the configured seed");
    trn->add_option("--model", kind, "seqfakeformer | seqfakeformer++ | multi_cls");
    trn->add_option("--epochs", epochs, "Override the epoch count");
    trn->add_flag("--audit-sharing", audit, "Print the shared-parameter audit");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    ev->add_option("--data", data, "Manifest or dataset directory")->required();
    ev->add_option("--split", split, "train | val | test")->capture_default_str();
    ev->add_option("--csv", csv, "Per-sequence CSV path (default report_<split>.csv)");
    ev->add_option("--chart", chart, "Per-sequence bar chart PNG");

    auto* pred = app.add_subcommand("predict", "Decode the manipulation sequence of one image");
    pred->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    pred->add_option("--image", image, "PNG image")->required();

    auto* rec = app.add_subcommand("recover", "Undo a detected sequence on a dataset record");
    rec->add_option("--data", data, "Manifest or dataset directory")->required();
    rec->add_option("--record", record, "Record index or image path")->required();
    rec->add_option("--sequence", sequence, "Sequence such as Eyebrow-Hair-Lip (or 'original')");
    rec->add_option("--checkpoint", ckpt, "Detect the sequence with this checkpoint instead");
    rec->add_option("--out", out, "Recovered image path")->required();

    auto* dump = app.add_subcommand("dump-attention", "Write per-step cross-attention and spatial maps");
    dump->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    dump->add_option("--image", image, "PNG image")->required();
    dump->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    if (const char* threads = std::getenv("SEQFAKE_THREADS")) {
        const int n = std::atoi(threads);
        if (n > 0) omp_set_num_threads(n);
    }

    try {
        if (!workdir.empty()) fs::current_path(workdir);
        if (*gen) return cmd_gen_data(track, count, seed, size, alpha, out);
        if (*per) return cmd_perturb(in, out, seed);
        if (*trn) return cmd_train(config, data, out, train_seed, kind, epochs, audit);
        if (*ev) return cmd_eval(ckpt, data, split, csv, chart);
        if (*pred) return cmd_predict(ckpt, image);
        if (*rec) return cmd_recover(data, record, sequence, ckpt, out);
        if (*dump) return cmd_dump_attention(ckpt, image, out);
    } catch (const IncompatibleError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIncompatible;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
