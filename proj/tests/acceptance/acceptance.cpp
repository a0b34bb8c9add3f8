// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
// Trained runs are kept under <work>/runs/<name>/ together with result.json;
// a later invocation with the same run configuration reloads best.ckpt and
// re-evaluates it instead of training again. Delete the work directory to
// force retraining.

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "../oracles.hpp"
#include "../support.hpp"
#include "seqfake/model/model.hpp"
#include "seqfake/perturb/perturb.hpp"
#include "seqfake/synth/dataset.hpp"
#include "seqfake/train/checkpoint.hpp"
#include "seqfake/train/metrics.hpp"
#include "seqfake/train/trainer.hpp"

using namespace seqfake;
using namespace seqfake::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

// --- criterion 1 -----------------------------------------------------------

Outcome metric_oracle() {
    const auto t0 = Clock::now();
    Outcome o;
    const auto v = Vocabulary::components();
    const std::vector<ManipulationSequence> p9{v.parse({"eyebrow", "hair"})}, a9{v.parse({"eyebrow", "hair", "lip"})};
    const double f9 = train::fixed_acc(v, p9, a9), d9 = train::adaptive_acc(v, p9, a9);
    o.pass = f9 == 0.8 && d9 == 2.0 / 3.0;

    std::mt19937_64 rng(2024);
    std::vector<ManipulationSequence> preds, annots;
    std::vector<std::vector<std::string>> pn, an;
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        pn.push_back(random_names(rng, v.labels()));
        an.push_back(i % 4 == 0 ? pn.back() : random_names(rng, v.labels()));
        preds.push_back(v.parse(pn.back()));
        annots.push_back(v.parse(an.back()));
        // Pairwise as well as pooled.
        const double f = train::fixed_acc(v, {preds.back()}, {annots.back()});
        const double d = train::adaptive_acc(v, {preds.back()}, {annots.back()});
        mismatches += f != brute_fixed({pn.back()}, {an.back()}).value();
        mismatches += d != brute_adaptive({pn.back()}, {an.back()}).value();
    }
    const bool pooled = train::fixed_acc(v, preds, annots) == brute_fixed(pn, an).value() &&
                        train::adaptive_acc(v, preds, annots) == brute_adaptive(pn, an).value();
    const double secs = since(t0);
    o.pass = o.pass && pooled && mismatches == 0 && secs < 1.0;
    o.detail = "worked example " + fmt(f9) + " / " + fmt(d9) + ", 1000 pairs mismatches " + std::to_string(mismatches) +
               (pooled ? ", pooled exact" : ", pooled differs") + ", " + fmt(secs, 3) + " s";
    return o;
}

// --- criterion 2 -----------------------------------------------------------

model::ModelConfig toy_config(model::ModelKind kind) {
    model::ModelConfig c;
    c.kind = kind;
    c.width = 16;
    c.heads = 4;
    c.ffn_hidden = 24;
    c.dropout = 0.0;
    c.backbone_channels = {3, 4, 6};
    c.projection_dim = 8;
    return c;
}

template <class T>
model::ImageBatch<T> toy_batch(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    model::ImageBatch<T> b;
    b.batch = count;
    b.size = 128;
    b.pixels.resize(3, static_cast<Eigen::Index>(count) * 128 * 128);
    for (int i = 0; i < count; ++i) {
        const Image img = synth::render(synth::sample_face(rng), 128);
        for (int y = 0; y < 128; ++y) {
            for (int x = 0; x < 128; ++x) {
                for (int c = 0; c < 3; ++c) b.pixels(c, (static_cast<Eigen::Index>(i) * 128 + y) * 128 + x) = static_cast<T>(img.at(c, y, x));
            }
        }
    }
    const std::vector<ManipulationSequence> pool{{2, 4, 3}, {1, 0, 2}, {4}, {}};
    for (int i = 0; i < count; ++i) b.annotations.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
    return b;
}

Outcome analytic_invariants() {
    const auto t0 = Clock::now();
    std::vector<std::string> failed;
    auto check = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };
    Tape<double> t(false);

    // Attention weights are column softmaxes.
    nn::AttentionOptions opt;
    opt.batch = 3;
    opt.queries = 4;
    opt.keys = 9;
    opt.heads = 4;
    const auto q = random_matrix<double>(16, 12, 1), k = random_matrix<double>(16, 27, 2), v = random_matrix<double>(16, 27, 3);
    Matrix<double> w;
    t.value(nn::attention(t, t.constant(q), t.constant(k), t.constant(v), Var{}, opt, &w));
    double worst_sum = 0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) worst_sum = std::max(worst_sum, std::abs(w.col(j).sum() - 1.0));
    check(worst_sum <= 1e-6, "softmax sums");

    // softmax(s + log m) == exp(s) m / sum(exp(s) m)
    const Matrix<double> m = (random_matrix<double>(9, 48, 4).array().abs() + 0.01).min(1.0);
    Matrix<double> wm;
    t.value(nn::attention(t, t.constant(q), t.constant(k), t.constant(v), t.constant(Matrix<double>(m.array().log())), opt, &wm));
    double worst_id = 0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const Eigen::VectorXd e = w.col(j).cwiseProduct(m.col(j));
        worst_id = std::max(worst_id, (wm.col(j) - e / e.sum()).cwiseAbs().maxCoeff());
    }
    check(worst_id <= 1e-6, "log-modulation identity");

    // Spatial maps: 0 < M <= 1 for random centers/scales; e^-1 at r*sqrt(lambda).
    const double lambda = model::SecaSettings{}.lambda;
    const Matrix<double> centers = (random_matrix<double>(2, 20, 5).array() * 0.3 + 0.5).matrix();
    const Matrix<double> scales = random_matrix<double>(8, 20, 6).array().exp().matrix();
    const Matrix<double> offsets = (random_matrix<double>(8, 20, 7).array().tanh() * 0.5).matrix();
    const Matrix<double> maps =
        t.value(nn::seca_log_maps(t, t.constant(centers), t.constant(offsets), t.constant(scales), nn::SecaMapShape{4, 5, 4, 8, 8, lambda}))
            .array()
            .exp();
    check((maps.array() > 0).all() && (maps.array() <= 1).all(), "M in (0,1]");
    // Center on cell (3, 5) of an 8x8 grid; probes r*sqrt(lambda) rows below it.
    Matrix<double> c1(2, 1);
    c1 << 3.5 / 8, 5.5 / 8;
    double worst_e = 0;
    for (double r : {0.5, 1.0, 1.5}) {
        const Matrix<double> lm = t.value(nn::seca_log_maps(t, t.constant(c1), Var{}, t.constant(Matrix<double>::Constant(2, 1, r)),
                                                            nn::SecaMapShape{1, 1, 1, 8, 8, lambda}));
        const int row = 3 + static_cast<int>(r * std::sqrt(lambda));
        worst_e = std::max(worst_e, std::abs(std::exp(lm(row * 8 + 5, 0)) - std::exp(-1.0)));
    }
    check(lambda == 4.0, "default lambda 4");
    check(worst_e <= 1e-12, "M = e^-1 at r*sqrt(lambda)");

    // Causal decoder: logits at t are unchanged when later tokens change.
    model::Model<double> sff(toy_config(model::ModelKind::seqfakeformer), Vocabulary::components(), 3);
    {
        nn::Context<double> c{t};
        const auto b = toy_batch<double>(1, 9);
        Var f = sff.encode(c, b.pixels, 1);
        const auto& vc = sff.vocab();
        const Matrix<double> la = t.value(sff.decode(c, f, 1, 6, {vc.sos(), 1, 2, 3, 4, 0}));
        double worst = 0;
        for (int cut = 1; cut < 6; ++cut) {
            std::vector<int> alt{vc.sos(), 1, 2, 3, 4, 0};
            for (int j = cut; j < 6; ++j) alt[static_cast<std::size_t>(j)] = (alt[static_cast<std::size_t>(j)] + 2) % 5;
            const Matrix<double> lb = t.value(sff.decode(c, f, 1, 6, alt));
            worst = std::max(worst, (la.leftCols(cut) - lb.leftCols(cut)).cwiseAbs().maxCoeff());
        }
        check(worst <= 1e-6, "causal future-invariance");
    }

    // InfoNCE at uniform similarity.
    double worst_nce = 0;
    for (int kk : {2, 4, 8, 32}) {
        worst_nce = std::max(worst_nce, std::abs(t.value(nn::info_nce(t, t.constant(Matrix<double>::Constant(kk, kk, -0.4)), 0.07))(0, 0) - std::log(kk)));
    }
    check(worst_nce <= 1e-6, "InfoNCE ln K");

    // Matching loss with a zeroed head is ln 2.
    model::Model<double> pp(toy_config(model::ModelKind::seqfakeformer_pp), Vocabulary::components(), 4);
    pp.store().find("ism.head.fc2.weight")->value.setZero();
    pp.store().find("ism.head.fc2.bias")->value.setZero();
    {
        nn::Context<double> c{t};
        const auto b = toy_batch<double>(4, 10);
        Var f = pp.encode(c, b.pixels, 4);
        const Matrix<double> sim = random_matrix<double>(4, 4, 11);
        const double ism = t.value(pp.ism_loss(c, f, sim, b.annotations))(0, 0);
        check(std::abs(ism - std::log(2.0)) <= 1e-9, "ISM ln 2");
    }

    const double secs = since(t0);
    check(secs < 10.0, "runtime");
    Outcome o;
    o.pass = failed.empty();
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
    o.detail = (o.pass ? std::string("all 6 invariants hold") : "failed: " + list) + ", " + fmt(secs, 3) + " s";
    return o;
}

// --- criterion 3 -----------------------------------------------------------

Outcome gradient_checks() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string where;
    int checked = 0;
    std::set<std::string> kinds;
    for (auto kind : {model::ModelKind::seqfakeformer_pp, model::ModelKind::multi_cls}) {
        model::Model<double> m(toy_config(kind), Vocabulary::components(), 5);
        const auto b = toy_batch<double>(2, 12);  // 3 labels + SOS = 4 decoder tokens, 8x8 grid
        auto loss = [&](Tape<double>& t) {
            nn::Context<double> c{t};
            return m.loss(c, b).total;
        };
        const auto r = check_gradients(m.store().params(), loss, 4);
        checked += r.checked;
        if (r.worst > worst) {
            worst = r.worst;
            where = r.where;
        }
        for (const auto& p : m.store().params()) {
            const auto& n = p->name;
            if (n.find("conv") != std::string::npos) kinds.insert("conv");
            if (n.find(".attn.") != std::string::npos) kinds.insert("attention");
            if (n.find(".seca.") != std::string::npos) kinds.insert("seca");
            if (n.find("project") != std::string::npos) kinds.insert("projection");
            if (n.find("classifier") != std::string::npos || n.find("multi_cls.head") != std::string::npos) kinds.insert("classifier");
        }
    }
    const double secs = since(t0);
    Outcome o;
    o.pass = worst <= 1e-3 && kinds.size() == 5 && secs < 120.0;
    o.detail = std::to_string(checked) + " entries over every tensor, worst relative error " + fmt(worst, 3) +
               (worst > 1e-3 ? " at " + where : "") + ", " + fmt(secs, 3) + " s";
    return o;
}

// --- criterion 7 -----------------------------------------------------------

Outcome recovery(const synth::Manifest& man) {
    const auto t0 = Clock::now();
    const synth::ManipulationLibrary lib(man.vocabulary());
    std::mt19937_64 rng(31);
    int records = 0, exact = 0, identical = 0, worse = 0;
    double worst_exact = 0, least_gap = 1e300;
    for (const auto& r : man.records) {
        if (r.sequence.size() < 2) continue;
        if (++records > 200) break;
        const auto faces = synth::record_faces(lib, r);
        const auto back = synth::recover(lib, faces.manipulated, r.sequence, r.degrees);
        const double d = synth::distance(back, faces.original);
        worst_exact = std::max(worst_exact, d);
        exact += d < 1e-9;
        identical += synth::render(back, man.header.image_size) == synth::render(faces.original, man.header.image_size);
        auto perm = r.sequence;
        do {
            std::shuffle(perm.ops.begin(), perm.ops.end(), rng);
        } while (perm == r.sequence);
        const double dw = synth::distance(synth::recover(lib, faces.manipulated, perm, synth::degrees_for(r, perm)), faces.original);
        worse += dw > d;
        least_gap = std::min(least_gap, dw - d);
    }
    records = std::min(records, 200);
    const double secs = since(t0);
    Outcome o;
    o.pass = records > 0 && exact == records && identical == records && worse == records && secs < 10.0;
    o.detail = std::to_string(records) + " records: exact " + std::to_string(exact) + " (max dist " + fmt(worst_exact, 3) +
               "), pixel-identical " + std::to_string(identical) + ", mis-ordered farther " + std::to_string(worse) +
               " (min gap " + fmt(least_gap, 3) + "), " + fmt(secs, 3) + " s";
    return o;
}

// --- criterion 8 -----------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome perturbation_pipeline(const fs::path& work) {
    std::vector<std::string> failed;
    std::mt19937_64 rng(99);
    std::array<int, 5> ks{};
    int repeats = 0;
    for (int i = 0; i < 100000; ++i) {
        const auto mix = perturb::sample_mix(rng);
        ++ks[mix.size()];
        std::set<perturb::Type> seen;
        for (const auto& s : mix) repeats += !seen.insert(s.type).second;
    }
    double worst_k = 0;
    for (int k = 1; k <= 4; ++k) worst_k = std::max(worst_k, std::abs(ks[static_cast<std::size_t>(k)] / 1e5 - 0.25));
    if (repeats) failed.push_back("repeated types");
    if (worst_k > 0.01) failed.push_back("k distribution");

    std::mt19937_64 frng(3);
    const Image img = quantize8(synth::render(synth::sample_face(frng), 128));
    double e_prev = perturb::laplacian_energy(img), noise_prev = 1e9, jpeg_prev = 1e9;
    Image flat(128, 128, 0.5f);
    double var_prev = 0;
    bool blur_ok = true, noise_ok = true, jpeg_ok = true;
    for (int level = 1; level <= 3; ++level) {
        const double e = perturb::laplacian_energy(perturb::apply(img, {perturb::Type::gauss_blur, level}, 1));
        blur_ok = blur_ok && e < e_prev;
        e_prev = e;
        const double pn = psnr(img, perturb::apply(img, {perturb::Type::gauss_noise, level}, 1));
        const auto noisy = perturb::apply(flat, {perturb::Type::gauss_noise, level}, 1);
        double var = 0;
        for (float x : noisy.data()) var += (x - 0.5) * (x - 0.5);
        var /= static_cast<double>(noisy.data().size());
        noise_ok = noise_ok && pn < noise_prev && var > var_prev;
        noise_prev = pn;
        var_prev = var;
        const double pj = psnr(img, perturb::apply(img, {perturb::Type::jpeg, level}, 1));
        jpeg_ok = jpeg_ok && pj < jpeg_prev;
        jpeg_prev = pj;
    }
    if (!blur_ok) failed.push_back("blur monotone");
    if (!noise_ok) failed.push_back("noise monotone");
    if (!jpeg_ok) failed.push_back("jpeg monotone");

    const fs::path root = work / "criterion8";
    fs::remove_all(root);
    synth::DatasetConfig cfg;
    cfg.count = 40;
    cfg.image_size = 64;
    const auto clean = synth::generate_dataset(cfg, 8, root / "clean");
    const auto a = perturb::perturb_manifest(clean, root / "clean", root / "a", 5);
    const auto b = perturb::perturb_manifest(clean, root / "clean", root / "b", 5);
    bool same = slurp(root / "a" / "manifest.jsonl") == slurp(root / "b" / "manifest.jsonl");
    for (const auto& r : a.records) same = same && slurp(root / "a" / r.image_path) == slurp(root / "b" / r.image_path);
    if (!same) failed.push_back("manifest reproducibility");
    fs::remove_all(root);

    Outcome o;
    o.pass = failed.empty();
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
    o.detail = "no repeats in 1e5 draws: " + std::string(repeats ? "no" : "yes") + ", max |P(k) - 0.25| " + fmt(worst_k, 3) +
               ", blur/noise/jpeg monotone: " + (blur_ok && noise_ok && jpeg_ok ? "yes" : "no") +
               ", manifest reproducible: " + (same ? "yes" : "no") + (o.pass ? "" : " (failed: " + list + ")");
    return o;
}

// --- training runs ---------------------------------------------------------

struct Data {
    synth::Manifest manifest;
    train::ImageSet train, val, test;
};

Data load_data(const synth::Manifest& man, const fs::path& dir) {
    Data d;
    d.manifest = man;
    d.train = train::load_split(man, dir, synth::Split::train);
    d.val = train::load_split(man, dir, synth::Split::val);
    d.test = train::load_split(man, dir, synth::Split::test);
    return d;
}

struct RunResult {
    train::MetricReport test, alt_test;  // alt: the other variant of the test split
    double seconds = 0;
};

// Trains (or reloads) one model and evaluates it on `data.test` and `alt`.
RunResult run_model(const fs::path& work, const std::string& name, const train::RunConfig& cfg, const Data& data,
                    const train::ImageSet* alt) {
    const fs::path dir = work / "runs" / name;
    json cfg_json = cfg;
    model::Model<float> m(cfg.model, data.manifest.vocabulary(), cfg.seed);
    RunResult out;
    bool cached = false;
    if (fs::exists(dir / "result.json") && fs::exists(dir / "best.ckpt")) {
        std::ifstream in(dir / "result.json");
        const json r = json::parse(in);
        if (r.value("run", json()) == cfg_json) {
            train::restore(train::load_checkpoint(dir / "best.ckpt"), m);
            out.seconds = r.value("train_seconds", 0.0);
            cached = true;
        }
    }
    if (!cached) {
        std::cout << "  training " << name << " ..." << std::flush;
        const auto t0 = Clock::now();
        train::train(cfg, m, data.train, data.val, dir, [](const train::EpochRecord& r) {
            if (r.epoch % 5 == 4) std::cout << " e" << r.epoch + 1 << ":" << fmt(r.val_adaptive, 3) << std::flush;
        });
        out.seconds = since(t0);
        std::ofstream res(dir / "result.json");
        res << json{{"run", cfg_json}, {"train_seconds", out.seconds}}.dump(2) << "\n";
        std::cout << " done (" << fmt(out.seconds / 60, 3) << " min)\n";
    }
    out.test = train::evaluate(m, data.test, cfg.eval_batch_size);
    if (alt) out.alt_test = train::evaluate(m, *alt, cfg.eval_batch_size);
    std::cout << "  " << name << (cached ? " (cached)" : "") << ": test fixed " << fmt(out.test.fixed_acc) << " adaptive "
              << fmt(out.test.adaptive_acc);
    if (alt) std::cout << " | other split fixed " << fmt(out.alt_test.fixed_acc) << " adaptive " << fmt(out.alt_test.adaptive_acc);
    std::cout << "\n";
    return out;
}

train::RunConfig desk(model::ModelKind kind, std::uint64_t seed) {
    auto c = train::preset("desk");
    c.model.kind = kind;
    c.seed = seed;
    return c;
}

double mean_of(const std::vector<RunResult>& v, const std::function<double(const RunResult&)>& f) {
    double s = 0;
    for (const auto& r : v) s += f(r);
    return s / static_cast<double>(v.size());
}

std::string list_of(const std::vector<RunResult>& v, const std::function<double(const RunResult&)>& f) {
    std::string s;
    for (const auto& r : v) s += (s.empty() ? "" : "/") + fmt(f(r), 3);
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seqfake acceptance run"};
    fs::path work = "acceptance_work";
    std::vector<int> only;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    app.add_option("--work", work, "Directory for datasets and trained runs");
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("--seeds", seeds, "Training seeds");
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

    std::map<int, Outcome> results;
    auto report = [&](int id, const std::string& title, const Outcome& o) {
        results[id] = o;
        std::cout << "criterion " << id << " " << title << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
    };

    if (wanted(1)) report(1, "metric oracle equivalence", metric_oracle());
    if (wanted(2)) report(2, "analytic invariants", analytic_invariants());
    if (wanted(3)) report(3, "gradient checks", gradient_checks());
    if (wanted(8)) report(8, "perturbation pipeline", perturbation_pipeline(work));

    const bool need_data = wanted(4) || wanted(5) || wanted(6) || wanted(7);
    if (!need_data) return std::all_of(results.begin(), results.end(), [](auto& r) { return r.second.pass; }) ? 0 : 1;

    // 2000 / 250 / 250 components-track images at 128 x 128.
    fs::create_directories(work);
    const fs::path clean_dir = work / "data" / "clean", pert_dir = work / "data" / "perturbed";
    synth::DatasetConfig dc;
    dc.track = Track::components;
    dc.count = 2500;
    dc.image_size = 128;
    synth::Manifest clean_man;
    if (fs::exists(clean_dir / "manifest.jsonl")) {
        clean_man = synth::read_manifest(clean_dir / "manifest.jsonl");
    } else {
        std::cout << "  generating clean dataset\n";
        clean_man = synth::generate_dataset(dc, 7, clean_dir);
    }
    if (wanted(7)) report(7, "recovery", recovery(clean_man));
    if (!(wanted(4) || wanted(5) || wanted(6))) {
        return std::all_of(results.begin(), results.end(), [](auto& r) { return r.second.pass; }) ? 0 : 1;
    }
    synth::Manifest pert_man;
    if (fs::exists(pert_dir / "manifest.jsonl")) {
        pert_man = synth::read_manifest(pert_dir / "manifest.jsonl");
    } else {
        std::cout << "  generating perturbed dataset\n";
        pert_man = perturb::perturb_manifest(clean_man, clean_dir, pert_dir, 11);
    }
    const Data clean = load_data(clean_man, clean_dir);
    const Data pert = load_data(pert_man, pert_dir);
    std::cout << "  splits: " << clean.train.count() << " / " << clean.val.count() << " / " << clean.test.count() << "\n";

    using model::ModelKind;
    std::vector<RunResult> sff_clean, mc_clean, pp_clean, sff_pert, pp_pert, no_isc, no_ism;
    auto seed_tag = [](std::uint64_t s) { return "_s" + std::to_string(s); };
    for (auto s : seeds) sff_clean.push_back(run_model(work, "sff_clean" + seed_tag(s), desk(ModelKind::seqfakeformer, s), clean, &pert.test));

    if (wanted(4)) {
        bool ok = true;
        for (const auto& r : sff_clean) ok = ok && r.test.fixed_acc >= 0.90 && r.test.adaptive_acc >= 0.80 && r.seconds < 45 * 60;
        double longest = 0;
        for (const auto& r : sff_clean) longest = std::max(longest, r.seconds);
        report(4, "clean gate", {ok, "fixed " + list_of(sff_clean, [](auto& r) { return r.test.fixed_acc; }) + " (>= 0.90), adaptive " +
                                         list_of(sff_clean, [](auto& r) { return r.test.adaptive_acc; }) +
                                         " (>= 0.80), longest training " + fmt(longest / 60, 3) + " min"});
    }
    if (wanted(6)) {
        for (auto s : seeds) mc_clean.push_back(run_model(work, "multicls_clean" + seed_tag(s), desk(ModelKind::multi_cls, s), clean, nullptr));
        const double mc = mean_of(mc_clean, [](auto& r) { return r.test.adaptive_acc; });
        const double sff = mean_of(sff_clean, [](auto& r) { return r.test.adaptive_acc; });
        report(6, "baseline ordering", {mc <= sff, "Multi-Cls mean adaptive " + fmt(mc) + " vs SeqFakeFormer " + fmt(sff)});
    }
    if (wanted(5)) {
        for (auto s : seeds) pp_clean.push_back(run_model(work, "sffpp_clean" + seed_tag(s), desk(ModelKind::seqfakeformer_pp, s), clean, &pert.test));
        for (auto s : seeds) sff_pert.push_back(run_model(work, "sff_pert" + seed_tag(s), desk(ModelKind::seqfakeformer, s), pert, nullptr));
        for (auto s : seeds) pp_pert.push_back(run_model(work, "sffpp_pert" + seed_tag(s), desk(ModelKind::seqfakeformer_pp, s), pert, nullptr));
        for (auto s : seeds) {
            auto c = desk(ModelKind::seqfakeformer_pp, s);
            c.model.isc = false;
            no_isc.push_back(run_model(work, "sffpp_noisc_pert" + seed_tag(s), c, pert, nullptr));
            c.model.isc = true;
            c.model.ism = false;
            no_ism.push_back(run_model(work, "sffpp_noism_pert" + seed_tag(s), c, pert, nullptr));
        }
        auto adaptive = [](const RunResult& r) { return r.test.adaptive_acc; };
        auto fixed = [](const RunResult& r) { return r.test.fixed_acc; };
        auto alt_adaptive = [](const RunResult& r) { return r.alt_test.adaptive_acc; };
        auto alt_fixed = [](const RunResult& r) { return r.alt_test.fixed_acc; };
        const bool degrade_sff = mean_of(sff_clean, alt_adaptive) < mean_of(sff_clean, adaptive) &&
                                 mean_of(sff_clean, alt_fixed) < mean_of(sff_clean, fixed);
        const bool degrade_pp = mean_of(pp_clean, alt_adaptive) < mean_of(pp_clean, adaptive) &&
                                mean_of(pp_clean, alt_fixed) < mean_of(pp_clean, fixed);
        const double m_sff = mean_of(sff_pert, adaptive), m_pp = mean_of(pp_pert, adaptive);
        const double m_isc = mean_of(no_isc, adaptive), m_ism = mean_of(no_ism, adaptive);
        const bool pp_ge = m_pp >= m_sff, ablate = m_isc <= m_pp && m_ism <= m_pp;
        std::string d = "perturbed test adaptive SFF " + fmt(mean_of(sff_clean, adaptive)) + " -> " + fmt(mean_of(sff_clean, alt_adaptive)) +
                        ", SFF++ " + fmt(mean_of(pp_clean, adaptive)) + " -> " + fmt(mean_of(pp_clean, alt_adaptive)) +
                        "; trained on perturbed: SFF " + fmt(m_sff) + ", SFF++ " + fmt(m_pp) + ", w/o ISC " + fmt(m_isc) +
                        ", w/o ISM " + fmt(m_ism);
        std::string why;
        if (!degrade_sff) why += " SFF not degraded;";
        if (!degrade_pp) why += " SFF++ not degraded;";
        if (!pp_ge) why += " SFF++ below SFF;";
        if (!ablate) why += " an ablation beats full SFF++;";
        report(5, "directional robustness", {degrade_sff && degrade_pp && pp_ge && ablate, d + (why.empty() ? "" : " (" + why + ")")});
    }

    std::cout << "\nsummary:";
    bool all = true;
    for (const auto& [id, o] : results) {
        std::cout << " " << id << "=" << (o.pass ? "PASS" : "FAIL");
        all = all && o.pass;
    }
    std::cout << std::endl;
    return all ? 0 : 1;
}
