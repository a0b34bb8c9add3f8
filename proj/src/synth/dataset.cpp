#include "seqfake/synth/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "seqfake/error.hpp"

namespace seqfake::synth {

using nlohmann::json;

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw DataError("unknown split '" + std::string(name) + "'");
}

std::vector<const DatasetRecord*> Manifest::split(Split s) const {
    std::vector<const DatasetRecord*> out;
    for (const auto& r : records) {
        if (r.split == s) out.push_back(&r);
    }
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t record_seed(std::uint64_t master_seed, std::uint64_t index) {
    return splitmix64(splitmix64(master_seed) ^ (index * 0xD1B54A32D192ED03ull + 1));
}

Manifest plan_dataset(const DatasetConfig& cfg, std::uint64_t master_seed) {
    if (cfg.count < 10) throw ConfigError("dataset count must be at least 10, got " + std::to_string(cfg.count));
    if (cfg.image_size < 32 || cfg.image_size % 16 != 0) {
        throw ConfigError("image size must be a multiple of 16 and >= 32");
    }
    const Vocabulary vocab = Vocabulary::for_track(cfg.track);
    for (const auto& s : cfg.whitelist) vocab.validate(s);
    if (std::all_of(cfg.length_weights.begin(), cfg.length_weights.end(), [](double w) { return w <= 0.0; })) {
        throw ConfigError("length weights must not all be zero");
    }
    const std::size_t max_len = std::min(kMaxSequenceLength, vocab.num_labels());

    Manifest m;
    m.header.track = cfg.track;
    m.header.vocabulary = vocab.labels();
    m.header.image_size = cfg.image_size;
    m.header.master_seed = master_seed;
    m.header.alpha = cfg.entanglement.alpha;

    // Exact 80/10/10 split over a seeded permutation of record indices.
    std::vector<std::size_t> order(cfg.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 split_rng(splitmix64(master_seed ^ 0x5157u));
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<Split> split_of(cfg.count, Split::train);
    const std::size_t n_val = cfg.count / 10, n_test = cfg.count / 10;
    for (std::size_t i = 0; i < n_val; ++i) split_of[order[i]] = Split::val;
    for (std::size_t i = n_val; i < n_val + n_test; ++i) split_of[order[i]] = Split::test;

    std::vector<double> weights(cfg.length_weights.begin(), cfg.length_weights.begin() + static_cast<std::ptrdiff_t>(max_len + 1));
    std::uniform_real_distribution<double> degree(cfg.entanglement.degree_min, cfg.entanglement.degree_max);

    m.records.resize(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        auto& r = m.records[i];
        r.seed = record_seed(master_seed, i);
        r.split = split_of[i];
        char name[32];
        std::snprintf(name, sizeof name, "images/%06zu.png", i);
        r.image_path = name;

        std::mt19937_64 rng(splitmix64(r.seed ^ 0xA11u));
        if (!cfg.whitelist.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, cfg.whitelist.size() - 1);
            r.sequence = cfg.whitelist[pick(rng)];
        } else {
            std::discrete_distribution<std::size_t> length(weights.begin(), weights.end());
            const std::size_t len = length(rng);
            std::vector<TokenId> labels(vocab.num_labels());
            std::iota(labels.begin(), labels.end(), 0);
            std::shuffle(labels.begin(), labels.end(), rng);
            labels.resize(len);
            r.sequence = ManipulationSequence(std::move(labels));
        }
        for (std::size_t k = 0; k < r.sequence.size(); ++k) r.degrees.push_back(degree(rng));
    }
    return m;
}

RecordFaces record_faces(const ManipulationLibrary& lib, const DatasetRecord& record) {
    std::mt19937_64 rng(splitmix64(record.seed ^ 0xFACEu));
    RecordFaces out;
    out.original = sample_face(rng);
    out.manipulated = apply_sequence(lib, out.original, record.sequence, record.degrees);
    return out;
}

std::vector<double> degrees_for(const DatasetRecord& record, const ManipulationSequence& seq, double fallback) {
    std::vector<double> out;
    for (TokenId id : seq) {
        double d = fallback;
        for (std::size_t i = 0; i < record.sequence.size(); ++i) {
            if (record.sequence[i] == id) d = record.degrees[i];
        }
        out.push_back(d);
    }
    return out;
}

Manifest generate_dataset(const DatasetConfig& cfg, std::uint64_t master_seed,
                          const std::filesystem::path& dir) {
    Manifest m = plan_dataset(cfg, master_seed);
    const ManipulationLibrary lib(m.vocabulary(), cfg.entanglement);
    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());

    const auto n = static_cast<std::ptrdiff_t>(m.records.size());
    std::vector<std::string> failures(m.records.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& r = m.records[static_cast<std::size_t>(i)];
        try {
            write_png(render(record_faces(lib, r).manipulated, cfg.image_size), dir / r.image_path);
        } catch (const std::exception& e) {
            failures[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (const auto& f : failures) {
        if (!f.empty()) throw IoError(f);
    }
    write_manifest(m, dir / "manifest.jsonl");
    return m;
}

namespace {

json header_json(const ManifestHeader& h) {
    return json{{"kind", "seqfake-manifest"},
                {"version", h.version},
                {"generator", h.generator},
                {"track", std::string(to_string(h.track))},
                {"vocabulary", h.vocabulary},
                {"image_size", h.image_size},
                {"master_seed", h.master_seed},
                {"alpha", h.alpha},
                {"perturbed", h.perturbed}};
}

}  // namespace

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    const Vocabulary vocab = manifest.vocabulary();
    out << header_json(manifest.header).dump() << '\n';
    for (const auto& r : manifest.records) {
        json perturbations = json::array();
        for (const auto& p : r.perturbations) perturbations.push_back({{"type", p.type}, {"level", p.level}});
        json rec{{"image_path", r.image_path},
                 {"sequence", vocab.names(r.sequence)},
                 {"split", std::string(to_string(r.split))},
                 {"seed", r.seed},
                 {"degrees", r.degrees},
                 {"perturbations", perturbations}};
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    Manifest m;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest " + path.string());
    try {
        const json h = json::parse(line);
        if (h.value("kind", "") != "seqfake-manifest") throw DataError("not a seqfake manifest: " + path.string());
        m.header.version = h.at("version").get<int>();
        if (m.header.version != kManifestVersion) {
            throw IncompatibleError("manifest version " + std::to_string(m.header.version) + " is not supported");
        }
        m.header.generator = h.at("generator").get<std::string>();
        m.header.track = parse_track(h.at("track").get<std::string>());
        m.header.vocabulary = h.at("vocabulary").get<std::vector<std::string>>();
        m.header.image_size = h.at("image_size").get<int>();
        m.header.master_seed = h.at("master_seed").get<std::uint64_t>();
        m.header.alpha = h.value("alpha", 0.15);
        m.header.perturbed = h.value("perturbed", false);
        const Vocabulary vocab = m.vocabulary();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            DatasetRecord r;
            r.image_path = j.at("image_path").get<std::string>();
            r.sequence = vocab.parse(j.at("sequence").get<std::vector<std::string>>());
            r.split = parse_split(j.at("split").get<std::string>());
            r.seed = j.at("seed").get<std::uint64_t>();
            r.degrees = j.at("degrees").get<std::vector<double>>();
            for (const auto& p : j.at("perturbations")) {
                r.perturbations.push_back({p.at("type").get<std::string>(), p.at("level").get<int>()});
            }
            m.records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace seqfake::synth
