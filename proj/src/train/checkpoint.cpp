#include "seqfake/train/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "seqfake/error.hpp"

namespace seqfake::train {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'Q', 'F', 'K', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class U>
void put(std::ostream& os, U v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& is, const std::filesystem::path& path) {
    U v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw IoError("truncated checkpoint: " + path.string());
    return v;
}

}  // namespace

Checkpoint capture(const model::Model<float>& m, const nlohmann::json& run, double best_metric, int best_epoch) {
    Checkpoint ck;
    ck.model = m.config();
    ck.track = m.vocab().track();
    ck.labels = m.vocab().labels();
    ck.run = run;
    for (const auto& p : m.store().params()) ck.tensors[p->name] = p->value;
    ck.sharing = m.sharing();
    ck.best_metric = best_metric;
    ck.best_epoch = best_epoch;
    return ck;
}

void restore(const Checkpoint& ck, model::Model<float>& m) {
    if (!(ck.vocabulary() == m.vocab())) throw IncompatibleError("checkpoint vocabulary differs from the model's");
    for (const auto& p : m.store().params()) {
        auto it = ck.tensors.find(p->name);
        if (it == ck.tensors.end()) throw IncompatibleError("checkpoint lacks parameter " + p->name);
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
            throw IncompatibleError("shape mismatch for parameter " + p->name);
        }
        p->value = it->second;
    }
    if (ck.tensors.size() != m.store().params().size()) {
        throw IncompatibleError("checkpoint holds parameters the model does not have");
    }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    nlohmann::json header;
    header["kind"] = "seqfake-checkpoint";
    header["version"] = ck.version;
    header["model"] = ck.model;
    header["track"] = std::string(to_string(ck.track));
    header["labels"] = ck.labels;
    header["run"] = ck.run;
    header["sharing"] = ck.sharing;
    header["best_metric"] = ck.best_metric;
    header["best_epoch"] = ck.best_epoch;
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ck.tensors) {
        entries.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
    }
    header["entries"] = entries;
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.version));
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ck.tensors) {
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw IncompatibleError("not a seqfake checkpoint: " + path.string());
    }
    const auto version = get<std::uint32_t>(is, path);
    if (version != static_cast<std::uint32_t>(kCheckpointVersion)) {
        throw IncompatibleError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                std::to_string(kCheckpointVersion) + ")");
    }
    const auto length = get<std::uint64_t>(is, path);
    std::string text(length, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(length))) throw IoError("truncated checkpoint: " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    if (header.value("kind", "") != "seqfake-checkpoint" || header.value("version", -1) != kCheckpointVersion) {
        throw IncompatibleError("checkpoint header version mismatch: " + path.string());
    }
    Checkpoint ck;
    ck.model = header.at("model").get<model::ModelConfig>();
    ck.track = parse_track(header.at("track").get<std::string>());
    ck.labels = header.at("labels").get<std::vector<std::string>>();
    ck.run = header.at("run");
    ck.sharing = header.at("sharing").get<std::map<std::string, std::vector<std::string>>>();
    ck.best_metric = header.at("best_metric").get<double>();
    ck.best_epoch = header.at("best_epoch").get<int>();
    const auto data_start = is.tellg();
    for (const auto& e : header.at("entries")) {
        const auto rows = e.at("shape").at(0).get<Eigen::Index>();
        const auto cols = e.at("shape").at(1).get<Eigen::Index>();
        nn::Matrix<float> t(rows, cols);
        is.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
        if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
            throw IoError("truncated checkpoint data: " + path.string());
        }
        ck.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
    return ck;
}

}  // namespace seqfake::train
