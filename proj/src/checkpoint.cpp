#include "uthp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uthp {

namespace {

constexpr char kMagic[8] = {'U', 'T', 'H', 'P', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void get_doubles(double* dst, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }

    [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const UthpModel& model) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    const nlohmann::json header = {{"config", to_json(model.config())}, {"num_types", model.num_types()}};
    const std::string text = header.dump();
    put<std::uint64_t>(out, text.size());
    out += text;

    const auto& params = model.params();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& name : params.names()) {
        const auto& v = params.at(name).value();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint64_t>(out, static_cast<std::uint64_t>(v.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(v.cols()));
        out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
    }
    return out;
}

UthpModel deserialize_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw CheckpointError("not a checkpoint file");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");

    const auto header_len = in.get<std::uint64_t>();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.get_string(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    ModelConfig cfg;
    int num_types = 0;
    try {
        cfg = model_config_from_json(header.at("config"));
        num_types = header.at("num_types").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }

    UthpModel model(cfg, num_types, 0);
    auto& params = model.params();
    const auto count = in.get<std::uint32_t>();
    if (count != params.size()) throw CheckpointError("checkpoint tensor count does not match its config");
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = in.get_string(in.get<std::uint32_t>());
        if (!params.contains(name)) throw CheckpointError("unexpected tensor in checkpoint: " + name);
        auto& value = params.entry(name).tensor.mutable_value();
        const auto rows = in.get<std::uint64_t>();
        const auto cols = in.get<std::uint64_t>();
        if (rows != static_cast<std::uint64_t>(value.rows()) || cols != static_cast<std::uint64_t>(value.cols()))
            throw CheckpointError("shape mismatch for tensor " + name);
        in.get_doubles(value.data(), static_cast<std::size_t>(value.size()));
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint tensors");
    return model;
}

void save_checkpoint(const UthpModel& model, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

UthpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

}  // namespace uthp
