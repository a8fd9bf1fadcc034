#include "uthp/data.hpp"

#include "uthp/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace uthp {

using nlohmann::json;

Eigen::VectorXd EventSequence::times() const {
    Eigen::VectorXd t(static_cast<Eigen::Index>(events.size()));
    for (std::size_t i = 0; i < events.size(); ++i) t(static_cast<Eigen::Index>(i)) = events[i].time;
    return t;
}

std::vector<int> EventSequence::type_ids() const {
    std::vector<int> ids;
    ids.reserve(events.size());
    for (const auto& e : events) ids.push_back(e.type_id);
    return ids;
}

std::size_t Dataset::num_predicted_events() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size() > 0 ? s.size() - 1 : 0;
    return n;
}

std::size_t Dataset::num_events() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

EventSequence Batch::row(Eigen::Index b) const {
    EventSequence seq;
    const auto n = lengths.at(static_cast<std::size_t>(b));
    seq.events.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) seq.events.push_back({times(b, i), type_ids(b, i)});
    return seq;
}

std::size_t normalize_ties(EventSequence& seq) {
    std::size_t shifted = 0;
    double prev_raw = 0.0;
    double prev = 0.0;
    std::size_t tie_index = 0;
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const double raw = seq.events[i].time;
        if (!std::isfinite(raw) || raw < 0.0)
            throw DataError("negative or non-finite time at event " + std::to_string(i + 1));
        if (i > 0 && raw < prev_raw)
            throw DataError("times decrease at event " + std::to_string(i + 1));
        tie_index = (i > 0 && raw == prev_raw) ? tie_index + 1 : 0;
        double t = raw;
        if (tie_index > 0) {
            t = raw + static_cast<double>(tie_index) * kTieEpsilon;
            // Large timestamps can swallow the offset; fall back to the next representable value.
            if (t <= prev) t = std::nextafter(prev, INFINITY);
            ++shifted;
        } else if (i > 0 && t <= prev) {
            t = std::nextafter(prev, INFINITY);
            ++shifted;
        }
        seq.events[i].time = t;
        prev_raw = raw;
        prev = t;
    }
    return shifted;
}

namespace {

std::string line_error(std::size_t line_no, const std::string& what) {
    return "line " + std::to_string(line_no) + ": " + what;
}

}  // namespace

Dataset parse_dataset(const std::string& text, std::optional<int> declared_num_types) {
    if (declared_num_types && *declared_num_types < 1)
        throw DataError("declared num_types must be positive");

    Dataset d;
    std::optional<int> header_types;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t tie_shifts = 0;
    int max_type = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(line_error(line_no, std::string("malformed JSON: ") + e.what()));
        }
        if (!j.is_object()) throw DataError(line_error(line_no, "expected a JSON object"));

        if (j.contains("num_types") && !j.contains("events")) {
            if (line_no != 1 || !d.sequences.empty())
                throw DataError(line_error(line_no, "header is only allowed on line 1"));
            if (!j["num_types"].is_number_integer() || j["num_types"].get<long long>() < 1)
                throw DataError(line_error(line_no, "num_types must be a positive integer"));
            header_types = j["num_types"].get<int>();
            continue;
        }
        if (!j.contains("events") || !j["events"].is_array())
            throw DataError(line_error(line_no, "missing \"events\" array"));
        const auto& events = j["events"];
        if (events.empty()) throw DataError(line_error(line_no, "sequence has no events"));

        EventSequence seq;
        seq.events.reserve(events.size());
        for (const auto& e : events) {
            if (!e.is_object() || !e.contains("t") || !e.contains("c") || !e["t"].is_number() ||
                !e["c"].is_number_integer())
                throw DataError(line_error(line_no, "event must be {\"t\": number, \"c\": integer}"));
            const double t = e["t"].get<double>();
            const long long c = e["c"].get<long long>();
            if (t < 0.0) throw DataError(line_error(line_no, "negative time"));
            if (c < 1) throw DataError(line_error(line_no, "type_id out of range"));
            seq.events.push_back({t, static_cast<int>(c)});
            max_type = std::max(max_type, static_cast<int>(c));
        }
        try {
            tie_shifts += normalize_ties(seq);
        } catch (const DataError& e) {
            throw DataError(line_error(line_no, e.what()));
        }
        d.sequences.push_back(std::move(seq));
    }

    if (d.sequences.empty()) throw DataError("empty dataset");
    if (tie_shifts > 0)
        log_warning("separated " + std::to_string(tie_shifts) + " tied timestamps by 1e-9 steps");

    const std::optional<int> declared = declared_num_types ? declared_num_types : header_types;
    if (declared) {
        if (max_type > *declared)
            throw DataError("type_id out of range: " + std::to_string(max_type) + " > num_types " +
                            std::to_string(*declared));
        d.num_types = *declared;
    } else {
        d.num_types = max_type;
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<int> declared_num_types) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), declared_num_types);
}

std::string serialize_dataset(const Dataset& d) {
    std::string out = json{{"num_types", d.num_types}}.dump() + "\n";
    for (const auto& seq : d.sequences) {
        json events = json::array();
        for (const auto& e : seq.events) events.push_back({{"t", e.time}, {"c", e.type_id}});
        out += json{{"events", std::move(events)}}.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset file: " + path.string());
    out << serialize_dataset(d);
}

std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& d, const std::array<double, 3>& ratios,
                                                    std::uint64_t seed) {
    for (double r : ratios)
        if (!(r >= 0.0)) throw DataError("split ratios must be non-negative");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw DataError("split ratios must sum to 1");

    const std::size_t n = d.size();
    std::array<std::size_t, 3> sizes{};
    sizes[0] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[0] + 1e-9));
    sizes[1] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1] + 1e-9));
    sizes[1] = std::min(sizes[1], n - sizes[0]);
    sizes[2] = n - sizes[0] - sizes[1];
    // A part whose ratio is zero takes nothing; its share goes to the last positive part.
    if (ratios[2] == 0.0 && sizes[2] > 0) {
        const std::size_t to = ratios[1] > 0.0 ? 1 : 0;
        sizes[to] += sizes[2];
        sizes[2] = 0;
    }
    for (std::size_t k = 0; k < 3; ++k)
        if (ratios[k] > 0.0 && sizes[k] == 0)
            throw DataError("split leaves part " + std::to_string(k) + " empty");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_key(seed, {0x5b1u}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    std::array<Dataset, 3> parts;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        parts[k].num_types = d.num_types;
        for (std::size_t j = 0; j < sizes[k]; ++j) parts[k].sequences.push_back(d.sequences[order[pos++]]);
    }
    return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

std::vector<Batch> make_batches(const Dataset& d, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size == 0) throw DataError("batch_size must be at least 1");
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle_seed) {
        Rng rng(derive_key(*shuffle_seed, {0xba7cu}));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    }

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(order.size(), start + batch_size);
        Eigen::Index max_len = 0;
        for (std::size_t k = start; k < stop; ++k)
            max_len = std::max<Eigen::Index>(max_len, static_cast<Eigen::Index>(d.sequences[order[k]].size()));

        Batch b;
        const auto rows = static_cast<Eigen::Index>(stop - start);
        b.times = Eigen::MatrixXd::Zero(rows, max_len);
        b.type_ids = Eigen::MatrixXi::Constant(rows, max_len, kPadType);
        b.pad_mask.setConstant(rows, max_len, false);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const std::size_t id = order[start + static_cast<std::size_t>(r)];
            const auto& seq = d.sequences[id];
            for (std::size_t i = 0; i < seq.size(); ++i) {
                const auto c = static_cast<Eigen::Index>(i);
                b.times(r, c) = seq.events[i].time;
                b.type_ids(r, c) = seq.events[i].type_id;
                b.pad_mask(r, c) = true;
            }
            b.lengths.push_back(static_cast<Eigen::Index>(seq.size()));
            b.sequence_ids.push_back(id);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

Dataset rescale_times(const Dataset& d, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DataError("time scale must be positive");
    Dataset out = d;
    if (scale == 1.0) return out;
    for (auto& s : out.sequences)
        for (auto& e : s.events) e.time *= scale;
    return out;
}

}  // namespace uthp
