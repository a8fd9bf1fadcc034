#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace uthp {

/// PAD type id; real event types are 1..C.
inline constexpr int kPadType = 0;

/// Offset added per tied timestamp at load time.
inline constexpr double kTieEpsilon = 1e-9;

struct Event {
    double time = 0.0;
    int type_id = 1;

    friend bool operator==(const Event&, const Event&) = default;
};

struct EventSequence {
    std::vector<Event> events;

    [[nodiscard]] std::size_t size() const noexcept { return events.size(); }
    [[nodiscard]] Eigen::VectorXd times() const;
    [[nodiscard]] std::vector<int> type_ids() const;

    friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

struct Dataset {
    std::vector<EventSequence> sequences;
    int num_types = 0;

    [[nodiscard]] std::size_t size() const noexcept { return sequences.size(); }
    /// Number of events that are scored (every event but the first of each sequence).
    [[nodiscard]] std::size_t num_predicted_events() const noexcept;
    [[nodiscard]] std::size_t num_events() const noexcept;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Padded view of a group of sequences. Row b holds sequence `sequence_ids[b]`
/// of the source dataset in its first `lengths[b]` columns.
struct Batch {
    Eigen::MatrixXd times;
    Eigen::MatrixXi type_ids;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> pad_mask;
    std::vector<Eigen::Index> lengths;
    std::vector<std::size_t> sequence_ids;

    [[nodiscard]] Eigen::Index batch_size() const noexcept { return times.rows(); }
    [[nodiscard]] Eigen::Index max_length() const noexcept { return times.cols(); }
    /// The unpadded prefix of row b as a sequence.
    [[nodiscard]] EventSequence row(Eigen::Index b) const;
};

/// Validates a sequence in place: rejects negative or non-finite times and
/// decreasing order, and separates tied timestamps by k * kTieEpsilon.
/// Returns the number of timestamps that were shifted.
std::size_t normalize_ties(EventSequence& seq);

/// Loads a JSON-Lines dataset. Line 1 may be a header {"num_types": C}.
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<int> declared_num_types = std::nullopt);

/// Parses the JSON-Lines dataset format from an in-memory string.
Dataset parse_dataset(const std::string& text, std::optional<int> declared_num_types = std::nullopt);

/// Writes the JSON-Lines format, header line included.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& d);

/// Deterministic shuffled train/dev/test partition. Part sizes are
/// floor(N * ratio) for train and dev; test takes the remainder.
std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& d,
                                                    const std::array<double, 3>& ratios,
                                                    std::uint64_t seed);

/// Groups sequences into padded batches. Without a seed the dataset order is kept.
std::vector<Batch> make_batches(const Dataset& d, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

/// Multiplies every timestamp by `scale` (> 0).
Dataset rescale_times(const Dataset& d, double scale);

}  // namespace uthp
