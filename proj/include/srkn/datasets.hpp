#pragma once

// Sequence containers, the two synthetic generators, Porto taxi ingestion and
// the on-disk dataset format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace srkn {

// Direction codes used by the car track: +x, +y, -x, -y (image coordinates,
// y grows downward).
enum class Heading : int { east = 0, south = 1, west = 2, north = 3 };

struct JunctionEvent {
    std::size_t step = 0;    // 0-based frame index at which the car sits on the junction
    std::size_t branch = 0;  // index into the sorted list of admissible headings
    int x = 0, y = 0;
    Heading in = Heading::east;
    Heading out = Heading::east;
};

// Time-major batch [T x B x D]. Image batches set height/width with
// D = height * width.
struct SequenceBatch {
    std::string kind;
    std::size_t T = 0, B = 0, D = 0;
    std::size_t height = 0, width = 0;
    std::vector<double> data;
    std::vector<std::uint8_t> mask;  // T x B; empty means every step is valid
    std::vector<int> labels;         // per sequence, empty if undefined
    std::vector<std::vector<JunctionEvent>> junctions;  // car data only

    bool is_image() const { return height > 0; }
    std::span<const double> step(std::size_t t, std::size_t b) const {
        return {data.data() + (t * B + b) * D, D};
    }
    bool valid(std::size_t t, std::size_t b) const { return mask.empty() || mask[t * B + b] != 0; }
    // Length of the valid prefix of sequence b.
    std::size_t length(std::size_t b) const;
    // Sequence b as a contiguous [length x D] array.
    std::vector<double> sequence(std::size_t b) const;
    SequenceBatch select(std::span<const std::size_t> indices) const;
    // Throws ContractError on inconsistent sizes, non-finite data or a mask
    // that is not prefix-contiguous.
    void validate() const;
};

// Builds a batch from equal-length row-major sequences [T x D] each.
SequenceBatch batch_from_sequences(const std::vector<std::vector<double>>& seqs, std::size_t T,
                                   std::size_t D, std::string kind = "custom");

struct FourModeOptions {
    double noise = 0.05;
    double jump = 1.0;  // step-4 magnitude; step 5 doubles it
};

// Labels: 0 (+,+), 1 (+,-), 2 (-,+), 3 (-,-).
SequenceBatch gen_four_modes(std::size_t n, std::uint64_t seed, const FourModeOptions& opt = {});
int four_mode_label(double x, double y);

// Track geometry for the car sequences.
struct CarTrack {
    static constexpr int kCanvas = 24;
    static constexpr int kCarSide = 3;
    static constexpr int kLeft = 2, kMid = 12, kRight = 22, kTop = 8, kBottom = 16;

    static bool on_track(int x, int y);
    static bool is_junction(int x, int y);
    // Admissible headings from (x, y) excluding reversal of `in`, sorted by code.
    static std::vector<Heading> continuations(int x, int y, Heading in);
    static std::vector<Heading> exits(int x, int y);
    static void step(int& x, int& y, Heading h);
    // Every track cell in scan order.
    static std::vector<std::pair<int, int>> cells();
};

SequenceBatch gen_car_images(std::size_t n, std::size_t seq_len, std::uint64_t seed);
// Renders a 3 x 3 car centred at (x, y) into a zeroed 24 x 24 frame.
std::vector<double> render_car(int x, int y);
// Best-matching car centre for a frame (max summed intensity over 3 x 3
// windows); ties go to the first window in scan order.
std::pair<int, int> locate_car(std::span<const double> frame);

struct TaxiConfig {
    double lon_min = -8.73, lon_max = -8.50;
    double lat_min = 41.10, lat_max = 41.25;
    std::size_t seq_len = 30;
    std::size_t n_train = 86386, n_val = 200, n_test = 10000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct NormStats {
    double mean[2] = {0.0, 0.0};
    double std[2] = {1.0, 1.0};

    void normalize(std::span<double> xy_pairs) const;
    void denormalize(std::span<double> xy_pairs) const;
};

struct TaxiData {
    SequenceBatch train, val, test;
    NormStats stats;
    std::size_t rows = 0;
    std::size_t malformed = 0;
    std::size_t outside_box = 0;
    std::size_t too_short = 0;
};

// Parses a POLYLINE field "[[lon,lat],[lon,lat],...]". Returns false on a
// malformed field.
bool parse_polyline(std::string_view field, std::vector<double>& out);
// Splits one delimited line honouring double quotes.
std::vector<std::string> split_csv_line(std::string_view line);

TaxiData load_taxi(const std::filesystem::path& path, const TaxiConfig& cfg);

// Flat binary container plus a "<path>.meta" key=value sidecar.
void write_dataset(const std::filesystem::path& path, const SequenceBatch& batch,
                   const std::vector<std::pair<std::string, std::string>>& extra_meta = {});
SequenceBatch read_dataset(const std::filesystem::path& path);

}  // namespace srkn
