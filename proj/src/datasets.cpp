#include "srkn/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "binio.hpp"
#include "srkn/errors.hpp"

namespace srkn {

std::size_t SequenceBatch::length(std::size_t b) const {
    std::size_t n = 0;
    while (n < T && valid(n, b)) ++n;
    return n;
}

std::vector<double> SequenceBatch::sequence(std::size_t b) const {
    require(b < B, "sequence index out of range");
    const std::size_t n = length(b);
    std::vector<double> out;
    out.reserve(n * D);
    for (std::size_t t = 0; t < n; ++t) {
        auto s = step(t, b);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

SequenceBatch SequenceBatch::select(std::span<const std::size_t> indices) const {
    SequenceBatch out;
    out.kind = kind;
    out.T = T;
    out.B = indices.size();
    out.D = D;
    out.height = height;
    out.width = width;
    out.data.resize(T * out.B * D);
    if (!mask.empty()) out.mask.resize(T * out.B);
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const std::size_t b = indices[j];
        require(b < B, "select: index out of range");
        for (std::size_t t = 0; t < T; ++t) {
            auto s = step(t, b);
            std::copy(s.begin(), s.end(), out.data.begin() + (t * out.B + j) * D);
            if (!mask.empty()) out.mask[t * out.B + j] = mask[t * B + b];
        }
        if (!labels.empty()) out.labels.push_back(labels[b]);
        if (!junctions.empty()) out.junctions.push_back(junctions[b]);
    }
    return out;
}

void SequenceBatch::validate() const {
    require(data.size() == T * B * D, "batch data size does not match T x B x D");
    require(mask.empty() || mask.size() == T * B, "batch mask size does not match T x B");
    require(!is_image() || height * width == D, "image batch: D must equal height x width");
    require(labels.empty() || labels.size() == B, "batch labels must have one entry per sequence");
    require(junctions.empty() || junctions.size() == B, "batch junction metadata must have one entry per sequence");
    for (double v : data) require(std::isfinite(v), "batch data must be finite");
    for (std::size_t b = 0; b < B && !mask.empty(); ++b) {
        const std::size_t n = length(b);
        for (std::size_t t = n; t < T; ++t) require(!valid(t, b), "batch mask must be prefix-contiguous");
    }
}

SequenceBatch batch_from_sequences(const std::vector<std::vector<double>>& seqs, std::size_t T,
                                   std::size_t D, std::string kind) {
    SequenceBatch out;
    out.kind = std::move(kind);
    out.T = T;
    out.B = seqs.size();
    out.D = D;
    out.data.resize(T * out.B * D);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        require(seqs[b].size() == T * D, "batch_from_sequences: sequence has the wrong length");
        for (std::size_t t = 0; t < T; ++t)
            std::copy_n(seqs[b].begin() + t * D, D, out.data.begin() + (t * out.B + b) * D);
    }
    return out;
}

// ---------------------------------------------------------------- four modes

int four_mode_label(double x, double y) { return (x > 0 ? 0 : 2) + (y > 0 ? 0 : 1); }

SequenceBatch gen_four_modes(std::size_t n, std::uint64_t seed, const FourModeOptions& opt) {
    require(n >= 1, "gen_four_modes: n must be >= 1");
    require(opt.noise >= 0.0, "gen_four_modes: noise must be non-negative");
    constexpr std::size_t T = 5, D = 2;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.5);
    SequenceBatch out;
    out.kind = "four_modes";
    out.T = T;
    out.B = n;
    out.D = D;
    out.data.resize(T * n * D);
    out.labels.resize(n);
    for (std::size_t b = 0; b < n; ++b) {
        const double sign[2] = {coin(rng) ? 1.0 : -1.0, coin(rng) ? 1.0 : -1.0};
        for (std::size_t t = 0; t < T; ++t) {
            const double level = t < 3 ? 0.0 : opt.jump * static_cast<double>(t - 2);
            for (std::size_t d = 0; d < D; ++d)
                out.data[(t * n + b) * D + d] = sign[d] * level + opt.noise * nd(rng);
        }
        out.labels[b] = four_mode_label(sign[0], sign[1]);
    }
    return out;
}

// ---------------------------------------------------------------- car images

bool CarTrack::on_track(int x, int y) {
    const bool horizontal = (y == kTop || y == kBottom) && x >= kLeft && x <= kRight;
    const bool vertical = (x == kLeft || x == kMid || x == kRight) && y >= kTop && y <= kBottom;
    return horizontal || vertical;
}

bool CarTrack::is_junction(int x, int y) { return x == kMid && (y == kTop || y == kBottom); }

void CarTrack::step(int& x, int& y, Heading h) {
    switch (h) {
        case Heading::east: ++x; break;
        case Heading::south: ++y; break;
        case Heading::west: --x; break;
        case Heading::north: --y; break;
    }
}

std::vector<Heading> CarTrack::exits(int x, int y) {
    std::vector<Heading> out;
    for (int code = 0; code < 4; ++code) {
        int nx = x, ny = y;
        step(nx, ny, static_cast<Heading>(code));
        if (on_track(nx, ny)) out.push_back(static_cast<Heading>(code));
    }
    return out;
}

std::vector<Heading> CarTrack::continuations(int x, int y, Heading in) {
    const auto reverse = static_cast<Heading>((static_cast<int>(in) + 2) % 4);
    std::vector<Heading> out;
    for (Heading h : exits(x, y))
        if (h != reverse) out.push_back(h);
    return out;
}

std::vector<std::pair<int, int>> CarTrack::cells() {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < kCanvas; ++y)
        for (int x = 0; x < kCanvas; ++x)
            if (on_track(x, y)) out.emplace_back(x, y);
    return out;
}

std::vector<double> render_car(int x, int y) {
    constexpr int N = CarTrack::kCanvas;
    std::vector<double> frame(N * N, 0.0);
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int px = x + dx, py = y + dy;
            require(px >= 0 && px < N && py >= 0 && py < N, "render_car: car leaves the canvas");
            frame[py * N + px] = 1.0;
        }
    return frame;
}

std::pair<int, int> locate_car(std::span<const double> frame) {
    constexpr int N = CarTrack::kCanvas;
    require(frame.size() == static_cast<std::size_t>(N * N), "locate_car: frame must be 24 x 24");
    double best = -1.0;
    std::pair<int, int> at{1, 1};
    for (int y = 1; y < N - 1; ++y)
        for (int x = 1; x < N - 1; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) s += frame[(y + dy) * N + (x + dx)];
            if (s > best) {
                best = s;
                at = {x, y};
            }
        }
    return at;
}

SequenceBatch gen_car_images(std::size_t n, std::size_t seq_len, std::uint64_t seed) {
    require(n >= 1, "gen_car_images: n must be >= 1");
    require(seq_len >= 1, "gen_car_images: seq_len must be >= 1");
    constexpr std::size_t N = CarTrack::kCanvas;
    const auto cells = CarTrack::cells();
    std::mt19937_64 rng(seed);
    SequenceBatch out;
    out.kind = "car_images";
    out.T = seq_len;
    out.B = n;
    out.D = N * N;
    out.height = out.width = N;
    out.data.assign(seq_len * n * out.D, 0.0);
    out.junctions.resize(n);
    std::uniform_int_distribution<std::size_t> pick_cell(0, cells.size() - 1);
    for (std::size_t b = 0; b < n; ++b) {
        auto [x, y] = cells[pick_cell(rng)];
        auto start = CarTrack::exits(x, y);
        Heading h = start[std::uniform_int_distribution<std::size_t>(0, start.size() - 1)(rng)];
        for (std::size_t t = 0; t < seq_len; ++t) {
            if (t == 1) {
                CarTrack::step(x, y, h);
            } else if (t > 1) {
                auto options = CarTrack::continuations(x, y, h);
                const std::size_t k = options.size() == 1
                                          ? 0
                                          : std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng);
                if (options.size() > 1) out.junctions[b].push_back({t - 1, k, x, y, h, options[k]});
                h = options[k];
                CarTrack::step(x, y, h);
            }
            auto frame = render_car(x, y);
            std::copy(frame.begin(), frame.end(), out.data.begin() + (t * n + b) * out.D);
        }
    }
    return out;
}

// ---------------------------------------------------------------- taxi

void TaxiConfig::validate() const {
    require(lon_min < lon_max && lat_min < lat_max, "taxi bounding box is degenerate");
    require(seq_len >= 1, "taxi sequence length must be >= 1");
    require(n_train >= 1, "taxi split sizes must be positive");
}

void NormStats::normalize(std::span<double> xy) const {
    require(xy.size() % 2 == 0, "normalize: expected (x, y) pairs");
    for (std::size_t i = 0; i < xy.size(); ++i) xy[i] = (xy[i] - mean[i % 2]) / std[i % 2];
}

void NormStats::denormalize(std::span<double> xy) const {
    require(xy.size() % 2 == 0, "denormalize: expected (x, y) pairs");
    for (std::size_t i = 0; i < xy.size(); ++i) xy[i] = xy[i] * std[i % 2] + mean[i % 2];
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

bool parse_polyline(std::string_view f, std::vector<double>& out) {
    out.clear();
    auto skip_ws = [&](std::size_t& i) {
        while (i < f.size() && (f[i] == ' ' || f[i] == '\t')) ++i;
    };
    auto number = [&](std::size_t& i, double& v) {
        skip_ws(i);
        auto [ptr, ec] = std::from_chars(f.data() + i, f.data() + f.size(), v);
        if (ec != std::errc() || !std::isfinite(v)) return false;
        i = static_cast<std::size_t>(ptr - f.data());
        skip_ws(i);
        return true;
    };
    std::size_t i = 0;
    skip_ws(i);
    if (i >= f.size() || f[i] != '[') return false;
    ++i;
    skip_ws(i);
    if (i < f.size() && f[i] == ']') return true;
    while (i < f.size()) {
        skip_ws(i);
        if (f[i] != '[') return false;
        ++i;
        double lon, lat;
        if (!number(i, lon) || i >= f.size() || f[i] != ',') return false;
        ++i;
        if (!number(i, lat) || i >= f.size() || f[i] != ']') return false;
        ++i;
        out.push_back(lon);
        out.push_back(lat);
        skip_ws(i);
        if (i < f.size() && f[i] == ',') {
            ++i;
            continue;
        }
        if (i < f.size() && f[i] == ']') {
            ++i;
            skip_ws(i);
            return i == f.size();
        }
        return false;
    }
    return false;
}

TaxiData load_taxi(const std::filesystem::path& path, const TaxiConfig& cfg) {
    cfg.validate();
    if (!std::filesystem::exists(path))
        throw IoError("dataset not bundled, download required: the Porto taxi corpus (train.csv from the "
                      "ECML/PKDD 15 taxi trajectory challenge) was not found at '" +
                      path.string() + "'. Download it and pass its path via data.path.");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");

    TaxiData out;
    std::vector<std::vector<double>> kept;
    std::string line;
    std::size_t column = std::string::npos;
    bool first = true;
    std::vector<double> poly;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (first) {
            first = false;
            auto it = std::find(fields.begin(), fields.end(), "POLYLINE");
            if (it != fields.end()) {
                column = static_cast<std::size_t>(it - fields.begin());
                continue;
            }
        }
        ++out.rows;
        const std::size_t col = column == std::string::npos ? fields.size() - 1 : column;
        if (col >= fields.size() || !parse_polyline(fields[col], poly)) {
            ++out.malformed;
            continue;
        }
        const std::size_t points = poly.size() / 2;
        if (points < cfg.seq_len) {
            ++out.too_short;
            continue;
        }
        bool inside = true;
        for (std::size_t p = 0; p < points && inside; ++p)
            inside = poly[2 * p] >= cfg.lon_min && poly[2 * p] <= cfg.lon_max &&
                     poly[2 * p + 1] >= cfg.lat_min && poly[2 * p + 1] <= cfg.lat_max;
        if (!inside) {
            ++out.outside_box;
            continue;
        }
        kept.emplace_back(poly.begin(), poly.begin() + static_cast<std::ptrdiff_t>(2 * cfg.seq_len));
    }
    if (out.rows == 0) throw ContractError("taxi file '" + path.string() + "' contains no trajectories");
    const std::size_t needed = cfg.n_train + cfg.n_val + cfg.n_test;
    if (kept.size() < needed)
        throw ContractError("taxi file yields " + std::to_string(kept.size()) +
                            " usable trajectories but the split needs " + std::to_string(needed));

    std::vector<std::size_t> order(kept.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);

    // Train-set statistics.
    double sum[2] = {0, 0}, sum2[2] = {0, 0};
    const double count = static_cast<double>(cfg.n_train * cfg.seq_len);
    for (std::size_t j = 0; j < cfg.n_train; ++j) {
        const auto& s = kept[order[j]];
        for (std::size_t i = 0; i < s.size(); ++i) {
            sum[i % 2] += s[i];
            sum2[i % 2] += s[i] * s[i];
        }
    }
    for (int d = 0; d < 2; ++d) {
        out.stats.mean[d] = sum[d] / count;
        const double var = std::max(0.0, sum2[d] / count - out.stats.mean[d] * out.stats.mean[d]);
        out.stats.std[d] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }

    auto make = [&](std::size_t begin, std::size_t n) {
        std::vector<std::vector<double>> seqs;
        seqs.reserve(n);
        for (std::size_t j = begin; j < begin + n; ++j) {
            auto s = kept[order[j]];
            out.stats.normalize(s);
            seqs.push_back(std::move(s));
        }
        return batch_from_sequences(seqs, cfg.seq_len, 2, "taxi");
    };
    out.train = make(0, cfg.n_train);
    out.val = make(cfg.n_train, cfg.n_val);
    out.test = make(cfg.n_train + cfg.n_val, cfg.n_test);
    return out;
}

// ---------------------------------------------------------------- container

namespace {

constexpr char kDataMagic[9] = "SRKNDATA";
constexpr std::uint32_t kDataVersion = 1;

std::string join_labels(const std::vector<int>& labels) {
    std::string s;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(labels[i]);
    }
    return s;
}

// Junction events as "b:step:branch:x:y:in:out" joined by ';'.
std::string join_junctions(const std::vector<std::vector<JunctionEvent>>& all) {
    std::string s;
    for (std::size_t b = 0; b < all.size(); ++b)
        for (const auto& e : all[b]) {
            if (!s.empty()) s += ';';
            s += std::to_string(b) + ':' + std::to_string(e.step) + ':' + std::to_string(e.branch) + ':' +
                 std::to_string(e.x) + ':' + std::to_string(e.y) + ':' +
                 std::to_string(static_cast<int>(e.in)) + ':' + std::to_string(static_cast<int>(e.out));
        }
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const SequenceBatch& batch,
                   const std::vector<std::pair<std::string, std::string>>& extra_meta) {
    batch.validate();
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write '" + path.string() + "'");
        binio::put_magic(os, kDataMagic);
        binio::put<std::uint32_t>(os, kDataVersion);
        binio::put<std::uint64_t>(os, batch.T);
        binio::put<std::uint64_t>(os, batch.B);
        if (batch.is_image()) {
            binio::put<std::uint32_t>(os, 2);
            binio::put<std::uint64_t>(os, batch.height);
            binio::put<std::uint64_t>(os, batch.width);
        } else {
            binio::put<std::uint32_t>(os, 1);
            binio::put<std::uint64_t>(os, batch.D);
        }
        binio::put<std::uint8_t>(os, batch.mask.empty() ? 0 : 1);
        binio::put_doubles(os, batch.data);
        if (!batch.mask.empty())
            os.write(reinterpret_cast<const char*>(batch.mask.data()), static_cast<std::streamsize>(batch.mask.size()));
        if (!os) throw IoError("write failed for '" + path.string() + "'");
    }
    std::ofstream meta(path.string() + ".meta", std::ios::trunc);
    if (!meta) throw IoError("cannot write '" + path.string() + ".meta'");
    meta << "kind=" << batch.kind << '\n';
    meta << "T=" << batch.T << "\nB=" << batch.B << "\nD=" << batch.D << '\n';
    if (batch.is_image()) meta << "height=" << batch.height << "\nwidth=" << batch.width << '\n';
    for (const auto& [k, v] : extra_meta) meta << k << '=' << v << '\n';
    if (!batch.labels.empty()) meta << "labels=" << join_labels(batch.labels) << '\n';
    if (!batch.junctions.empty()) meta << "junctions=" << join_junctions(batch.junctions) << '\n';
    if (!meta) throw IoError("write failed for '" + path.string() + ".meta'");
}

SequenceBatch read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
    binio::expect_magic(is, kDataMagic, "dataset");
    const auto version = binio::get<std::uint32_t>(is);
    if (version != kDataVersion) throw IoError("unsupported dataset version " + std::to_string(version));
    SequenceBatch b;
    b.T = binio::get<std::uint64_t>(is);
    b.B = binio::get<std::uint64_t>(is);
    const auto rank = binio::get<std::uint32_t>(is);
    if (rank == 2) {
        b.height = binio::get<std::uint64_t>(is);
        b.width = binio::get<std::uint64_t>(is);
        b.D = b.height * b.width;
    } else if (rank == 1) {
        b.D = binio::get<std::uint64_t>(is);
    } else {
        throw IoError("corrupt dataset header");
    }
    const bool has_mask = binio::get<std::uint8_t>(is) != 0;
    if (b.T * b.B * b.D > (std::size_t{1} << 34)) throw IoError("corrupt dataset header");
    b.data.resize(b.T * b.B * b.D);
    binio::get_doubles(is, b.data);
    if (has_mask) {
        b.mask.resize(b.T * b.B);
        is.read(reinterpret_cast<char*>(b.mask.data()), static_cast<std::streamsize>(b.mask.size()));
        if (!is) throw IoError("unexpected end of file");
    }

    std::ifstream meta(path.string() + ".meta");
    std::string line;
    while (meta && std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "kind") {
            b.kind = value;
        } else if (key == "labels") {
            for (const auto& s : split(value, ',')) b.labels.push_back(std::stoi(s));
        } else if (key == "junctions") {
            b.junctions.assign(b.B, {});
            for (const auto& s : split(value, ';')) {
                auto f = split(s, ':');
                if (f.size() != 7) throw IoError("corrupt junction metadata");
                JunctionEvent e{std::stoul(f[1]), std::stoul(f[2]), std::stoi(f[3]), std::stoi(f[4]),
                                static_cast<Heading>(std::stoi(f[5])), static_cast<Heading>(std::stoi(f[6]))};
                b.junctions.at(std::stoul(f[0])).push_back(e);
            }
        }
    }
    if (b.kind == "car_images" && b.junctions.empty()) b.junctions.assign(b.B, {});
    b.validate();
    return b;
}

}  // namespace srkn
