#include "srkn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "srkn/errors.hpp"

namespace srkn {

namespace {

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string mode_color(std::size_t k) { return kPalette[k % std::size(kPalette)]; }

std::string trajectory_svg(const TrajectoryFigure& fig) {
    require(fig.modes.size() == fig.rollouts.size(), "trajectory_svg: one mode trace per rollout");
    require(!fig.prefix.empty(), "trajectory_svg: empty prefix");
    double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double hi[2] = {-lo[0], -lo[1]};
    auto extend = [&](const std::array<double, 2>& p) {
        for (int k = 0; k < 2; ++k) {
            require(std::isfinite(p[k]), "trajectory_svg: non-finite coordinate");
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    };
    for (const auto& p : fig.prefix) extend(p);
    for (std::size_t i = 0; i < fig.rollouts.size(); ++i) {
        require(fig.modes[i].size() == fig.rollouts[i].size(), "trajectory_svg: mode trace length mismatch");
        for (const auto& p : fig.rollouts[i]) extend(p);
    }
    const double size = 480.0, margin = 30.0;
    const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-9});
    auto px = [&](const std::array<double, 2>& p) {
        std::ostringstream os;
        os.precision(6);
        os << margin + (p[0] - lo[0]) / span * size << ',' << margin + (hi[1] - p[1]) / span * size;
        return os.str();
    };

    std::ostringstream os;
    const double full = size + 2 * margin;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << full << "\" height=\"" << full + 20
       << "\" viewBox=\"0 0 " << full << ' ' << full + 20 << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!fig.title.empty())
        os << "<text x=\"" << margin << "\" y=\"" << full + 12 << "\" font-size=\"12\">" << escape(fig.title)
           << "</text>\n";
    for (std::size_t i = 0; i < fig.rollouts.size(); ++i) {
        os << "<polyline class=\"rollout\" fill=\"none\" stroke=\"#888888\" stroke-opacity=\"0.5\" points=\""
           << px(fig.prefix.back());
        for (const auto& p : fig.rollouts[i]) os << ' ' << px(p);
        os << "\"/>\n";
    }
    for (std::size_t i = 0; i < fig.rollouts.size(); ++i)
        for (std::size_t t = 0; t < fig.rollouts[i].size(); ++t) {
            const auto xy = px(fig.rollouts[i][t]);
            const auto comma = xy.find(',');
            os << "<circle class=\"step\" data-sample=\"" << i << "\" data-step=\"" << t << "\" data-mode=\""
               << fig.modes[i][t] << "\" cx=\"" << xy.substr(0, comma) << "\" cy=\"" << xy.substr(comma + 1)
               << "\" r=\"3\" fill=\"" << mode_color(fig.modes[i][t]) << "\"/>\n";
        }
    os << "<polyline class=\"prefix\" fill=\"none\" stroke=\"black\" stroke-width=\"2.5\" points=\"";
    for (std::size_t t = 0; t < fig.prefix.size(); ++t) os << (t ? " " : "") << px(fig.prefix[t]);
    os << "\"/>\n</svg>\n";
    return os.str();
}

std::string tile_svg(const TileFigure& fig) {
    require(fig.height > 0 && fig.width > 0, "tile_svg: frame size must be positive");
    require(fig.modes.size() == fig.rollouts.size(), "tile_svg: one mode trace per rollout");
    const std::size_t px = fig.height * fig.width;
    const double cell = 3.0, pad = 4.0;
    const double tile_w = fig.width * cell + 2 * pad, tile_h = fig.height * cell + 2 * pad;
    std::size_t cols = fig.prefix.size();
    for (const auto& r : fig.rollouts) cols = std::max(cols, fig.prefix.size() + r.size());
    const std::size_t rows = std::max<std::size_t>(1, fig.rollouts.size());

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * tile_w << "\" height=\""
       << rows * tile_h + 20 << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!fig.title.empty())
        os << "<text x=\"4\" y=\"" << rows * tile_h + 14 << "\" font-size=\"12\">" << escape(fig.title)
           << "</text>\n";

    auto tile = [&](const std::vector<double>& frame, std::size_t row, std::size_t col, const std::string& cls,
                    const std::string& stroke, std::string extra) {
        require(frame.size() == px, "tile_svg: frame has the wrong size");
        const double x0 = col * tile_w, y0 = row * tile_h;
        os << "<g class=\"" << cls << "\"" << extra << ">\n";
        os << "<rect x=\"" << x0 + 1 << "\" y=\"" << y0 + 1 << "\" width=\"" << tile_w - 2 << "\" height=\""
           << tile_h - 2 << "\" fill=\"black\" stroke=\"" << stroke << "\" stroke-width=\"2\"/>\n";
        for (std::size_t i = 0; i < fig.height; ++i)
            for (std::size_t j = 0; j < fig.width; ++j) {
                const double v = std::clamp(frame[i * fig.width + j], 0.0, 1.0);
                if (v < 0.05) continue;
                os << "<rect x=\"" << x0 + pad + j * cell << "\" y=\"" << y0 + pad + i * cell << "\" width=\""
                   << cell << "\" height=\"" << cell << "\" fill=\"white\" fill-opacity=\"" << v << "\"/>\n";
            }
        os << "</g>\n";
    };
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < fig.prefix.size(); ++c) tile(fig.prefix[c], r, c, "prefix", "#888888", "");
    for (std::size_t r = 0; r < fig.rollouts.size(); ++r) {
        require(fig.modes[r].size() == fig.rollouts[r].size(), "tile_svg: mode trace length mismatch");
        for (std::size_t t = 0; t < fig.rollouts[r].size(); ++t)
            tile(fig.rollouts[r][t], r, fig.prefix.size() + t, "step", mode_color(fig.modes[r][t]),
                 " data-sample=\"" + std::to_string(r) + "\" data-step=\"" + std::to_string(t) +
                     "\" data-mode=\"" + std::to_string(fig.modes[r][t]) + "\"");
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace srkn
