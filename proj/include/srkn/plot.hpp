#pragma once

// Static SVG figures for generated continuations.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace srkn {

// Fill color of mixture component k (cycles after eight).
std::string mode_color(std::size_t k);

// 2-d trajectories: one "prefix" polyline through the observed steps, then one
// "rollout" polyline per sample starting at the last prefix point. Each
// generated step is drawn as a circle carrying data-mode and the mode color.
struct TrajectoryFigure {
    std::vector<std::array<double, 2>> prefix;
    std::vector<std::vector<std::array<double, 2>>> rollouts;
    std::vector<std::vector<std::size_t>> modes;  // per rollout, per step
    std::string title;
};

std::string trajectory_svg(const TrajectoryFigure& fig);

// Image sequences: one row per sample, observed frames first (grey border),
// generated frames bordered in the color of their mode.
struct TileFigure {
    std::size_t height = 0, width = 0;
    std::vector<std::vector<double>> prefix;                 // frames
    std::vector<std::vector<std::vector<double>>> rollouts;  // [sample][step] frame
    std::vector<std::vector<std::size_t>> modes;
    std::string title;
};

std::string tile_svg(const TileFigure& fig);

}  // namespace srkn
