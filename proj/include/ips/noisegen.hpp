#pragma once

// Structured noise: random Bezier curves whose control-point counts follow the
// counts needed to trace MNIST digits, stroked at a controllable thickness.

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "ips/image.hpp"
#include "ips/rng.hpp"

namespace ips::noise {

inline constexpr int kCurvePoints = 100;
inline constexpr double kDefaultThickness = 1.925;
inline constexpr int kSupersample = 4;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

struct BezierSpec {
    std::vector<Point2> control_points;

    int count() const { return static_cast<int>(control_points.size()); }
    int degree() const { return count() - 1; }
    friend bool operator==(const BezierSpec&, const BezierSpec&) = default;
};

struct NoiseGlyph {
    Image pixels;
    double thickness = kDefaultThickness;
    BezierSpec spec;
};

/// Categorical law over control-point counts, as integer weights.
struct ControlCountLaw {
    std::array<int, 3> counts{4, 6, 8};
    std::array<int, 3> weights{3, 5, 1};

    int total_weight() const { return weights[0] + weights[1] + weights[2]; }
    double probability(int count) const;
    /// Maps a ticket drawn uniformly from [0, total_weight) to its count.
    int count_for_ticket(int ticket) const;
};

int sample_control_count(Rng& rng, const ControlCountLaw& law = {});

/// Throws std::invalid_argument unless count is one of the law's counts.
BezierSpec sample_control_points(int count, int glyph_size, Rng& rng, const ControlCountLaw& law = {});

/// Bernstein form. Throws std::invalid_argument for t outside [0, 1].
Point2 bezier_point(const BezierSpec& spec, double t);

/// Curve evaluated at t_j = j / (points - 1), endpoints included.
std::vector<Point2> discretize_curve(const BezierSpec& spec, int points = kCurvePoints);

/// Strokes the polyline with the given width on a kSupersample-times finer
/// grid and box-filters back down; values in [0, 1].
Image rasterize_curve(std::span<const Point2> curve, double thickness, int glyph_size);

NoiseGlyph make_glyph(const BezierSpec& spec, double thickness, int glyph_size);

/// Draws count and points, then renders.
NoiseGlyph sample_glyph(Rng& rng, double thickness, int glyph_size, const ControlCountLaw& law = {});

/// Writes `count` glyphs as PNGs plus manifest.json (spec, thickness, seed).
void export_glyph_bank(const std::filesystem::path& dir, int count, double thickness, int glyph_size,
                       std::uint64_t seed);

} // namespace ips::noise
