#include "ips/noisegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace ips::noise {

double ControlCountLaw::probability(int count) const {
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == count) {
            return static_cast<double>(weights[i]) / total_weight();
        }
    }
    return 0.0;
}

int ControlCountLaw::count_for_ticket(int ticket) const {
    if (ticket < 0 || ticket >= total_weight()) {
        throw std::out_of_range("count_for_ticket: ticket outside [0, total_weight)");
    }
    int upper = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        upper += weights[i];
        if (ticket < upper) {
            return counts[i];
        }
    }
    return counts.back();
}

int sample_control_count(Rng& rng, const ControlCountLaw& law) {
    return law.count_for_ticket(static_cast<int>(rng.below(static_cast<std::uint64_t>(law.total_weight()))));
}

BezierSpec sample_control_points(int count, int glyph_size, Rng& rng, const ControlCountLaw& law) {
    if (std::find(law.counts.begin(), law.counts.end(), count) == law.counts.end()) {
        throw std::invalid_argument("sample_control_points: unsupported control-point count " +
                                    std::to_string(count));
    }
    if (glyph_size < 2) {
        throw std::invalid_argument("sample_control_points: glyph size must be >= 2");
    }
    BezierSpec spec;
    spec.control_points.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double x = rng.uniform(0.0, glyph_size);
        const double y = rng.uniform(0.0, glyph_size);
        spec.control_points.push_back({x, y});
    }
    return spec;
}

Point2 bezier_point(const BezierSpec& spec, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("bezier_point: t must lie in [0, 1]");
    }
    if (spec.control_points.empty()) {
        throw std::invalid_argument("bezier_point: no control points");
    }
    const int n = spec.degree();
    Point2 out;
    double binom = 1.0;  // C(n, i), updated incrementally
    for (int i = 0; i <= n; ++i) {
        const double w = binom * std::pow(1.0 - t, n - i) * std::pow(t, i);
        out.x += w * spec.control_points[static_cast<std::size_t>(i)].x;
        out.y += w * spec.control_points[static_cast<std::size_t>(i)].y;
        binom = binom * (n - i) / (i + 1);
    }
    return out;
}

std::vector<Point2> discretize_curve(const BezierSpec& spec, int points) {
    if (points < 2) {
        throw std::invalid_argument("discretize_curve: need at least 2 points");
    }
    std::vector<Point2> curve;
    curve.reserve(static_cast<std::size_t>(points));
    for (int j = 0; j < points; ++j) {
        curve.push_back(bezier_point(spec, static_cast<double>(j) / (points - 1)));
    }
    return curve;
}

namespace {

double segment_distance_sq(double px, double py, Point2 a, Point2 b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len_sq = dx * dx + dy * dy;
    double t = 0.0;
    if (len_sq > 0.0) {
        t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len_sq, 0.0, 1.0);
    }
    const double ex = a.x + t * dx - px;
    const double ey = a.y + t * dy - py;
    return ex * ex + ey * ey;
}

} // namespace

Image rasterize_curve(std::span<const Point2> curve, double thickness, int glyph_size) {
    if (!(thickness > 0.0)) {
        throw std::invalid_argument("rasterize_curve: thickness must be positive");
    }
    if (glyph_size < 1) {
        throw std::invalid_argument("rasterize_curve: glyph size must be positive");
    }
    constexpr int s = kSupersample;
    const int hi = glyph_size * s;
    const double radius = 0.5 * thickness * s;
    const double radius_sq = radius * radius;
    std::vector<unsigned char> ink(static_cast<std::size_t>(hi) * hi, 0);

    auto stamp_segment = [&](Point2 a, Point2 b) {
        a = {a.x * s, a.y * s};
        b = {b.x * s, b.y * s};
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius)));
        const int x1 = std::min(hi - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius)));
        const int y1 = std::min(hi - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (segment_distance_sq(x + 0.5, y + 0.5, a, b) <= radius_sq) {
                    ink[static_cast<std::size_t>(y) * hi + x] = 1;
                }
            }
        }
    };

    if (curve.size() == 1) {
        stamp_segment(curve[0], curve[0]);
    }
    for (std::size_t i = 1; i < curve.size(); ++i) {
        stamp_segment(curve[i - 1], curve[i]);
    }

    Image glyph(glyph_size, glyph_size);
    for (int y = 0; y < glyph_size; ++y) {
        for (int x = 0; x < glyph_size; ++x) {
            int covered = 0;
            for (int dy = 0; dy < s; ++dy) {
                for (int dx = 0; dx < s; ++dx) {
                    covered += ink[static_cast<std::size_t>(y * s + dy) * hi + (x * s + dx)];
                }
            }
            glyph.at(y, x) = std::min(1.0f, static_cast<float>(covered) / (s * s));
        }
    }
    return glyph;
}

NoiseGlyph make_glyph(const BezierSpec& spec, double thickness, int glyph_size) {
    const auto curve = discretize_curve(spec);
    return NoiseGlyph{rasterize_curve(curve, thickness, glyph_size), thickness, spec};
}

NoiseGlyph sample_glyph(Rng& rng, double thickness, int glyph_size, const ControlCountLaw& law) {
    const int count = sample_control_count(rng, law);
    return make_glyph(sample_control_points(count, glyph_size, rng, law), thickness, glyph_size);
}

void export_glyph_bank(const std::filesystem::path& dir, int count, double thickness, int glyph_size,
                       std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["seed"] = seed;
    manifest["thickness"] = thickness;
    manifest["glyph_size"] = glyph_size;
    manifest["glyphs"] = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::substream(seed, 0, static_cast<std::uint64_t>(i));
        const NoiseGlyph glyph = sample_glyph(rng, thickness, glyph_size);
        char name[32];
        std::snprintf(name, sizeof(name), "glyph_%05d.png", i);
        write_png(dir / name, glyph.pixels);
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : glyph.spec.control_points) {
            points.push_back({p.x, p.y});
        }
        manifest["glyphs"].push_back({{"file", name}, {"control_points", points}, {"index", i}});
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

} // namespace ips::noise
