#pragma once

// Extended Megapixel-MNIST: five scaled MNIST digits (three of one class, two
// distinct distractors) plus Bezier noise glyphs on a fixed square canvas.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ips/image.hpp"
#include "ips/noisegen.hpp"
#include "ips/rng.hpp"

namespace ips::bench {

inline constexpr int kDigitsPerCanvas = 5;
inline constexpr int kNumClasses = 10;
inline constexpr int kMnistSide = 28;
inline constexpr int kMaxPlacementRetries = 1000;
inline constexpr int kDefaultValidationSamples = 1000;

class IngestError : public std::runtime_error {
public:
    IngestError(const std::filesystem::path& path, const std::string& what)
        : std::runtime_error(path.string() + ": " + what), path_(path) {}
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Split { train, validation };
enum class Task { maj, max, top, multi };

std::string to_string(Split split);
std::string to_string(Task task);
Split split_from_string(const std::string& name);
Task task_from_string(const std::string& name);

/// MNIST digits grouped by class; each glyph is a 28x28 raster in [0, 1].
struct GlyphBank {
    std::array<std::vector<Image>, kNumClasses> by_class;

    std::size_t total() const;
};

/// Reads `<split>-images-idx3-ubyte` and `<split>-labels-idx1-ubyte` from dir,
/// where split is "train" or "t10k".
GlyphBank load_mnist(const std::filesystem::path& dir, const std::string& split = "train");

/// Bilinear resize (half-pixel centers), clamped to [0, 1]; identity at 28.
Image scale_digit(const Image& glyph, int target_size);

/// round(digit_size * -7.14 + 1000), half away from zero, floored at 0.
int noise_count_auto(int digit_size);

/// 100 * digit^2 / canvas^2.
double o2i_ratio(int digit_size, int canvas_size);

struct DatasetConfig {
    int canvas_size = 3000;
    int digit_size = 28;
    int n_samples = 1000;
    std::optional<int> noise_count;  // nullopt -> noise_count_auto(digit_size)
    double noise_thickness = noise::kDefaultThickness;
    std::optional<int> noise_size;   // nullopt -> digit_size
    std::uint64_t seed = 0;
    Split split = Split::train;
    std::vector<Task> tasks{Task::maj, Task::max, Task::top, Task::multi};

    int resolved_noise_count() const { return noise_count.value_or(noise_count_auto(digit_size)); }
    int resolved_noise_size() const { return noise_size.value_or(digit_size); }
    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
};

struct Pos {
    int y = 0;
    int x = 0;
    friend bool operator==(const Pos&, const Pos&) = default;
};

struct DigitPlacement {
    int class_id = 0;
    Pos top_left;
    int size = kMnistSide;
    std::uint32_t glyph_index = 0;
    friend bool operator==(const DigitPlacement&, const DigitPlacement&) = default;
};

struct NoisePlacement {
    noise::BezierSpec spec;
    Pos top_left;
    friend bool operator==(const NoisePlacement&, const NoisePlacement&) = default;
};

struct TaskLabels {
    int maj = 0;
    int max = 0;
    int top = 0;
    std::array<std::uint8_t, kNumClasses> multi{};
    friend bool operator==(const TaskLabels&, const TaskLabels&) = default;
};

struct CanvasSample {
    std::array<DigitPlacement, kDigitsPerCanvas> digits;
    std::vector<NoisePlacement> noise;
    TaskLabels labels;
    std::uint64_t index = 0;
    friend bool operator==(const CanvasSample&, const CanvasSample&) = default;
};

/// Majority class uniform, two distinct distractors, positions rejection-sampled
/// to keep digit boxes disjoint. Throws GenerationError when the canvas is too
/// crowded.
std::array<DigitPlacement, kDigitsPerCanvas> place_digits(Rng& rng, const DatasetConfig& config,
                                                          const GlyphBank& bank);

/// Topmost ties resolve to the smaller x.
TaskLabels compute_labels(const std::array<DigitPlacement, kDigitsPerCanvas>& digits);

/// True when the classes form the 3-1-1 pattern (majority + two distinct others).
bool has_majority_structure(const std::array<DigitPlacement, kDigitsPerCanvas>& digits);

bool boxes_overlap(const DigitPlacement& a, const DigitPlacement& b);

/// Sample `index` of the split; its randomness comes from a substream keyed by
/// (seed, split, index) so samples can be produced in any order.
CanvasSample generate_sample(const DatasetConfig& config, const GlyphBank& bank, std::uint64_t index);

/// Digits and noise composited by per-pixel maximum.
Image rasterize_canvas(const CanvasSample& sample, const DatasetConfig& config, const GlyphBank& bank);

} // namespace ips::bench
