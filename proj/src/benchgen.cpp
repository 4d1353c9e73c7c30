#include "ips/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <opencv2/imgproc.hpp>

namespace ips::bench {

std::string to_string(Split split) {
    return split == Split::train ? "train" : "validation";
}

std::string to_string(Task task) {
    switch (task) {
    case Task::maj: return "maj";
    case Task::max: return "max";
    case Task::top: return "top";
    case Task::multi: return "multi";
    }
    return "?";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "validation" || name == "val") return Split::validation;
    throw std::invalid_argument("unknown split '" + name + "'");
}

Task task_from_string(const std::string& name) {
    if (name == "maj") return Task::maj;
    if (name == "max") return Task::max;
    if (name == "top") return Task::top;
    if (name == "multi") return Task::multi;
    throw std::invalid_argument("unknown task '" + name + "'");
}

std::size_t GlyphBank::total() const {
    std::size_t n = 0;
    for (const auto& bucket : by_class) {
        n += bucket.size();
    }
    return n;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw IngestError(path, "truncated header");
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

} // namespace

GlyphBank load_mnist(const std::filesystem::path& dir, const std::string& split) {
    const auto images_path = dir / (split + "-images-idx3-ubyte");
    const auto labels_path = dir / (split + "-labels-idx1-ubyte");

    std::ifstream images(images_path, std::ios::binary);
    if (!images) {
        throw IngestError(images_path, "cannot open MNIST image file");
    }
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) {
        throw IngestError(labels_path, "cannot open MNIST label file");
    }
    if (read_be32(images, images_path) != 0x00000803) {
        throw IngestError(images_path, "bad IDX magic for images");
    }
    const std::uint32_t n_images = read_be32(images, images_path);
    const std::uint32_t rows = read_be32(images, images_path);
    const std::uint32_t cols = read_be32(images, images_path);
    if (rows != kMnistSide || cols != kMnistSide) {
        throw IngestError(images_path, "expected 28x28 images");
    }
    if (read_be32(labels, labels_path) != 0x00000801) {
        throw IngestError(labels_path, "bad IDX magic for labels");
    }
    const std::uint32_t n_labels = read_be32(labels, labels_path);
    if (n_labels != n_images) {
        throw IngestError(labels_path, "label count does not match image count");
    }

    GlyphBank bank;
    std::vector<unsigned char> raw(kMnistSide * kMnistSide);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        char label = 0;
        if (!labels.get(label)) {
            throw IngestError(labels_path, "truncated label data");
        }
        if (!images.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
            throw IngestError(images_path, "truncated image data");
        }
        const auto cls = static_cast<unsigned char>(label);
        if (cls >= kNumClasses) {
            throw IngestError(labels_path, "label out of range");
        }
        Image glyph(kMnistSide, kMnistSide);
        std::transform(raw.begin(), raw.end(), glyph.data.begin(),
                       [](unsigned char v) { return v / 255.0f; });
        bank.by_class[cls].push_back(std::move(glyph));
    }
    return bank;
}

Image scale_digit(const Image& glyph, int target_size) {
    if (target_size < 1) {
        throw std::invalid_argument("scale_digit: target size must be positive");
    }
    if (target_size == glyph.height && target_size == glyph.width) {
        return glyph;
    }
    Image out(target_size, target_size, glyph.channels);
    const int type = CV_32FC(glyph.channels);
    const cv::Mat src(glyph.height, glyph.width, type, const_cast<float*>(glyph.data.data()));
    cv::Mat dst(target_size, target_size, type, out.data.data());
    cv::resize(src, dst, dst.size(), 0.0, 0.0, cv::INTER_LINEAR);
    for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

int noise_count_auto(int digit_size) {
    if (digit_size < 1) {
        throw std::invalid_argument("noise_count_auto: digit size must be positive");
    }
    return std::max(0L, std::lround(digit_size * -7.14 + 1000.0));
}

double o2i_ratio(int digit_size, int canvas_size) {
    if (digit_size <= 0 || canvas_size <= 0) {
        throw std::invalid_argument("o2i_ratio: sizes must be positive");
    }
    return 100.0 * digit_size * digit_size / (static_cast<double>(canvas_size) * canvas_size);
}

void DatasetConfig::validate() const {
    if (canvas_size <= 0 || digit_size <= 0) {
        throw std::invalid_argument("dataset: canvas and digit sizes must be positive");
    }
    if (digit_size > canvas_size) {
        throw std::invalid_argument("dataset: digit_size (" + std::to_string(digit_size) +
                                    ") exceeds canvas_size (" + std::to_string(canvas_size) + ")");
    }
    if (n_samples <= 0) {
        throw std::invalid_argument("dataset: n_samples must be positive");
    }
    if (!(noise_thickness > 0.0)) {
        throw std::invalid_argument("dataset: noise_thickness must be positive");
    }
    if (noise_count && *noise_count < 0) {
        throw std::invalid_argument("dataset: noise_count must be non-negative");
    }
    if (resolved_noise_size() < 2 || resolved_noise_size() > canvas_size) {
        throw std::invalid_argument("dataset: noise_size must lie in [2, canvas_size]");
    }
    if (tasks.empty()) {
        throw std::invalid_argument("dataset: at least one task required");
    }
}

bool boxes_overlap(const DigitPlacement& a, const DigitPlacement& b) {
    return a.top_left.x < b.top_left.x + b.size && b.top_left.x < a.top_left.x + a.size &&
           a.top_left.y < b.top_left.y + b.size && b.top_left.y < a.top_left.y + a.size;
}

std::array<DigitPlacement, kDigitsPerCanvas> place_digits(Rng& rng, const DatasetConfig& config,
                                                          const GlyphBank& bank) {
    const int majority = static_cast<int>(rng.below(kNumClasses));
    std::vector<int> others;
    for (int c = 0; c < kNumClasses; ++c) {
        if (c != majority) {
            others.push_back(c);
        }
    }
    const auto first = rng.below(others.size());
    const int distractor_a = others[first];
    others.erase(others.begin() + static_cast<std::ptrdiff_t>(first));
    const int distractor_b = others[rng.below(others.size())];

    const std::array<int, kDigitsPerCanvas> classes{majority, majority, majority, distractor_a, distractor_b};
    const int span = config.canvas_size - config.digit_size + 1;

    std::array<DigitPlacement, kDigitsPerCanvas> digits;
    for (int i = 0; i < kDigitsPerCanvas; ++i) {
        const auto& bucket = bank.by_class[static_cast<std::size_t>(classes[i])];
        if (bucket.empty()) {
            throw GenerationError("glyph bank has no digits of class " + std::to_string(classes[i]));
        }
        DigitPlacement& d = digits[static_cast<std::size_t>(i)];
        d.class_id = classes[i];
        d.size = config.digit_size;
        d.glyph_index = static_cast<std::uint32_t>(rng.below(bucket.size()));
        bool placed = false;
        for (int attempt = 0; attempt < kMaxPlacementRetries && !placed; ++attempt) {
            d.top_left = {static_cast<int>(rng.below(static_cast<std::uint64_t>(span))),
                          static_cast<int>(rng.below(static_cast<std::uint64_t>(span)))};
            placed = std::none_of(digits.begin(), digits.begin() + i,
                                  [&](const DigitPlacement& other) { return boxes_overlap(d, other); });
        }
        if (!placed) {
            throw GenerationError("could not place 5 disjoint " + std::to_string(config.digit_size) +
                                  "px digits on a " + std::to_string(config.canvas_size) + "px canvas");
        }
    }
    return digits;
}

TaskLabels compute_labels(const std::array<DigitPlacement, kDigitsPerCanvas>& digits) {
    TaskLabels labels;
    std::array<int, kNumClasses> counts{};
    for (const auto& d : digits) {
        ++counts[static_cast<std::size_t>(d.class_id)];
        labels.multi[static_cast<std::size_t>(d.class_id)] = 1;
        labels.max = std::max(labels.max, d.class_id);
    }
    labels.maj = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto topmost = std::min_element(digits.begin(), digits.end(), [](const auto& a, const auto& b) {
        return std::pair(a.top_left.y, a.top_left.x) < std::pair(b.top_left.y, b.top_left.x);
    });
    labels.top = topmost->class_id;
    return labels;
}

bool has_majority_structure(const std::array<DigitPlacement, kDigitsPerCanvas>& digits) {
    std::array<int, kNumClasses> counts{};
    for (const auto& d : digits) {
        if (d.class_id < 0 || d.class_id >= kNumClasses) {
            return false;
        }
        ++counts[static_cast<std::size_t>(d.class_id)];
    }
    std::vector<int> nonzero;
    for (int c : counts) {
        if (c > 0) nonzero.push_back(c);
    }
    std::sort(nonzero.begin(), nonzero.end());
    return nonzero == std::vector<int>{1, 1, 3};
}

namespace {
constexpr std::uint64_t kSplitStream[] = {0x7261696eULL, 0x76616c69ULL};
}

CanvasSample generate_sample(const DatasetConfig& config, const GlyphBank& bank, std::uint64_t index) {
    Rng rng = Rng::substream(config.seed, kSplitStream[config.split == Split::train ? 0 : 1], index);
    CanvasSample sample;
    sample.index = index;
    sample.digits = place_digits(rng, config, bank);
    sample.labels = compute_labels(sample.digits);

    const int noise_size = config.resolved_noise_size();
    const int noise_span = config.canvas_size - noise_size + 1;
    const int noise_count = config.resolved_noise_count();
    sample.noise.reserve(static_cast<std::size_t>(noise_count));
    for (int k = 0; k < noise_count; ++k) {
        NoisePlacement n;
        const int count = noise::sample_control_count(rng);
        n.spec = noise::sample_control_points(count, noise_size, rng);
        n.top_left = {static_cast<int>(rng.below(static_cast<std::uint64_t>(noise_span))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(noise_span)))};
        sample.noise.push_back(std::move(n));
    }
    return sample;
}

namespace {

void composite_max(Image& canvas, const Image& src, Pos at) {
    const int h = std::min(src.height, canvas.height - at.y);
    const int w = std::min(src.width, canvas.width - at.x);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float& dst = canvas.at(at.y + y, at.x + x);
            dst = std::max(dst, src.at(y, x));
        }
    }
}

} // namespace

Image rasterize_canvas(const CanvasSample& sample, const DatasetConfig& config, const GlyphBank& bank) {
    Image canvas(config.canvas_size, config.canvas_size);
    for (const auto& d : sample.digits) {
        const Image& glyph = bank.by_class.at(static_cast<std::size_t>(d.class_id)).at(d.glyph_index);
        composite_max(canvas, scale_digit(glyph, d.size), d.top_left);
    }
    const int noise_size = config.resolved_noise_size();
    // Thickness is specified at MNIST scale; noise scaled with the digits keeps
    // its stroke proportional.
    const double thickness = config.noise_thickness * noise_size / kMnistSide;
    for (const auto& n : sample.noise) {
        const auto curve = noise::discretize_curve(n.spec);
        composite_max(canvas, noise::rasterize_curve(curve, thickness, noise_size), n.top_left);
    }
    return canvas;
}

} // namespace ips::bench
