#include "fgr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fgr/freq_filter.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

using json = nlohmann::json;

void CorruptionSpec::validate() const {
    if (severity < 1 || severity > 5)
        throw std::invalid_argument("CorruptionSpec: severity must be in 1..5");
}

CorruptionSpec CorruptionSpec::parse(const std::string& kind, int severity) {
    CorruptionSpec s;
    if (kind == "gaussian-noise") s.kind = CorruptionKind::GaussianNoise;
    else if (kind == "shot-noise") s.kind = CorruptionKind::ShotNoise;
    else if (kind == "gaussian-blur") s.kind = CorruptionKind::GaussianBlur;
    else if (kind == "contrast") s.kind = CorruptionKind::Contrast;
    else if (kind == "brightness") s.kind = CorruptionKind::Brightness;
    else throw std::invalid_argument("CorruptionSpec: unknown kind '" + kind + "'");
    s.severity = severity;
    s.validate();
    return s;
}

std::string CorruptionSpec::kind_name() const {
    switch (kind) {
        case CorruptionKind::GaussianNoise: return "gaussian-noise";
        case CorruptionKind::ShotNoise: return "shot-noise";
        case CorruptionKind::GaussianBlur: return "gaussian-blur";
        case CorruptionKind::Contrast: return "contrast";
        case CorruptionKind::Brightness: return "brightness";
    }
    return "?";
}

const std::vector<CorruptionKind>& all_corruptions() {
    static const std::vector<CorruptionKind> v = {
        CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::GaussianBlur,
        CorruptionKind::Contrast, CorruptionKind::Brightness};
    return v;
}

namespace {

constexpr double kNoiseSigma[5] = {8, 13, 18, 26, 38};
constexpr double kShotPhotons[5] = {60, 25, 12, 5, 3};
constexpr double kBlurSigma[5] = {0.4, 0.6, 0.8, 1.1, 1.5};
constexpr double kContrastFactor[5] = {0.75, 0.6, 0.45, 0.3, 0.2};
constexpr double kBrightnessShift[5] = {13, 26, 38, 51, 64};

ImageU8 gaussian_blur(const ImageU8& img, double sigma) {
    int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;
    const int H = int(img.height), W = int(img.width);
    std::vector<double> tmp(img.data.size());
    ImageU8 out(img.height, img.width);
    // horizontal, replicate edges
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    int xx = std::clamp(x + i, 0, W - 1);
                    s += kernel[i + radius] * img.px(y, xx, c);
                }
                tmp[(y * W + x) * 3 + c] = s;
            }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    int yy = std::clamp(y + i, 0, H - 1);
                    s += kernel[i + radius] * tmp[(yy * W + x) * 3 + c];
                }
                out.px(y, x, c) = clamp_u8(s);
            }
    return out;
}

}  // namespace

ImageU8 corrupt(const ImageU8& img, const CorruptionSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int s = spec.severity - 1;
    std::mt19937_64 rng(hash_seed(seed, 0xc0 + std::uint64_t(spec.kind), spec.severity));
    ImageU8 out(img.height, img.width);
    switch (spec.kind) {
        case CorruptionKind::GaussianNoise: {
            std::normal_distribution<double> nd(0.0, kNoiseSigma[s]);
            for (std::size_t i = 0; i < img.data.size(); ++i)
                out.data[i] = clamp_u8(double(img.data[i]) + nd(rng));
            break;
        }
        case CorruptionKind::ShotNoise: {
            const double c = kShotPhotons[s];
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                std::poisson_distribution<int> pd(double(img.data[i]) / 255.0 * c);
                out.data[i] = clamp_u8(double(pd(rng)) / c * 255.0);
            }
            break;
        }
        case CorruptionKind::GaussianBlur:
            out = gaussian_blur(img, kBlurSigma[s]);
            break;
        case CorruptionKind::Contrast:
            for (std::size_t i = 0; i < img.data.size(); ++i)
                out.data[i] = clamp_u8((double(img.data[i]) - 128.0) * kContrastFactor[s] + 128.0);
            break;
        case CorruptionKind::Brightness:
            for (std::size_t i = 0; i < img.data.size(); ++i)
                out.data[i] = clamp_u8(double(img.data[i]) + kBrightnessShift[s]);
            break;
    }
    return out;
}

namespace {

enum class Shape { Disk, Square, Triangle };

void draw_shape(ImageU8& img, Shape shape, double cx, double cy, double r, double fg) {
    const int n = int(img.height);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            bool inside = false;
            double dx = x - cx, dy = y - cy;
            switch (shape) {
                case Shape::Disk: inside = dx * dx + dy * dy <= r * r; break;
                case Shape::Square: inside = std::abs(dx) <= r && std::abs(dy) <= r; break;
                case Shape::Triangle:
                    // upward triangle: apex at cy-r, base at cy+r
                    inside = dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
                    break;
            }
            if (inside)
                for (int c = 0; c < 3; ++c) img.px(y, x, c) = clamp_u8(fg);
        }
}

// 2-pixel-period pattern per texture id: 0 = vertical stripes, 1 = horizontal
// stripes, 2 = checkerboard; ids >= 3 reuse phase-shifted variants.
double texture_delta(int tex_id, int x, int y, double strength) {
    int parity;
    switch (tex_id % 3) {
        case 0: parity = x % 2; break;
        case 1: parity = y % 2; break;
        default: parity = (x + y) % 2; break;
    }
    if (tex_id >= 3) parity ^= 1;
    return parity == 0 ? strength : -strength;
}

LabeledImage make_sample(const ShapeTextureConfig& cfg, int label, int tex_id, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double n = double(cfg.size);
    std::uniform_real_distribution<double> upos(n * 0.32, n * 0.68);
    std::uniform_real_distribution<double> urad(n * 0.16, n * 0.28);
    ImageU8 img(cfg.size, cfg.size);
    for (auto& v : img.data) v = 80;
    Shape shape = Shape(label % 3);
    draw_shape(img, shape, upos(rng), upos(rng), urad(rng), 190.0);
    std::normal_distribution<double> noise(0.0, 6.0);
    for (std::size_t y = 0; y < cfg.size; ++y)
        for (std::size_t x = 0; x < cfg.size; ++x) {
            double tex = cfg.texture_strength > 0.0
                             ? texture_delta(tex_id, int(x), int(y), cfg.texture_strength)
                             : 0.0;
            double nz = noise(rng);
            for (int c = 0; c < 3; ++c)
                img.px(y, x, c) = clamp_u8(double(img.px(y, x, c)) + tex + nz);
        }
    return {std::move(img), label};
}

std::vector<int> shuffled_texture_assignment(int k, std::uint64_t seed) {
    std::vector<int> perm(k);
    for (int i = 0; i < k; ++i) perm[i] = i;
    std::mt19937_64 rng(hash_seed(seed, 0x7065726d));
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::shuffle(perm.begin(), perm.end(), rng);
        bool derangement = true;
        for (int i = 0; i < k; ++i)
            if (perm[i] == i) derangement = false;
        if (derangement) return perm;
    }
    for (int i = 0; i < k; ++i) perm[i] = (i + 1) % k;  // k<=2 fallback
    return perm;
}

std::vector<LabeledImage> make_split(const ShapeTextureConfig& cfg, std::size_t count,
                                     std::uint64_t split_id, const std::vector<int>& tex_of_class) {
    std::vector<LabeledImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        int label = int(i % std::size_t(cfg.k_classes));
        out.push_back(make_sample(cfg, label, tex_of_class[label], hash_seed(cfg.seed, split_id, i)));
    }
    return out;
}

}  // namespace

DataSet gen_shape_texture(const ShapeTextureConfig& cfg) {
    if (cfg.k_classes < 2 || cfg.k_classes > 3)
        throw std::invalid_argument("gen_shape_texture: k_classes must be 2 or 3");
    if (cfg.size % 8 != 0) throw std::invalid_argument("gen_shape_texture: size must be multiple of 8");
    if (cfg.n_train < std::size_t(cfg.k_classes))
        throw std::invalid_argument("gen_shape_texture: n_train < k_classes");
    std::vector<int> identity(cfg.k_classes);
    for (int i = 0; i < cfg.k_classes; ++i) identity[i] = i;
    std::vector<int> shuffled = shuffled_texture_assignment(cfg.k_classes, cfg.seed);
    DataSet ds;
    ds.k = cfg.k_classes;
    ds.size = cfg.size;
    ds.train = make_split(cfg, cfg.n_train, 1, identity);
    ds.val = make_split(cfg, cfg.n_val, 2, identity);
    ds.test_id = make_split(cfg, cfg.n_test, 3, identity);
    ds.test_shift = make_split(cfg, cfg.n_test, 4, shuffled);
    return ds;
}

std::vector<LabeledImage> load_records(const std::string& path, std::size_t size, int k_max) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_records: cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::size_t fsize = std::size_t(in.tellg());
    in.seekg(0);
    const std::size_t plane = size * size;
    const std::size_t rec = 1 + 3 * plane;
    if (fsize % rec != 0)
        throw std::runtime_error("load_records: size of " + path + " (" + std::to_string(fsize) +
                                 ") not divisible by record size " + std::to_string(rec));
    std::vector<LabeledImage> out(fsize / rec);
    std::vector<std::uint8_t> buf(rec);
    for (auto& li : out) {
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(rec));
        li.label = buf[0];
        if (li.label >= k_max)
            throw std::runtime_error("load_records: label " + std::to_string(li.label) +
                                     " out of range in " + path);
        li.image = ImageU8(size, size);
        for (std::size_t p = 0; p < plane; ++p)
            for (int c = 0; c < 3; ++c) li.image.data[p * 3 + c] = buf[1 + c * plane + p];
    }
    return out;
}

std::vector<LabeledImage> load_cifar10(const std::string& path) { return load_records(path, 32, 10); }

void save_records(const std::string& path, const std::vector<LabeledImage>& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_records: cannot open " + path);
    for (const auto& li : images) {
        const std::size_t plane = li.image.height * li.image.width;
        std::vector<std::uint8_t> buf(1 + 3 * plane);
        buf[0] = std::uint8_t(li.label);
        for (std::size_t p = 0; p < plane; ++p)
            for (int c = 0; c < 3; ++c) buf[1 + c * plane + p] = li.image.data[p * 3 + c];
        out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    }
}

void save_dataset_dir(const std::string& dir, const DataSet& ds, std::uint64_t seed,
                      double texture_strength) {
    std::filesystem::create_directories(dir);
    save_records(dir + "/train.bin", ds.train);
    save_records(dir + "/val.bin", ds.val);
    save_records(dir + "/test_id.bin", ds.test_id);
    if (!ds.test_shift.empty()) save_records(dir + "/test_shift.bin", ds.test_shift);
    json m;
    m["k"] = ds.k;
    m["size"] = ds.size;
    m["seed"] = seed;
    m["texture_strength"] = texture_strength;
    m["n_train"] = ds.train.size();
    m["n_val"] = ds.val.size();
    m["n_test_id"] = ds.test_id.size();
    m["n_test_shift"] = ds.test_shift.size();
    std::ofstream out(dir + "/manifest.json");
    out << m.dump(2) << "\n";
}

DataSet load_dataset_dir(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("load_dataset_dir: missing manifest in " + dir);
    json m = json::parse(in);
    DataSet ds;
    ds.k = m.at("k").get<int>();
    ds.size = m.at("size").get<std::size_t>();
    ds.train = load_records(dir + "/train.bin", ds.size, ds.k);
    ds.val = load_records(dir + "/val.bin", ds.size, ds.k);
    ds.test_id = load_records(dir + "/test_id.bin", ds.size, ds.k);
    if (std::filesystem::exists(dir + "/test_shift.bin"))
        ds.test_shift = load_records(dir + "/test_shift.bin", ds.size, ds.k);
    return ds;
}

ImageU8 HybridDataset::materialize(std::size_t i) const {
    auto it = lambda_per_image.find(i);
    if (it == lambda_per_image.end()) return (*base)[i].image;
    return filter_image((*base)[i].image, it->second);
}

HybridDataset build_hybrid(const std::vector<LabeledImage>& base, double rho,
                           const std::vector<int>& lambda_set, std::uint64_t epoch,
                           std::uint64_t run_seed) {
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("build_hybrid: rho must be in [0,1]");
    if (lambda_set.empty()) throw std::invalid_argument("build_hybrid: empty lambda set");
    HybridDataset h;
    h.base = &base;
    h.epoch_seed = hash_seed(run_seed, epoch, 0x68796272);
    const std::size_t n = base.size();
    const auto n_filt = std::size_t(std::llround(rho * double(n)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(h.epoch_seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    h.filt_indices.assign(idx.begin(), idx.begin() + n_filt);
    std::sort(h.filt_indices.begin(), h.filt_indices.end());
    std::uniform_int_distribution<std::size_t> ul(0, lambda_set.size() - 1);
    for (std::size_t i : h.filt_indices) h.lambda_per_image[i] = lambda_set[ul(rng)];
    return h;
}

void split_train_val(const std::vector<LabeledImage>& data, double frac, std::uint64_t seed,
                     std::vector<LabeledImage>& train, std::vector<LabeledImage>& val) {
    if (frac <= 0.0 || frac >= 1.0) throw std::invalid_argument("split_train_val: frac must be in (0,1)");
    const std::size_t n = data.size();
    const auto n_val = std::size_t(std::llround(frac * double(n)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    val.clear();
    train.clear();
    for (std::size_t i = 0; i < n_val; ++i) val.push_back(data[idx[i]]);
    for (std::size_t i = n_val; i < n; ++i) train.push_back(data[idx[i]]);
}

}  // namespace fgr
