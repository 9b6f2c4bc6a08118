#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fgr/image.hpp"

namespace fgr {

struct LabeledImage {
    ImageU8 image;
    int label = 0;
};

enum class CorruptionKind { GaussianNoise, ShotNoise, GaussianBlur, Contrast, Brightness };

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    int severity = 1;  // 1..5
    void validate() const;
    static CorruptionSpec parse(const std::string& kind, int severity);
    std::string kind_name() const;
};

const std::vector<CorruptionKind>& all_corruptions();

/// Severity-indexed corruption; deterministic under seed, output clamped.
ImageU8 corrupt(const ImageU8& img, const CorruptionSpec& spec, std::uint64_t seed);

/// Synthetic shape-vs-texture dataset: class = low-frequency shape
/// (disk/square/triangle); ID splits carry a class-correlated 2-pixel-period
/// texture, the shift split gets a shuffled class-to-texture assignment.
struct ShapeTextureConfig {
    std::size_t n_train = 6000;
    std::size_t n_val = 600;
    std::size_t n_test = 2000;  // per test split
    int k_classes = 3;
    std::size_t size = 32;
    double texture_strength = 24.0;
    std::uint64_t seed = 1;
};

struct DataSet {
    std::vector<LabeledImage> train, val, test_id, test_shift;
    int k = 3;
    std::size_t size = 32;
};

DataSet gen_shape_texture(const ShapeTextureConfig& cfg);

/// CIFAR-style binary records: 1 label byte + 3 planar channels of size*size.
std::vector<LabeledImage> load_records(const std::string& path, std::size_t size, int k_max);
std::vector<LabeledImage> load_cifar10(const std::string& path);
void save_records(const std::string& path, const std::vector<LabeledImage>& images);

DataSet load_dataset_dir(const std::string& dir);
void save_dataset_dir(const std::string& dir, const DataSet& ds, std::uint64_t seed,
                      double texture_strength);

/// Per-epoch partition into filtered and untouched subsets.
struct HybridDataset {
    const std::vector<LabeledImage>* base = nullptr;
    std::vector<std::size_t> filt_indices;        // sorted
    std::map<std::size_t, int> lambda_per_image;  // index -> lambda
    std::uint64_t epoch_seed = 0;

    bool is_filtered(std::size_t i) const { return lambda_per_image.count(i) != 0; }
    /// The image as seen by D_mix: filtered when selected, original otherwise.
    ImageU8 materialize(std::size_t i) const;
};

/// Resamples the filtered subset from hash(run_seed, epoch); per-image lambda
/// uniform over lambda_set. |filt| = round(rho * N).
HybridDataset build_hybrid(const std::vector<LabeledImage>& base, double rho,
                           const std::vector<int>& lambda_set, std::uint64_t epoch,
                           std::uint64_t run_seed);

/// Deterministic shuffled split; val gets round(frac*N) samples.
void split_train_val(const std::vector<LabeledImage>& data, double frac, std::uint64_t seed,
                     std::vector<LabeledImage>& train, std::vector<LabeledImage>& val);

}  // namespace fgr
