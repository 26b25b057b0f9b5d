#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "icnas/rng.hpp"
#include "icnas/tensor.hpp"

namespace icnas {

enum class DatasetKind { synthetic, tensor_file };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::synthetic;
    std::string path;  // tensor_file only
    int num_classes = 4;
    Shape image_shape{3, 8, 8};
    int train_count = 480;
    int val_count = 160;
    int test_count = 480;
    double difficulty = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    std::string id() const;
    bool operator==(const DatasetSpec&) const = default;
};

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

struct Split {
    Tensor images;  // N x C x H x W
    std::vector<int> labels;
    int size() const { return static_cast<int>(labels.size()); }
};

struct Dataset {
    std::string id;
    int num_classes = 0;
    Shape image_shape;
    Split train;
    Split val;
    Split test;
};

// Oriented sinusoidal gratings: orientation and frequency depend on the
// class, phase and contrast are random, Gaussian noise of stddev
// `difficulty` is added. The validation split is withheld from the
// generated training pool by a seeded permutation.
Dataset gen_synthetic_dataset(const DatasetSpec& spec);

// Binary container: "ICNASDS1", u32 version, u32 classes, u32 C, H, W,
// u32 train/val/test counts, float32 images (train, val, test), int32 labels.
void save_tensor_file(const Dataset& d, const std::string& path);
Dataset load_tensor_file(const std::string& path);

// Synthetic generation or tensor-file load depending on spec.kind.
Dataset load_dataset(const DatasetSpec& spec);

// Rows `indices` of a split as a batch.
Split gather(const Split& s, std::span<const int> indices);

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;
};
ChannelStats channel_stats(const Split& s);
void normalize(Split& s, const ChannelStats& stats);
// Normalizes every split with the training statistics.
void normalize_dataset(Dataset& d);

struct AugmentSpec {
    int pixel_shift = 0;
    bool horizontal_flip = false;
    bool normalize = true;
    bool operator==(const AugmentSpec&) const = default;
};

// Zero-pads by pixel_shift and crops back at an offset uniform in
// [0, 2*pixel_shift]^2, then mirrors with probability 0.5 per image.
// Normalization is applied to the dataset once, not here.
// If `offsets` is given it receives the (dy, dx) crop offset per image.
Tensor augment(const Tensor& batch, const AugmentSpec& spec, Rng& rng,
               std::vector<std::pair<int, int>>* offsets = nullptr);
// Pads by `shift` and crops image n at offsets[n].
Tensor shift_crop(const Tensor& batch, int shift, const std::vector<std::pair<int, int>>& offsets);
Tensor flip_horizontal(const Tensor& batch);

}  // namespace icnas
