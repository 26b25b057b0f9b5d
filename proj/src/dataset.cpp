#include "icnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace icnas {

void DatasetSpec::validate() const {
    if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (image_shape.size() != 3) throw std::invalid_argument("image_shape must be [channels, height, width]");
    for (int d : image_shape) {
        if (d <= 0) throw std::invalid_argument("image_shape entries must be positive");
    }
    if (train_count <= 0 || val_count <= 0 || test_count <= 0) {
        throw std::invalid_argument("train, val and test counts must be positive");
    }
    if (!(difficulty >= 0.0) || !std::isfinite(difficulty)) throw std::invalid_argument("difficulty must be >= 0");
    if (kind == DatasetKind::tensor_file && path.empty()) throw std::invalid_argument("tensor_file dataset needs a path");
}

std::string DatasetSpec::id() const {
    if (kind == DatasetKind::tensor_file) return "file:" + path;
    char buf[160];
    std::snprintf(buf, sizeof buf, "synthetic_k%d_%dx%dx%d_n%d-%d-%d_d%g_s%llu", num_classes, image_shape[0],
                  image_shape[1], image_shape[2], train_count, val_count, test_count, difficulty,
                  static_cast<unsigned long long>(seed));
    return buf;
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
    j = {{"kind", s.kind == DatasetKind::synthetic ? "synthetic" : "tensor_file"},
         {"num_classes", s.num_classes},
         {"image_shape", s.image_shape},
         {"train_count", s.train_count},
         {"val_count", s.val_count},
         {"test_count", s.test_count},
         {"difficulty", s.difficulty},
         {"seed", s.seed}};
    if (!s.path.empty()) j["path"] = s.path;
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
    DatasetSpec d;
    const auto kind = j.value("kind", std::string("synthetic"));
    if (kind == "synthetic") {
        d.kind = DatasetKind::synthetic;
    } else if (kind == "tensor_file") {
        d.kind = DatasetKind::tensor_file;
    } else {
        throw std::invalid_argument("unknown dataset kind '" + kind + "'");
    }
    d.path = j.value("path", d.path);
    d.num_classes = j.value("num_classes", d.num_classes);
    if (j.contains("image_shape")) d.image_shape = j.at("image_shape").get<Shape>();
    d.train_count = j.value("train_count", d.train_count);
    d.val_count = j.value("val_count", d.val_count);
    d.test_count = j.value("test_count", d.test_count);
    d.difficulty = j.value("difficulty", d.difficulty);
    d.seed = j.value("seed", d.seed);
    d.validate();
    s = std::move(d);
}

namespace {

// Balanced labels 0,1,..,K-1,0,1,.. then shuffled.
std::vector<int> balanced_labels(int n, int k, Rng& rng) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[i] = i % k;
    const auto perm = rng.permutation(n);
    std::vector<int> out(labels.size());
    for (int i = 0; i < n; ++i) out[i] = labels[perm[i]];
    return out;
}

void draw_image(Tensor& images, int n, int label, int num_classes, double difficulty, Rng& rng) {
    const int c = images.dim(1), h = images.dim(2), w = images.dim(3);
    // Orientations spread over half a turn, frequency alternates between two bands.
    const double theta = std::numbers::pi * label / num_classes;
    const double freq = (label % 2 == 0 ? 1.0 : 2.0) / std::max(h, w);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double contrast = rng.uniform(0.7, 1.3);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int ch = 0; ch < c; ++ch) {
        const double gain = 1.0 - 0.25 * ch / std::max(1, c - 1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double u = x * ct + y * st;
                const double v = contrast * gain * std::cos(2.0 * std::numbers::pi * freq * u + phase);
                images.at(n, ch, y, x) = static_cast<float>(v + difficulty * rng.normal());
            }
        }
    }
}

Split make_split(int n, const DatasetSpec& spec, Rng& rng) {
    Split s;
    s.labels = balanced_labels(n, spec.num_classes, rng);
    s.images = Tensor({n, spec.image_shape[0], spec.image_shape[1], spec.image_shape[2]});
    for (int i = 0; i < n; ++i) draw_image(s.images, i, s.labels[i], spec.num_classes, spec.difficulty, rng);
    return s;
}

}  // namespace

Dataset gen_synthetic_dataset(const DatasetSpec& spec) {
    spec.validate();
    const Rng root(spec.seed);
    Rng pool_rng = root.substream("train_pool");
    Rng test_rng = root.substream("test");
    Rng split_rng = root.substream("val_split");

    Dataset d;
    d.id = spec.id();
    d.num_classes = spec.num_classes;
    d.image_shape = spec.image_shape;
    const Split pool = make_split(spec.train_count + spec.val_count, spec, pool_rng);
    // Stratified withholding keeps both splits balanced within one per class.
    const int k = spec.num_classes;
    std::vector<int> quota(static_cast<std::size_t>(k), spec.val_count / k);
    for (int c = 0; c < spec.val_count % k; ++c) ++quota[c];
    std::vector<int> val_idx, train_idx;
    for (int i : split_rng.permutation(pool.size())) {
        int& q = quota[pool.labels[i]];
        if (q > 0) {
            --q;
            val_idx.push_back(i);
        } else {
            train_idx.push_back(i);
        }
    }
    d.train = gather(pool, train_idx);
    d.val = gather(pool, val_idx);
    d.test = make_split(spec.test_count, spec, test_rng);
    return d;
}

Split gather(const Split& s, std::span<const int> indices) {
    if (indices.empty()) throw std::invalid_argument("gather: empty index set");
    Shape shape = s.images.shape();
    const std::size_t per = s.images.size() / static_cast<std::size_t>(shape[0]);
    shape[0] = static_cast<int>(indices.size());
    Split out;
    out.images = Tensor(shape);
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || src >= s.size()) throw std::out_of_range("gather: index out of range");
        std::copy_n(s.images.data() + per * src, per, out.images.data() + per * i);
        out.labels.push_back(s.labels[src]);
    }
    return out;
}

ChannelStats channel_stats(const Split& s) {
    const int n = s.images.dim(0), c = s.images.dim(1), hw = s.images.dim(2) * s.images.dim(3);
    ChannelStats st;
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0, sq = 0;
        for (int b = 0; b < n; ++b) {
            const float* p = &s.images.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) sum += p[i];
        }
        const double mean = sum / (static_cast<double>(n) * hw);
        for (int b = 0; b < n; ++b) {
            const float* p = &s.images.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
        }
        const double sd = std::sqrt(sq / (static_cast<double>(n) * hw));
        st.mean.push_back(static_cast<float>(mean));
        st.stddev.push_back(static_cast<float>(sd > 1e-12 ? sd : 1.0));
    }
    return st;
}

void normalize(Split& s, const ChannelStats& stats) {
    const int n = s.images.dim(0), c = s.images.dim(1), hw = s.images.dim(2) * s.images.dim(3);
    if (static_cast<int>(stats.mean.size()) != c) throw std::invalid_argument("normalize: channel count mismatch");
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            float* p = &s.images.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) p[i] = (p[i] - stats.mean[ch]) / stats.stddev[ch];
        }
    }
}

void normalize_dataset(Dataset& d) {
    const auto stats = channel_stats(d.train);
    normalize(d.train, stats);
    normalize(d.val, stats);
    normalize(d.test, stats);
}

Tensor shift_crop(const Tensor& batch, int shift, const std::vector<std::pair<int, int>>& offsets) {
    const int n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    if (static_cast<int>(offsets.size()) != n) throw std::invalid_argument("shift_crop: one offset per image");
    Tensor out(batch.shape());
    for (int b = 0; b < n; ++b) {
        const auto [dy, dx] = offsets[b];
        if (dy < 0 || dx < 0 || dy > 2 * shift || dx > 2 * shift) throw std::invalid_argument("shift_crop: bad offset");
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                const int sy = y + dy - shift;
                if (sy < 0 || sy >= h) continue;
                for (int x = 0; x < w; ++x) {
                    const int sx = x + dx - shift;
                    if (sx >= 0 && sx < w) out.at(b, ch, y, x) = batch.at(b, ch, sy, sx);
                }
            }
        }
    }
    return out;
}

namespace {

void flip_one(Tensor& t, int b) {
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            float* row = &t.at(b, ch, y, 0);
            std::reverse(row, row + w);
        }
    }
}

}  // namespace

Tensor flip_horizontal(const Tensor& batch) {
    Tensor out = batch;
    for (int b = 0; b < batch.dim(0); ++b) flip_one(out, b);
    return out;
}

Tensor augment(const Tensor& batch, const AugmentSpec& spec, Rng& rng, std::vector<std::pair<int, int>>* offsets) {
    if (batch.rank() != 4) throw std::invalid_argument("augment expects an N x C x H x W batch");
    if (spec.pixel_shift < 0) throw std::invalid_argument("pixel_shift must be >= 0");
    const int n = batch.dim(0);
    Tensor out = batch;
    std::vector<std::pair<int, int>> off(static_cast<std::size_t>(n), {spec.pixel_shift, spec.pixel_shift});
    if (spec.pixel_shift > 0) {
        const auto span = static_cast<std::uint64_t>(2 * spec.pixel_shift + 1);
        for (auto& o : off) {
            o.first = static_cast<int>(rng.uniform_int(span));
            o.second = static_cast<int>(rng.uniform_int(span));
        }
        out = shift_crop(batch, spec.pixel_shift, off);
    }
    if (spec.horizontal_flip) {
        for (int b = 0; b < n; ++b) {
            if (rng.bernoulli(0.5)) flip_one(out, b);
        }
    }
    if (offsets) *offsets = std::move(off);
    return out;
}

// ---------------------------------------------------------------------------
// tensor_file

namespace {

constexpr char kMagic[8] = {'I', 'C', 'N', 'A', 'S', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
    static_assert(sizeof(T) == 4);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("tensor_file: truncated file");
    const std::uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    T v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void save_tensor_file(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.num_classes));
    for (int v : d.image_shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    for (const Split* s : {&d.train, &d.val, &d.test}) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s->size()));
    for (const Split* s : {&d.train, &d.val, &d.test}) {
        for (float v : s->images.storage()) put_le<float>(out, v);
    }
    for (const Split* s : {&d.train, &d.val, &d.test}) {
        for (int v : s->labels) put_le<std::int32_t>(out, v);
    }
    if (!out) throw std::runtime_error("error writing dataset '" + path + "'");
}

Dataset load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dataset '" + path + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("'" + path + "' is not an icnas tensor file");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kVersion) throw std::runtime_error("tensor_file: unsupported version " + std::to_string(version));
    Dataset d;
    d.id = "file:" + path;
    d.num_classes = static_cast<int>(get_le<std::uint32_t>(in));
    for (int i = 0; i < 3; ++i) d.image_shape.push_back(static_cast<int>(get_le<std::uint32_t>(in)));
    int counts[3];
    for (int& c : counts) c = static_cast<int>(get_le<std::uint32_t>(in));
    Split* splits[3] = {&d.train, &d.val, &d.test};
    for (int i = 0; i < 3; ++i) {
        splits[i]->images = Tensor({counts[i], d.image_shape[0], d.image_shape[1], d.image_shape[2]});
        for (float& v : splits[i]->images.storage()) v = get_le<float>(in);
    }
    for (int i = 0; i < 3; ++i) {
        splits[i]->labels.resize(static_cast<std::size_t>(counts[i]));
        for (int& v : splits[i]->labels) {
            v = get_le<std::int32_t>(in);
            if (v < 0 || v >= d.num_classes) throw std::runtime_error("tensor_file: label out of range");
        }
    }
    return d;
}

Dataset load_dataset(const DatasetSpec& spec) {
    spec.validate();
    if (spec.kind == DatasetKind::synthetic) return gen_synthetic_dataset(spec);
    Dataset d = load_tensor_file(spec.path);
    if (d.num_classes != spec.num_classes || d.image_shape != spec.image_shape) {
        throw std::runtime_error("tensor_file '" + spec.path + "' does not match the configured classes/shape");
    }
    return d;
}

}  // namespace icnas
