#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "feedbacknet/rng.hpp"
#include "feedbacknet/taxonomy.hpp"
#include "feedbacknet/tensor.hpp"

namespace fbnet {

/// One labeled image; pixels are channel-planar bytes ([C][H][W], like the
/// CIFAR binary layout).
struct Sample {
    std::vector<std::uint8_t> pixels;
    std::uint16_t fine = 0;
    std::uint16_t coarse = 0;
};

struct Dataset {
    int height = 16, width = 16, channels = 3;
    Taxonomy tax;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
};

/// Synthetic hierarchically-labeled imagery: four shape families (coarse
/// classes) with three geometric variants each (fine classes), rendered
/// with per-sample position/scale/brightness jitter and optional pixel
/// noise.
struct SyntheticSpec {
    int image = 16;
    int coarse = 4;          // <= 4 shape families available
    int fine_per_coarse = 3; // <= 3 variants available
    int train_per_class = 40;
    int test_per_class = 20;
    double noise = 0.05;

    int fine_count() const { return coarse * fine_per_coarse; }

    void validate() const {
        if (image < 8)
            throw ConfigError(detail::concat("image size ", image, " too small to render shapes (need >= 8)"));
        if (coarse < 1 || coarse > 4)
            throw ConfigError(detail::concat("coarse class count must be in [1,4], got ", coarse));
        if (fine_per_coarse < 1 || fine_per_coarse > 3)
            throw ConfigError(detail::concat("fine variants per coarse must be in [1,3], got ", fine_per_coarse));
        if (train_per_class < 1 || test_per_class < 0)
            throw ConfigError("per-class sample counts must be positive");
        if (noise < 0.0 || noise > 0.5)
            throw ConfigError(detail::concat("noise level must be in [0,0.5], got ", noise));
    }
};

namespace detail {

inline double shape_mask(int family, int variant, double px, double py) {
    const double ax = std::abs(px), ay = std::abs(py);
    switch (family) {
    case 0: // rectangles: wide fill / tall fill / hollow square
        if (variant == 0) return (ax <= 0.62 && ay <= 0.30) ? 1.0 : 0.0;
        if (variant == 1) return (ax <= 0.30 && ay <= 0.62) ? 1.0 : 0.0;
        return (std::max(ax, ay) <= 0.62 && std::max(ax, ay) >= 0.36) ? 1.0 : 0.0;
    case 1: { // ellipses: circle / wide ellipse / ring
        if (variant == 0) return (px * px + py * py <= 0.55 * 0.55) ? 1.0 : 0.0;
        if (variant == 1) {
            const double u = px / 0.68, v = py / 0.34;
            return (u * u + v * v <= 1.0) ? 1.0 : 0.0;
        }
        const double r = std::sqrt(px * px + py * py);
        return (r <= 0.62 && r >= 0.36) ? 1.0 : 0.0;
    }
    case 2: // crosses: plus / diagonal X / thick short plus
        if (variant == 0) return ((ax <= 0.16 && ay <= 0.62) || (ay <= 0.16 && ax <= 0.62)) ? 1.0 : 0.0;
        if (variant == 1) {
            const double d1 = std::abs(px - py), d2 = std::abs(px + py);
            return ((d1 <= 0.22 || d2 <= 0.22) && ax <= 0.62 && ay <= 0.62) ? 1.0 : 0.0;
        }
        return ((ax <= 0.30 && ay <= 0.44) || (ay <= 0.30 && ax <= 0.44)) ? 1.0 : 0.0;
    default: { // stripes: horizontal / vertical / diagonal
        if (ax > 0.72 || ay > 0.72) return 0.0;
        double coord = (variant == 0) ? py : (variant == 1) ? px : (px + py) * 0.7071;
        const long band = static_cast<long>(std::floor((coord + 8.0) / 0.28));
        return (band % 2 == 0) ? 1.0 : 0.0;
    }
    }
}

inline void family_color(int family, double* rgb) {
    static const double colors[4][3] = {{0.85, 0.25, 0.25},
                                        {0.25, 0.80, 0.30},
                                        {0.30, 0.40, 0.90},
                                        {0.80, 0.78, 0.25}};
    rgb[0] = colors[family][0];
    rgb[1] = colors[family][1];
    rgb[2] = colors[family][2];
}

inline Sample render_sample(const SyntheticSpec& spec, int fine, std::uint64_t stream) {
    Rng rng(stream);
    const int family = fine / spec.fine_per_coarse;
    const int variant = fine % spec.fine_per_coarse;
    const double ox = rng.uniform(-0.14, 0.14);
    const double oy = rng.uniform(-0.14, 0.14);
    const double scale = rng.uniform(0.85, 1.15);
    const double brightness = rng.uniform(0.72, 1.0);

    double rgb[3];
    family_color(family, rgb);
    const double bg[3] = {0.08, 0.08, 0.10};

    const int S = spec.image;
    Sample s;
    s.fine = static_cast<std::uint16_t>(fine);
    s.coarse = static_cast<std::uint16_t>(family);
    s.pixels.resize(static_cast<std::size_t>(3) * S * S);
    std::vector<double> mask(static_cast<std::size_t>(S) * S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double px = ((2.0 * (x + 0.5) / S - 1.0) - ox) / scale;
            const double py = ((2.0 * (y + 0.5) / S - 1.0) - oy) / scale;
            mask[static_cast<std::size_t>(y) * S + x] = shape_mask(family, variant, px, py);
        }
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const double m = mask[static_cast<std::size_t>(y) * S + x];
                double v = bg[c] + m * (rgb[c] * brightness - bg[c]);
                if (spec.noise > 0.0) v += rng.uniform(-spec.noise, spec.noise);
                v = std::min(1.0, std::max(0.0, v));
                s.pixels[(static_cast<std::size_t>(c) * S + y) * S + x] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return s;
}

} // namespace detail

/// Deterministic synthetic dataset: sample i of a split is a pure function
/// of (seed, split, class, i), so train and test are disjoint streams and
/// regeneration is bit-identical.
inline std::pair<Dataset, Dataset> generate_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int K = spec.fine_count();
    std::vector<int> parent(K);
    for (int f = 0; f < K; ++f) parent[f] = f / spec.fine_per_coarse;
    Taxonomy tax(K, spec.coarse, parent);

    Dataset train, test;
    train.height = train.width = spec.image;
    test.height = test.width = spec.image;
    train.tax = tax;
    test.tax = tax;
    for (int split = 0; split < 2; ++split) {
        Dataset& ds = split == 0 ? train : test;
        const int count = split == 0 ? spec.train_per_class : spec.test_per_class;
        for (int f = 0; f < K; ++f)
            for (int i = 0; i < count; ++i) {
                const std::uint64_t stream =
                    Rng::mix(Rng::mix(seed, static_cast<std::uint64_t>(split) + 1),
                             static_cast<std::uint64_t>(f) * 1000003ull + static_cast<std::uint64_t>(i));
                ds.samples.push_back(detail::render_sample(spec, f, stream));
            }
    }
    return {std::move(train), std::move(test)};
}

/// A minibatch ready for the network: images normalized to [-0.5, 0.5].
struct Batch {
    Tensor images;
    std::vector<int> fine;
    std::vector<int> coarse;
};

inline Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const int C = ds.channels, H = ds.height, W = ds.width;
    Batch b;
    b.images = Tensor::zeros({static_cast<int>(indices.size()), C, H, W});
    float* out = b.images.data();
    const std::size_t per = ds.pixel_count();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Sample& s = ds.samples[indices[i]];
        for (std::size_t j = 0; j < per; ++j)
            out[i * per + j] = static_cast<float>(s.pixels[j]) / 255.0f - 0.5f;
        b.fine.push_back(s.fine);
        b.coarse.push_back(s.coarse);
    }
    return b;
}

// ---------------------------------------------------------------------------
// FBDS binary dataset format (little-endian):
//   magic "FBDS" | u32 version=1 | u32 sample_count
//   | u16 fine_count | u16 coarse_count | u16 height | u16 width | u16 channels
//   | parent table: fine_count x u16
//   | per sample: fine u16 | coarse u16 | pixels (height*width*channels bytes)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw FormatError(detail::concat("truncated file: need ", n, " bytes for ", what, " at byte ", pos));
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    const std::uint8_t* bytes(std::size_t n, const char* what) {
        need(n, what);
        const std::uint8_t* p = buf.data() + pos;
        pos += n;
        return p;
    }
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(detail::concat("cannot open ", path));
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(detail::concat("cannot write ", path));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError(detail::concat("write failed for ", path));
}

} // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'F', 'B', 'D', 'S'});
    detail::put_u32(buf, 1);
    detail::put_u32(buf, static_cast<std::uint32_t>(ds.samples.size()));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.tax.fine_count()));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.tax.coarse_count()));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.height));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.width));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.channels));
    for (int f = 0; f < ds.tax.fine_count(); ++f)
        detail::put_u16(buf, static_cast<std::uint16_t>(ds.tax.parent(f)));
    for (const Sample& s : ds.samples) {
        detail::put_u16(buf, s.fine);
        detail::put_u16(buf, s.coarse);
        buf.insert(buf.end(), s.pixels.begin(), s.pixels.end());
    }
    detail::write_file(path, buf);
}

inline Dataset load_dataset(const std::string& path) {
    const std::vector<std::uint8_t> buf = detail::read_file(path);
    detail::ByteReader r{buf};
    const std::uint8_t* magic = r.bytes(4, "magic");
    if (std::memcmp(magic, "FBDS", 4) != 0) throw FormatError("bad magic at byte 0 (expected FBDS)");
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw FormatError(detail::concat("unsupported FBDS version ", version, " at byte 4"));
    const std::uint32_t count = r.u32("sample count");
    const int fine = r.u16("fine count");
    const int coarse = r.u16("coarse count");
    Dataset ds;
    ds.height = r.u16("height");
    ds.width = r.u16("width");
    ds.channels = r.u16("channels");
    if (ds.height < 1 || ds.width < 1 || ds.channels < 1)
        throw FormatError("non-positive image dimensions in header");
    std::vector<int> parent(fine);
    for (int f = 0; f < fine; ++f) parent[f] = r.u16("parent table");
    ds.tax = Taxonomy(fine, coarse, std::move(parent));
    const std::size_t per = ds.pixel_count();
    for (std::uint32_t i = 0; i < count; ++i) {
        Sample s;
        s.fine = r.u16("sample fine label");
        s.coarse = r.u16("sample coarse label");
        if (s.fine >= fine)
            throw FormatError(detail::concat("sample ", i, " fine label ", s.fine, " out of range"));
        if (s.coarse != ds.tax.parent(s.fine))
            throw FormatError(detail::concat("sample ", i, " coarse label ", s.coarse,
                                             " disagrees with taxonomy parent ", ds.tax.parent(s.fine)));
        const std::uint8_t* px = r.bytes(per, "sample pixels");
        s.pixels.assign(px, px + per);
        ds.samples.push_back(std::move(s));
    }
    if (r.pos != buf.size())
        throw FormatError(detail::concat("trailing ", buf.size() - r.pos, " bytes at byte ", r.pos));
    return ds;
}

// ---------------------------------------------------------------------------
// CIFAR-100 binary format: records of exactly 3074 bytes
// (coarse byte, fine byte, 3072 channel-planar pixel bytes, 32x32 RGB).
// ---------------------------------------------------------------------------

struct CifarLoaded {
    Dataset data;                     // tax populated only when observation is complete
    std::map<int, int> observed_pairs; // fine -> coarse as seen in the file
};

inline CifarLoaded load_cifar_binary(const std::string& path) {
    const std::vector<std::uint8_t> buf = detail::read_file(path);
    constexpr std::size_t kRecord = 3074;
    if (buf.empty()) throw FormatError(detail::concat("empty CIFAR file ", path));
    if (buf.size() % kRecord != 0)
        throw FormatError(detail::concat("CIFAR file length ", buf.size(), " is not a multiple of ", kRecord));
    CifarLoaded out;
    out.data.height = out.data.width = 32;
    out.data.channels = 3;
    const std::size_t n = buf.size() / kRecord;
    int max_fine = -1, max_coarse = -1;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = buf.data() + i * kRecord;
        Sample s;
        s.coarse = rec[0];
        s.fine = rec[1];
        auto it = out.observed_pairs.find(s.fine);
        if (it == out.observed_pairs.end())
            out.observed_pairs[s.fine] = s.coarse;
        else if (it->second != s.coarse)
            throw FormatError(detail::concat("inconsistent taxonomy: fine ", s.fine, " maps to coarse ",
                                             it->second, " and ", s.coarse, " (record ", i, ")"));
        s.pixels.assign(rec + 2, rec + kRecord);
        max_fine = std::max(max_fine, static_cast<int>(s.fine));
        max_coarse = std::max(max_coarse, static_cast<int>(s.coarse));
        out.data.samples.push_back(std::move(s));
    }
    // Build a full taxonomy only when every fine id 0..max is observed.
    if (static_cast<int>(out.observed_pairs.size()) == max_fine + 1) {
        std::vector<int> parent(max_fine + 1);
        for (auto [f, c] : out.observed_pairs) parent[f] = c;
        out.data.tax = Taxonomy(max_fine + 1, max_coarse + 1, std::move(parent));
    }
    return out;
}

} // namespace fbnet
