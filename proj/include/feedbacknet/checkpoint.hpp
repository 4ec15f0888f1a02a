#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "feedbacknet/dataset.hpp" // byte reader/writer helpers
#include "feedbacknet/detail/hash.hpp"
#include "feedbacknet/tensor.hpp"

namespace fbnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Checkpoint binary format (little-endian):
//   magic "FBNC" (4 bytes)
//   format version   u32
//   fingerprint      32 bytes (SHA-256 of the architecture description)
//   tensor count     u32
//   per tensor: name length u16 | UTF-8 name | ndim u8 | dims u32 each
//               | payload as 32-bit-float words
//   trailing u32 CRC-32 of all preceding bytes
//
// Run metadata (embedded config text, class count, epoch counter, RNG
// state) travels inside reserved "__meta.*" tensors whose payload words are
// bit-cast, so the container stays exactly the layout above.
// ---------------------------------------------------------------------------

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::array<std::uint8_t, 32> fingerprint{};
    std::string config_text;
    int num_classes = 0;
    long long epoch = 0;
    std::uint64_t rng_state = 0;
    std::vector<std::pair<std::string, Tensor>> tensors; // model state, stable order

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace detail {

inline float f32_from_u32(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

inline std::uint32_t u32_from_f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

inline Tensor pack_string(const std::string& s) {
    const std::size_t words = 1 + (s.size() + 3) / 4;
    Tensor t = Tensor::zeros({static_cast<int>(words)});
    t.data()[0] = f32_from_u32(static_cast<std::uint32_t>(s.size()));
    for (std::size_t w = 0; 4 * w < s.size(); ++w) {
        std::uint32_t v = 0;
        for (std::size_t b = 0; b < 4 && 4 * w + b < s.size(); ++b)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[4 * w + b])) << (8 * b);
        t.data()[1 + w] = f32_from_u32(v);
    }
    return t;
}

inline std::string unpack_string(const Tensor& t) {
    if (t.size() < 1) throw FormatError("__meta.config tensor is empty");
    const std::uint32_t len = u32_from_f32(t.data()[0]);
    if (1 + (static_cast<std::size_t>(len) + 3) / 4 != t.size())
        throw FormatError("__meta.config length does not match tensor size");
    std::string s(len, '\0');
    for (std::uint32_t i = 0; i < len; ++i)
        s[i] = static_cast<char>((u32_from_f32(t.data()[1 + i / 4]) >> (8 * (i % 4))) & 0xff);
    return s;
}

inline void append_tensor(std::vector<std::uint8_t>& buf, const std::string& name, const Tensor& t) {
    if (name.size() > 0xffff) throw ContractError("tensor name too long");
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    buf.push_back(static_cast<std::uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put_u32(buf, static_cast<std::uint32_t>(t.dim(i)));
    for (std::size_t i = 0; i < t.size(); ++i) put_u32(buf, u32_from_f32(t.data()[i]));
}

} // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& cp) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'F', 'B', 'N', 'C'});
    detail::put_u32(buf, cp.version);
    buf.insert(buf.end(), cp.fingerprint.begin(), cp.fingerprint.end());

    std::vector<std::pair<std::string, Tensor>> all;
    all.emplace_back("__meta.config", detail::pack_string(cp.config_text));
    all.emplace_back("__meta.classes", Tensor::scalar(static_cast<float>(cp.num_classes)));
    all.emplace_back("__meta.epoch", Tensor::scalar(static_cast<float>(cp.epoch)));
    Tensor rng = Tensor::zeros({2});
    rng.data()[0] = detail::f32_from_u32(static_cast<std::uint32_t>(cp.rng_state & 0xffffffffull));
    rng.data()[1] = detail::f32_from_u32(static_cast<std::uint32_t>(cp.rng_state >> 32));
    all.emplace_back("__meta.rng", rng);
    for (const auto& nt : cp.tensors) all.push_back(nt);

    detail::put_u32(buf, static_cast<std::uint32_t>(all.size()));
    for (const auto& [name, t] : all) detail::append_tensor(buf, name, t);
    detail::put_u32(buf, detail::crc32(buf.data(), buf.size()));
    return buf;
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& buf) {
    if (buf.size() < 48)
        throw FormatError(detail::concat("checkpoint too short (", buf.size(), " bytes) at byte 0"));
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                                     (static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8) |
                                     (static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16) |
                                     (static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24);
    const std::uint32_t actual_crc = detail::crc32(buf.data(), buf.size() - 4);
    if (stored_crc != actual_crc)
        throw FormatError(detail::concat("checksum mismatch at byte ", buf.size() - 4, ": stored ",
                                         stored_crc, ", computed ", actual_crc));

    detail::ByteReader r{buf};
    const std::uint8_t* magic = r.bytes(4, "magic");
    if (std::memcmp(magic, "FBNC", 4) != 0) throw FormatError("bad magic at byte 0 (expected FBNC)");
    Checkpoint cp;
    cp.version = r.u32("version");
    if (cp.version != kCheckpointVersion)
        throw FormatError(detail::concat("unsupported checkpoint version ", cp.version, " at byte 4"));
    const std::uint8_t* fp = r.bytes(32, "fingerprint");
    std::memcpy(cp.fingerprint.data(), fp, 32);
    const std::uint32_t count = r.u32("tensor count");

    bool saw_config = false, saw_classes = false, saw_epoch = false, saw_rng = false;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.pos;
        const std::uint16_t name_len = r.u16("tensor name length");
        const std::uint8_t* nameb = r.bytes(name_len, "tensor name");
        std::string name(reinterpret_cast<const char*>(nameb), name_len);
        r.need(1, "tensor ndim");
        const int ndim = buf[r.pos++];
        std::vector<int> shape;
        std::size_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            const std::uint32_t dim = r.u32("tensor dim");
            if (dim == 0 || dim > (1u << 28))
                throw FormatError(detail::concat("tensor '", name, "' has invalid dim ", dim, " at byte ", at));
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        if (ndim == 0) throw FormatError(detail::concat("tensor '", name, "' has 0 dims at byte ", at));
        std::vector<float> values(numel);
        const std::uint8_t* payload = r.bytes(numel * 4, "tensor payload");
        for (std::size_t j = 0; j < numel; ++j) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(payload[4 * j + b]) << (8 * b);
            values[j] = detail::f32_from_u32(v);
        }
        Tensor t = Tensor::from_data(std::move(shape), std::move(values));
        if (name == "__meta.config") {
            cp.config_text = detail::unpack_string(t);
            saw_config = true;
        } else if (name == "__meta.classes") {
            cp.num_classes = static_cast<int>(t.data()[0]);
            saw_classes = true;
        } else if (name == "__meta.epoch") {
            cp.epoch = static_cast<long long>(t.data()[0]);
            saw_epoch = true;
        } else if (name == "__meta.rng") {
            if (t.size() != 2) throw FormatError("__meta.rng tensor must have 2 words");
            cp.rng_state = static_cast<std::uint64_t>(detail::u32_from_f32(t.data()[0])) |
                           (static_cast<std::uint64_t>(detail::u32_from_f32(t.data()[1])) << 32);
            saw_rng = true;
        } else {
            cp.tensors.emplace_back(std::move(name), std::move(t));
        }
    }
    if (r.pos != buf.size() - 4)
        throw FormatError(detail::concat("trailing bytes between tensors and checksum at byte ", r.pos));
    if (!saw_config || !saw_classes || !saw_epoch || !saw_rng)
        throw FormatError("checkpoint is missing required __meta tensors");
    return cp;
}

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    detail::write_file(path, serialize_checkpoint(cp));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(detail::read_file(path));
}

} // namespace fbnet
