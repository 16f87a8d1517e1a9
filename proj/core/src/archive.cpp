#include "patchstyle/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "patchstyle/error.hpp"

namespace patchstyle {

static_assert(std::endian::native == std::endian::little, "archive blobs are stored little-endian");

namespace {

constexpr char kMagic[8] = {'P', 'S', 'T', 'Y', 'L', 'E', 'A', 'R'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::vector<uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const uint8_t> bytes, size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) throw Error(ErrorCode::io, "truncated archive");
    T value;
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

int64_t element_count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

}  // namespace

const TensorBlob* Archive::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::vector<uint8_t> serialize_archive(const Archive& archive) {
    nlohmann::json header;
    header["meta"] = archive.meta;
    header["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& t : archive.tensors) {
        if (element_count(t.shape) != static_cast<int64_t>(t.values.size()))
            throw Error(ErrorCode::invalid_argument, "tensor '" + t.name + "' shape does not match its data");
        header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.values.size();
    }
    const std::string text = header.dump();

    std::vector<uint8_t> out;
    out.reserve(sizeof(kMagic) + 12 + text.size() + offset * sizeof(float));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put<uint32_t>(out, kVersion);
    put<uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& t : archive.tensors) {
        const auto* p = reinterpret_cast<const uint8_t*>(t.values.data());
        out.insert(out.end(), p, p + t.values.size() * sizeof(float));
    }
    return out;
}

Archive deserialize_archive(std::span<const uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw Error(ErrorCode::io, "not a patchstyle archive");
    size_t pos = sizeof(kMagic);
    const auto version = get<uint32_t>(bytes, pos);
    if (version != kVersion) throw Error(ErrorCode::io, "unsupported archive version " + std::to_string(version));
    const auto header_len = get<uint64_t>(bytes, pos);
    if (pos + header_len > bytes.size()) throw Error(ErrorCode::io, "truncated archive header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + pos, bytes.begin() + pos + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::io, std::string("corrupt archive header: ") + e.what());
    }
    pos += header_len;
    const size_t blob_base = pos;
    const size_t blob_floats = (bytes.size() - blob_base) / sizeof(float);

    Archive archive;
    archive.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
        TensorBlob t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<int64_t>>();
        const auto offset = entry.at("offset").get<uint64_t>();
        const auto n = static_cast<uint64_t>(element_count(t.shape));
        if (offset + n > blob_floats) throw Error(ErrorCode::io, "truncated blob '" + t.name + "'");
        t.values.resize(n);
        std::memcpy(t.values.data(), bytes.data() + blob_base + offset * sizeof(float), n * sizeof(float));
        archive.tensors.push_back(std::move(t));
    }
    return archive;
}

void write_archive_atomic(const std::filesystem::path& path, const Archive& archive) {
    const auto bytes = serialize_archive(archive);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::io, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::io, "cannot move checkpoint into place: " + ec.message());
}

Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_archive(bytes);
}

std::string fnv1a_hex(std::string_view text) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[i] = digits[h & 0xF];
    return out;
}

}  // namespace patchstyle
