#include "clanet/archive.hpp"

#include <cstring>
#include <fstream>

namespace clanet {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

// Integers and floats are written little-endian; this code assumes a
// little-endian host (checked at startup of the writers/readers).
void check_endianness() {
    const std::uint32_t probe = 1;
    char byte;
    std::memcpy(&byte, &probe, 1);
    if (byte != 1) throw DataError("embedding archive: big-endian hosts are not supported");
}

template <typename T>
void put(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in.gcount() != sizeof(T)) throw DataError("embedding archive truncated: " + path.string());
    return value;
}

}  // namespace

void write_embedding_archive(const EmbeddingSequence& seq, const std::filesystem::path& path) {
    check_endianness();
    seq.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write embedding archive " + path.string());

    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.sequence_id.size()));
    out.write(seq.sequence_id.data(), static_cast<std::streamsize>(seq.sequence_id.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.frames.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.d));
    for (std::size_t n = 0; n < seq.frames.size(); ++n) {
        put<double>(out, seq.timestamps[n]);
        const std::uint32_t k = static_cast<std::uint32_t>(seq.frames[n].size()) / seq.d;
        put<std::uint32_t>(out, k);
        out.write(reinterpret_cast<const char*>(seq.frames[n].data()),
                  static_cast<std::streamsize>(seq.frames[n].size() * sizeof(float)));
    }
    if (!out) throw DataError("write failed for embedding archive " + path.string());
}

EmbeddingSequence read_embedding_archive(const std::filesystem::path& path) {
    check_endianness();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding archive " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("embedding archive magic mismatch: " + path.string());
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion)
        throw DataError("embedding archive version " + std::to_string(version) +
                        " unsupported: " + path.string());

    EmbeddingSequence seq;
    const auto id_len = get<std::uint32_t>(in, path);
    seq.sequence_id.resize(id_len);
    in.read(seq.sequence_id.data(), id_len);
    if (in.gcount() != static_cast<std::streamsize>(id_len))
        throw DataError("embedding archive truncated: " + path.string());

    const auto frame_count = get<std::uint32_t>(in, path);
    seq.d = static_cast<int>(get<std::uint32_t>(in, path));
    if (seq.d < 1 || frame_count < 1)
        throw DataError("embedding archive header inconsistent: " + path.string());

    for (std::uint32_t n = 0; n < frame_count; ++n) {
        seq.timestamps.push_back(get<double>(in, path));
        const auto k = get<std::uint32_t>(in, path);
        if (k < 1) throw DataError("embedding archive header inconsistent: " + path.string());
        std::vector<float> frame(static_cast<std::size_t>(k) * seq.d);
        in.read(reinterpret_cast<char*>(frame.data()),
                static_cast<std::streamsize>(frame.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(frame.size() * sizeof(float)))
            throw DataError("embedding archive payload shorter than header claims: " + path.string());
        seq.frames.push_back(std::move(frame));
    }
    if (in.peek() != EOF)
        throw DataError("embedding archive has trailing bytes: " + path.string());
    seq.validate();
    return seq;
}

}  // namespace clanet
