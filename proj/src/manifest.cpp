#include "clanet/manifest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "clanet/image_io.hpp"

namespace clanet {

namespace {

constexpr const char* kMagic = "clanet-manifest";
constexpr int kVersion = 1;

struct Parser {
    std::filesystem::path path;
    std::ifstream in;
    int line_no = 0;

    explicit Parser(const std::filesystem::path& p) : path(p), in(p) {
        if (!in) throw DataError("cannot open manifest " + p.string());
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError("manifest " + path.string() + ":" + std::to_string(line_no) + ": " + what);
    }

    // Next non-empty, non-comment line split into tokens.
    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            tokens.clear();
            std::istringstream ss(line);
            std::string tok;
            while (ss >> tok) tokens.push_back(tok);
            if (!tokens.empty()) return true;
        }
        return false;
    }

    std::vector<std::string> expect(const std::string& keyword, std::size_t n_args) {
        std::vector<std::string> tokens;
        if (!next(tokens)) fail("expected '" + keyword + "', got end of file");
        if (tokens[0] != keyword) fail("expected '" + keyword + "', got '" + tokens[0] + "'");
        if (tokens.size() != n_args + 1)
            fail("'" + keyword + "' takes " + std::to_string(n_args) + " fields");
        return tokens;
    }

    int to_int(const std::string& tok, const char* what) const {
        int v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) fail(std::string("bad ") + what + " '" + tok + "'");
        return v;
    }

    double to_double(const std::string& tok, const char* what) const {
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || !std::isfinite(v)) fail(std::string("bad ") + what + " '" + tok + "'");
        return v;
    }
};

void check_token(const std::string& tok, const char* what) {
    if (tok.empty()) throw DataError(std::string("manifest: empty ") + what);
    for (char c : tok)
        if (std::isspace(static_cast<unsigned char>(c)))
            throw DataError(std::string("manifest: ") + what + " '" + tok + "' contains whitespace");
}

std::string format_hours(Hours h) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", h);
    return buf;
}

}  // namespace

void validate_manifest(const DatasetManifest& m) {
    if (m.classes.empty()) throw DataError("manifest: no classes");
    for (const auto& name : m.classes) check_token(name, "class name");

    std::unordered_map<std::string, int> batch_class;
    for (const auto& b : m.batches) {
        check_token(b.batch_id, "batch_id");
        if (b.class_index < 0 || b.class_index >= static_cast<int>(m.classes.size()))
            throw DataError("manifest: batch '" + b.batch_id + "' class index " +
                            std::to_string(b.class_index) + " out of range");
        if (!batch_class.emplace(b.batch_id, b.class_index).second)
            throw DataError("manifest: duplicate batch_id '" + b.batch_id + "'");
    }

    std::unordered_set<std::string> seq_ids;
    std::unordered_set<std::string> batches_seen;
    for (const auto& s : m.sequences) {
        check_token(s.sequence_id, "sequence_id");
        if (!seq_ids.insert(s.sequence_id).second)
            throw DataError("manifest: duplicate sequence_id '" + s.sequence_id + "'");
        if (!batch_class.count(s.batch_id))
            throw DataError("manifest: sequence '" + s.sequence_id + "' references unknown batch '" +
                            s.batch_id + "'");
        batches_seen.insert(s.batch_id);
        if (s.frames.empty())
            throw DataError("manifest: sequence '" + s.sequence_id + "' has no frames");
        Hours prev = -1;
        for (const auto& f : s.frames) {
            check_token(f.path, "frame path");
            if (f.timestamp < 0 || !std::isfinite(f.timestamp))
                throw DataError("manifest: sequence '" + s.sequence_id + "' has invalid timestamp");
            if (!(f.timestamp > prev))
                throw DataError("manifest: sequence '" + s.sequence_id +
                                "' timestamps not strictly increasing");
            prev = f.timestamp;
        }
    }
    for (const auto& b : m.batches)
        if (!batches_seen.count(b.batch_id))
            throw DataError("manifest: batch '" + b.batch_id + "' has no sequences");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    Parser p(path);
    DatasetManifest m;
    m.root = path.parent_path();

    auto header = p.expect(kMagic, 1);
    if (p.to_int(header[1], "format version") != kVersion) p.fail("unsupported format version");

    const int n_classes = p.to_int(p.expect("classes", 1)[1], "class count");
    for (int i = 0; i < n_classes; ++i) {
        auto t = p.expect("class", 2);
        if (p.to_int(t[1], "class index") != i) p.fail("class indices must be 0..C-1 in order");
        m.classes.push_back(t[2]);
    }

    const int n_batches = p.to_int(p.expect("batches", 1)[1], "batch count");
    for (int i = 0; i < n_batches; ++i) {
        auto t = p.expect("batch", 2);
        m.batches.push_back({t[1], p.to_int(t[2], "class index")});
    }

    const int n_sequences = p.to_int(p.expect("sequences", 1)[1], "sequence count");
    for (int i = 0; i < n_sequences; ++i) {
        auto t = p.expect("sequence", 3);
        SequenceRecord seq;
        seq.sequence_id = t[1];
        seq.batch_id = t[2];
        const int n_frames = p.to_int(t[3], "frame count");
        for (int f = 0; f < n_frames; ++f) {
            auto ft = p.expect("frame", 2);
            seq.frames.push_back({p.to_double(ft[1], "timestamp"), ft[2]});
        }
        m.sequences.push_back(std::move(seq));
    }

    std::vector<std::string> extra;
    if (p.next(extra)) p.fail("unexpected trailing content");

    validate_manifest(m);

    for (const auto& s : m.sequences)
        for (const auto& f : s.frames) {
            const auto full = m.root / f.path;
            if (!std::filesystem::exists(full))
                throw DataError("manifest " + path.string() + ": sequence '" + s.sequence_id +
                                "' references missing file " + full.string());
        }
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    validate_manifest(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << kMagic << " " << kVersion << "\n";
    out << "classes " << m.classes.size() << "\n";
    for (std::size_t i = 0; i < m.classes.size(); ++i)
        out << "class " << i << " " << m.classes[i] << "\n";
    out << "batches " << m.batches.size() << "\n";
    for (const auto& b : m.batches) out << "batch " << b.batch_id << " " << b.class_index << "\n";
    out << "sequences " << m.sequences.size() << "\n";
    for (const auto& s : m.sequences) {
        out << "sequence " << s.sequence_id << " " << s.batch_id << " " << s.frames.size() << "\n";
        for (const auto& f : s.frames)
            out << "frame " << format_hours(f.timestamp) << " " << f.path << "\n";
    }
    if (!out) throw DataError("write failed for manifest " + path.string());
}

ImageSequence load_sequence_images(const DatasetManifest& m, const SequenceRecord& seq) {
    ImageSequence s;
    s.sequence_id = seq.sequence_id;
    s.batch_id = seq.batch_id;
    s.class_label = m.class_of_batch(seq.batch_id);
    for (const auto& f : seq.frames) {
        s.frames.push_back(read_image(m.root / f.path));
        s.timestamps.push_back(f.timestamp);
    }
    s.validate();
    return s;
}

}  // namespace clanet
