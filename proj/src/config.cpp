#include "clanet/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace clanet {

namespace {

struct Entry {
    std::string key;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T out{};
    if (!(ss >> out) || !ss.eof())
        throw DataError("config: bad value '" + value + "' for key '" + key + "'");
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

#define NUM_ENTRY(KEY, FIELD, TYPE)                                                       \
    Entry{KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(KEY, v); }, \
          [](const PipelineConfig& c) { return std::to_string(c.FIELD); }}

#define DBL_ENTRY(KEY, FIELD)                                                            \
    Entry{KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_number<double>(KEY, v); }, \
          [](const PipelineConfig& c) { return format_double(c.FIELD); }}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = {
        NUM_ENTRY("seed", seed, std::uint64_t),
        NUM_ENTRY("threads", threads, int),
        NUM_ENTRY("seg.window", ccs.seg.window, int),
        NUM_ENTRY("seg.close_iterations", ccs.seg.close_iterations, int),
        NUM_ENTRY("seg.min_area", ccs.seg.min_area, int),
        NUM_ENTRY("ccs.k", ccs.k, int),
        Entry{"ccs.patch_size",
              [](PipelineConfig& c, const std::string& v) {
                  c.ccs.patch_w = c.ccs.patch_h = parse_number<int>("ccs.patch_size", v);
              },
              [](const PipelineConfig& c) { return std::to_string(c.ccs.patch_w); }},
        Entry{"embed.provider",
              [](PipelineConfig& c, const std::string& v) {
                  if (v != "descriptor" && v != "ssl" && v != "archive")
                      throw DataError("config: embed.provider must be descriptor|ssl|archive");
                  c.provider = v;
              },
              [](const PipelineConfig& c) { return c.provider; }},
        NUM_ENTRY("embed.d", embed_d, int),
        NUM_ENTRY("ssl.epochs", ssl.epochs, int),
        NUM_ENTRY("ssl.hidden", ssl.hidden, int),
        NUM_ENTRY("ssl.out_dim", ssl.out_dim, int),
        DBL_ENTRY("ssl.learning_rate", ssl.learning_rate),
        DBL_ENTRY("ssl.lambda", ssl.lambda),
        DBL_ENTRY("ssl.tau_s", ssl.tau_s),
        DBL_ENTRY("ssl.tau_t", ssl.tau_t),
        NUM_ENTRY("mil.epochs", mil.epochs, int),
        NUM_ENTRY("mil.batch", mil.batch_size, int),
        DBL_ENTRY("mil.lr", mil.learning_rate),
        NUM_ENTRY("mil.alpha1", mil.alpha1, int),
        NUM_ENTRY("mil.alpha2", mil.alpha2, int),
        NUM_ENTRY("mil.hidden", mil.hidden, int),
        Entry{"mil.aggregator",
              [](PipelineConfig& c, const std::string& v) { c.mil.aggregator = aggregator_from_string(v); },
              [](const PipelineConfig& c) { return to_string(c.mil.aggregator); }},
        Entry{"mil.tss",
              [](PipelineConfig& c, const std::string& v) {
                  if (v != "0" && v != "1") throw DataError("config: mil.tss must be 0 or 1");
                  c.mil.use_tss = v == "1";
              },
              [](const PipelineConfig& c) { return c.mil.use_tss ? "1" : "0"; }},
        NUM_ENTRY("baseline.epochs", baseline.epochs, int),
        DBL_ENTRY("baseline.lr", baseline.learning_rate),
        Entry{"eval.split",
              [](PipelineConfig& c, const std::string& v) {
                  split_from_string(v);  // validation
                  c.split = v;
              },
              [](const PipelineConfig& c) { return c.split; }},
        NUM_ENTRY("eval.replicates", replicates, int),
        NUM_ENTRY("synth.classes", synth_classes, int),
        NUM_ENTRY("synth.batches_per_class", synth_batches_per_class, int),
        NUM_ENTRY("synth.sequences_per_batch", synth_sequences_per_batch, int),
        NUM_ENTRY("synth.image_size", synth_image_size, int),
    };
    return entries;
}

#undef NUM_ENTRY
#undef DBL_ENTRY

std::string env_name(const std::string& key) {
    std::string name = "CLANET_";
    for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

}  // namespace

void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value) {
    for (const auto& entry : registry())
        if (entry.key == key) {
            entry.set(config, value);
            return;
        }
    throw DataError("config: unknown key '" + key + "'");
}

void apply_config_file(PipelineConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key, value, extra;
        if (!(ss >> key >> value) || (ss >> extra))
            throw DataError("config " + path.string() + ":" + std::to_string(line_no) +
                            ": expected 'key value'");
        apply_config_entry(config, key, value);
    }
}

void apply_env(PipelineConfig& config) {
    for (const auto& entry : registry()) {
        const char* value = std::getenv(env_name(entry.key).c_str());
        if (value) entry.set(config, value);
    }
}

std::string config_snapshot(const PipelineConfig& config) {
    std::string out;
    for (const auto& entry : registry()) out += entry.key + " " + entry.get(config) + "\n";
    return out;
}

}  // namespace clanet
