#include "clanet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "clanet/image_io.hpp"
#include "clanet/manifest.hpp"
#include "clanet/mil.hpp"

namespace clanet {

double logistic_confluency(double initial, double cap, double rate, double t_hours) {
    return cap / (1.0 + (cap - initial) / initial * std::exp(-rate * t_hours));
}

namespace {

// Position-keyed hash noise so speckle is independent of render order.
std::uint64_t pixel_hash(std::uint64_t seed, int x, int y) {
    std::uint64_t z = seed ^ (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ull) ^
                      (static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4Full);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Implicit ellipse coordinate: q <= 1 inside, ~1 on the boundary.
double ellipse_q(const CellGeometry& c, double x, double y) {
    const double dx = x - c.cx, dy = y - c.cy;
    const double u = dx * c.cos_t + dy * c.sin_t;
    const double v = -dx * c.sin_t + dy * c.cos_t;
    return (u * u) / (c.ra * c.ra) + (v * v) / (c.rb * c.rb);
}

}  // namespace

SequenceLayout generate_sequence_layout(const ClassSpec& cls, const SynthParams& params, Rng rng) {
    const int w = params.width, h = params.height;
    const auto total = static_cast<double>(w) * h;

    // Adherent cells grow in colonies: the list is filled colony by colony,
    // so any prefix of it is a set of dense cluster neighborhoods. That keeps
    // cluster-level patches dense at every confluency level.
    const double colony_sigma = 34.0;
    const double colony_capacity = 2.2 * colony_sigma * colony_sigma;  // cell px per colony
    const double margin = colony_sigma;

    SequenceLayout layout;
    std::vector<std::uint8_t> occupied(static_cast<std::size_t>(w) * h, 0);
    std::size_t covered = 0;
    const auto limit = static_cast<std::size_t>(std::min(0.95, params.confluency_cap + 0.03) * total);

    double colony_x = rng.uniform(margin, w - margin);
    double colony_y = rng.uniform(margin, h - margin);
    double colony_fill = 0;
    int rejects = 0;
    while (covered < limit && rejects < 20000) {
        if (colony_fill >= colony_capacity) {
            colony_x = rng.uniform(margin, w - margin);
            colony_y = rng.uniform(margin, h - margin);
            colony_fill = 0;
        }
        CellGeometry cell;
        cell.cx = colony_x + colony_sigma * rng.normal();
        cell.cy = colony_y + colony_sigma * rng.normal();
        cell.ra = rng.uniform(cls.radius_min, cls.radius_max);
        cell.rb = cell.ra * rng.uniform(cls.aspect_min, cls.aspect_max);
        const double angle = rng.uniform(0, 3.14159265358979323846);
        cell.cos_t = std::cos(angle);
        cell.sin_t = std::sin(angle);
        cell.speckle_seed = rng.next_u64();

        // Light overlap control: reject centers outside the image or already
        // inside a placed cell.
        if (cell.cx < 0 || cell.cy < 0 || cell.cx >= w || cell.cy >= h) {
            ++rejects;
            colony_fill += 6;  // keeps a blocked colony from stalling the fill
            continue;
        }
        if (occupied[static_cast<std::size_t>(static_cast<int>(cell.cy)) * w +
                     static_cast<int>(cell.cx)]) {
            ++rejects;
            colony_fill += 6;
            continue;
        }

        const int x0 = std::max(0, static_cast<int>(cell.cx - cell.ra - 1));
        const int x1 = std::min(w - 1, static_cast<int>(cell.cx + cell.ra + 1));
        const int y0 = std::max(0, static_cast<int>(cell.cy - cell.ra - 1));
        const int y1 = std::min(h - 1, static_cast<int>(cell.cy + cell.ra + 1));
        std::size_t painted = 0;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (ellipse_q(cell, x + 0.5, y + 0.5) <= 1.0) {
                    const std::size_t idx = static_cast<std::size_t>(y) * w + x;
                    if (!occupied[idx]) {
                        occupied[idx] = 1;
                        ++painted;
                    }
                }
        covered += painted;
        colony_fill += static_cast<double>(painted);
        layout.cells.push_back(cell);
    }
    return layout;
}

FrameRender render_frame(const ClassSpec& cls, const BatchSpec& batch, const SynthParams& params,
                         double target_confluency, const SequenceLayout& layout, Rng noise_rng) {
    if (target_confluency > 0.95)
        throw DataError("render_frame: confluency above 0.95 is infeasible");
    const int w = params.width, h = params.height;

    std::vector<double> canvas(static_cast<std::size_t>(w) * h, params.background);
    std::vector<std::uint8_t> occupied(static_cast<std::size_t>(w) * h, 0);
    const auto total = static_cast<double>(w) * h;
    std::size_t covered = 0;

    // Cells grow modestly with confluency; coverage growth mostly comes from
    // longer layout prefixes (new cells and colonies appearing over time).
    const double scale =
        0.8 + 0.4 * std::min(1.0, target_confluency / params.confluency_cap);
    const std::int64_t target_pixels = static_cast<std::int64_t>(target_confluency * total);
    const double ring_inner = 0.62;  // interior/membrane boundary in q

    for (const CellGeometry& base : layout.cells) {
        if (static_cast<std::int64_t>(covered) >= target_pixels) break;
        CellGeometry cell = base;
        cell.ra *= scale;
        cell.rb *= scale;

        const int x0 = std::max(0, static_cast<int>(cell.cx - cell.ra - 2));
        const int x1 = std::min(w - 1, static_cast<int>(cell.cx + cell.ra + 2));
        const int y0 = std::max(0, static_cast<int>(cell.cy - cell.ra - 2));
        const int y1 = std::min(h - 1, static_cast<int>(cell.cy + cell.ra + 2));
        const double aa = 1.6 / cell.rb;  // ~1 px anti-alias band
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double q = ellipse_q(cell, x + 0.5, y + 0.5);
                if (q > 1.0 + aa) continue;
                const std::size_t idx = static_cast<std::size_t>(y) * w + x;
                double value;
                if (q <= ring_inner) {
                    value = params.background - cls.interior_depth;
                    const std::uint64_t hash = pixel_hash(cell.speckle_seed, x, y);
                    if ((hash >> 11) * 0x1.0p-53 < cls.speckle_freq)
                        value += (hash & 1 ? 1.0 : -1.0) * cls.speckle_contrast;
                } else {
                    value = params.background + cls.ring_contrast;
                }
                if (q > 1.0) {  // blend the outer rim into the background
                    const double alpha = (1.0 + aa - q) / aa;
                    value = canvas[idx] * (1.0 - alpha) + value * alpha;
                }
                canvas[idx] = value;
                if (q <= 1.0 && !occupied[idx]) {
                    occupied[idx] = 1;
                    ++covered;
                }
            }
    }

    FrameRender out;
    out.coverage = static_cast<double>(covered) / total;
    out.image = GrayImage(w, h);
    // Per-frame exposure wobble on top of the batch-level quality knobs.
    double offset = batch.brightness_offset;
    double gain = batch.contrast_gain;
    if (batch.exposure_jitter > 0)
        offset += noise_rng.uniform(-batch.exposure_jitter, batch.exposure_jitter);
    if (batch.gain_jitter > 0)
        gain *= noise_rng.uniform(1.0 - batch.gain_jitter, 1.0 + batch.gain_jitter);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        double v = (canvas[i] - 128.0) * gain + 128.0 + offset;
        if (batch.noise_sigma > 0) v += batch.noise_sigma * noise_rng.normal();
        out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
    }
    return out;
}

DatasetManifest generate_corpus(const std::vector<ClassSpec>& classes,
                                const std::vector<BatchSpec>& batches, const SynthParams& params,
                                Rng& rng, const std::filesystem::path& out_dir,
                                std::vector<SequenceStats>* stats) {
    if (classes.empty() || batches.empty()) throw DataError("generate_corpus: empty specs");
    for (const auto& b : batches) {
        if (b.class_index < 0 || b.class_index >= static_cast<int>(classes.size()))
            throw DataError("generate_corpus: batch '" + b.batch_id + "' class index out of range");
        if (b.interval_hours != 1 && b.interval_hours != 2 && b.interval_hours != 4 &&
            b.interval_hours != 8)
            throw DataError("generate_corpus: batch '" + b.batch_id + "' interval must be 1, 2, 4 or 8 h");
        if (b.initial_confluency <= 0 || b.initial_confluency > 0.95 ||
            b.initial_confluency >= params.confluency_cap)
            throw DataError("generate_corpus: batch '" + b.batch_id + "' initial confluency infeasible");
        if (b.duration_days <= 0 || b.sequences < 1)
            throw DataError("generate_corpus: batch '" + b.batch_id + "' bad duration or sequence count");
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw DataError("generate_corpus: cannot create output directory " + out_dir.string());

    DatasetManifest manifest;
    manifest.root = out_dir;
    for (const auto& c : classes) manifest.classes.push_back(c.name);
    for (const auto& b : batches) manifest.batches.push_back({b.batch_id, b.class_index});

    for (const auto& batch : batches) {
        const ClassSpec& cls = classes[batch.class_index];
        const std::filesystem::path batch_dir = out_dir / batch.batch_id;
        std::filesystem::create_directories(batch_dir);

        for (int s = 0; s < batch.sequences; ++s) {
            SequenceRecord record;
            record.sequence_id = batch.batch_id + "-s" + std::to_string(s);
            record.batch_id = batch.batch_id;

            SequenceStats seq_stats;
            seq_stats.sequence_id = record.sequence_id;

            // The cell layout depends only on (layout_seed, sequence
            // ordinal); noise streams fork per frame and vary per batch.
            const SequenceLayout layout = generate_sequence_layout(
                cls, params, Rng(batch.layout_seed).fork(static_cast<std::uint64_t>(s)));
            Rng noise_base = rng.fork(pixel_hash(0x5eed, batch.class_index, 0) ^
                                      std::hash<std::string>{}(batch.batch_id))
                                 .fork(static_cast<std::uint64_t>(s));

            const double duration_hours = batch.duration_days * 24.0;
            int frame_index = 0;
            for (double t = 0; t <= duration_hours + 1e-9; t += batch.interval_hours, ++frame_index) {
                const double target = logistic_confluency(batch.initial_confluency,
                                                          params.confluency_cap, cls.growth_rate, t);
                FrameRender frame =
                    render_frame(cls, batch, params, target, layout,
                                 noise_base.fork(static_cast<std::uint64_t>(frame_index)));

                char name[64];
                std::snprintf(name, sizeof(name), "%s_f%04d.pgm", record.sequence_id.c_str(),
                              frame_index);
                write_image(frame.image, batch_dir / name);
                record.frames.push_back({t, (std::filesystem::path(batch.batch_id) / name).string()});
                seq_stats.target_confluency.push_back(target);
                seq_stats.rendered_coverage.push_back(frame.coverage);
            }
            manifest.sequences.push_back(std::move(record));
            if (stats) stats->push_back(std::move(seq_stats));
        }
    }

    write_manifest(manifest, out_dir / "manifest.txt");
    return manifest;
}

std::vector<ClassSpec> default_class_specs(int n) {
    if (n < 1) throw DataError("default_class_specs: need n >= 1");
    std::vector<ClassSpec> specs;
    for (int i = 0; i < n; ++i) {
        ClassSpec c;
        c.name = "line" + std::to_string(i);
        // Three binary morphology axes; each pairs an intensity-structure
        // contrast with a shape contrast so the lines stay distinguishable
        // under batch-level quality shifts.
        const bool bright_ring = i & 1;
        const bool deep_interior = i & 2;
        const bool speckled = i & 4;
        c.aspect_min = bright_ring ? 0.22 : 0.7;
        c.aspect_max = bright_ring ? 0.38 : 0.95;
        c.radius_min = deep_interior ? 12 : 6;
        c.radius_max = deep_interior ? 17 : 9;
        c.ring_contrast = bright_ring ? 62 : 26;
        c.interior_depth = deep_interior ? 30 : 8;
        c.speckle_freq = speckled ? 0.5 : 0.06;
        c.speckle_contrast = speckled ? 68 : 26;
        c.growth_rate = 0.022 + 0.004 * (i % 4);
        specs.push_back(std::move(c));
    }
    return specs;
}

std::vector<BatchSpec> default_batch_specs(int n_classes, int batches_per_class,
                                           int sequences_per_batch) {
    static const double confluencies[4] = {0.04, 0.06, 0.09, 0.13};
    static const double brightness[4] = {-3, -1, 1, 3};
    static const double contrast[4] = {0.97, 1.0, 1.02, 0.99};
    static const double noise[4] = {3.5, 4.0, 4.5, 3.5};
    static const int intervals[4] = {2, 4, 8, 2};
    static const double durations[4] = {4.0, 4.5, 5.0, 4.0};

    std::vector<BatchSpec> specs;
    for (int c = 0; c < n_classes; ++c)
        for (int b = 0; b < batches_per_class; ++b) {
            BatchSpec spec;
            spec.batch_id = "c" + std::to_string(c) + "b" + std::to_string(b);
            spec.class_index = c;
            // Rotate the nuisance knobs so no class sees them in the same
            // combination.
            const int k = (b + c) % 4;
            spec.initial_confluency = confluencies[(b + c / 2) % 4];
            spec.brightness_offset = brightness[k];
            spec.contrast_gain = contrast[(k + 1) % 4];
            spec.noise_sigma = noise[(k + 2) % 4];
            spec.exposure_jitter = 1.5;
            spec.gain_jitter = 0.015;
            spec.interval_hours = intervals[(b + c) % 4];
            spec.duration_days = durations[(b + c / 4) % 4];
            spec.sequences = sequences_per_batch;
            spec.layout_seed = 0x10000ull * c + 0x100ull * b + 1;
            specs.push_back(std::move(spec));
        }
    return specs;
}

std::string CorpusStats::to_csv() const {
    std::string csv = "record,batch_id,class_index,timestamp_hours,mean,std\n";
    char line[160];
    for (const auto& b : batches) {
        std::snprintf(line, sizeof(line), "interval,%s,%d,,%.6f,\n", b.batch_id.c_str(),
                      b.class_index, b.mean_interval);
        csv += line;
        for (std::size_t i = 0; i < b.timestamps.size(); ++i) {
            std::snprintf(line, sizeof(line), "confluency,%s,%d,%.6f,%.6f,%.6f\n", b.batch_id.c_str(),
                          b.class_index, b.timestamps[i], b.confluency_mean[i], b.confluency_std[i]);
            csv += line;
        }
    }
    return csv;
}

CorpusStats corpus_stats(const DatasetManifest& manifest, const SegParams& seg) {
    CorpusStats stats;
    for (const auto& batch : manifest.batches) {
        BatchCurve curve;
        curve.batch_id = batch.batch_id;
        curve.class_index = batch.class_index;

        // timestamp -> coverage samples across the batch's sequences
        std::vector<std::pair<Hours, std::vector<double>>> samples;
        double interval_sum = 0;
        int interval_count = 0;
        for (const auto& seq : manifest.sequences) {
            if (seq.batch_id != batch.batch_id) continue;
            std::vector<Hours> ts;
            for (const auto& f : seq.frames) ts.push_back(f.timestamp);
            if (ts.size() >= 2) {
                interval_sum += expected_interval(ts);
                ++interval_count;
            }
            for (const auto& f : seq.frames) {
                const GrayImage img = read_image(manifest.root / f.path);
                const BinaryMask mask = segment(img, seg);
                const double coverage =
                    static_cast<double>(mask.foreground_count()) / (img.width * img.height);
                auto it = std::find_if(samples.begin(), samples.end(),
                                       [&](const auto& p) { return p.first == f.timestamp; });
                if (it == samples.end()) {
                    samples.push_back({f.timestamp, {coverage}});
                } else {
                    it->second.push_back(coverage);
                }
            }
        }
        curve.mean_interval = interval_count > 0 ? interval_sum / interval_count : 0.0;
        std::sort(samples.begin(), samples.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [t, values] : samples) {
            double mean = 0;
            for (double v : values) mean += v;
            mean /= values.size();
            double var = 0;
            for (double v : values) var += (v - mean) * (v - mean);
            curve.timestamps.push_back(t);
            curve.confluency_mean.push_back(mean);
            curve.confluency_std.push_back(std::sqrt(var / values.size()));
        }
        stats.batches.push_back(std::move(curve));
    }
    return stats;
}

}  // namespace clanet
