#include "clanet/mil.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

namespace clanet {

int expected_interval(const std::vector<Hours>& timestamps) {
    if (timestamps.size() < 2) throw DataError("expected_interval: need at least 2 timestamps");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
        if (!(timestamps[i] > timestamps[i - 1]))
            throw DataError("expected_interval: timestamps not strictly increasing");
    const double mean = (timestamps.back() - timestamps.front()) /
                        static_cast<double>(timestamps.size() - 1);
    return static_cast<int>(std::llround(mean));  // halves away from zero
}

int IntervalModel::mu_of(const std::string& sequence_id) const {
    const auto it = mu_by_sequence.find(sequence_id);
    if (it == mu_by_sequence.end())
        throw DataError("interval model: unknown sequence '" + sequence_id + "'");
    return it->second;
}

IntervalModel build_interval_model(const std::vector<const EmbeddingSequence*>& training) {
    if (training.empty()) throw DataError("build_interval_model: no sequences");

    IntervalModel model;
    std::set<int> candidates;
    std::vector<const EmbeddingSequence*> single_frame;
    for (const auto* seq : training) {
        if (seq->frame_count() < 2) {
            single_frame.push_back(seq);
            continue;
        }
        const int mu = std::max(1, expected_interval(seq->timestamps));
        model.mu_by_sequence[seq->sequence_id] = mu;
        candidates.insert(mu);
    }
    if (candidates.empty()) candidates.insert(1);  // corpus of single-frame sequences
    model.candidates.assign(candidates.begin(), candidates.end());
    for (const auto* seq : single_frame)
        model.mu_by_sequence[seq->sequence_id] = model.candidates.front();

    double mean = 0;
    for (const auto* seq : training) mean += model.mu_of(seq->sequence_id);
    mean /= static_cast<double>(training.size());
    double var = 0;
    for (const auto* seq : training) {
        const double d = model.mu_of(seq->sequence_id) - mean;
        var += d * d;
    }
    model.sigma = std::sqrt(var / static_cast<double>(training.size()));
    return model;
}

int snap_interval(const IntervalModel& model, double draw) {
    if (model.candidates.empty()) throw DataError("snap_interval: empty candidate set");
    int best = model.candidates.front();
    double best_dist = std::abs(draw - best);
    for (int c : model.candidates) {
        const double dist = std::abs(draw - c);
        if (dist < best_dist) {  // ties keep the smaller (earlier) candidate
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

int sample_interval(const IntervalModel& model, int mu_s, Rng& rng) {
    return snap_interval(model, rng.normal(static_cast<double>(mu_s), model.sigma));
}

std::vector<Hours> SampledSequence::timestamps() const {
    std::vector<Hours> out;
    out.reserve(frame_indices.size());
    for (int i : frame_indices) out.push_back(source->timestamps[i]);
    return out;
}

SampledSequence tss_sample(const EmbeddingSequence& seq, int t_tilde, int mu_s, Rng& rng) {
    SampledSequence out;
    out.source = &seq;
    const int n = seq.frame_count();
    const int chunk = t_tilde > mu_s ? t_tilde / mu_s : 1;  // floor

    // Identity branch: t_tilde <= mu_s, or a chunk length of 1, reproduces
    // the full sequence, so it passes through unsampled.
    if (chunk <= 1 || n < 2) {
        out.frame_indices.resize(n);
        std::iota(out.frame_indices.begin(), out.frame_indices.end(), 0);
        out.sampled = false;
        return out;
    }

    out.sampled = true;
    for (int start = 0; start < n; start += chunk) {
        const int len = std::min(chunk, n - start);
        out.frame_indices.push_back(start + static_cast<int>(rng.uniform_int(len)));
    }
    return out;
}

double reweight(const SampledSequence& sampled, int mu_s, int t_tilde, int alpha1, int alpha2) {
    if (!sampled.source) throw DataError("reweight: sampled sequence has no source");
    if (alpha1 == 0 && alpha2 == 0) return 1.0;  // weighting disabled
    if (!sampled.sampled) return 1.0;            // full sequences are unweighted

    const double n = sampled.source->frame_count();
    const double v = sampled.frame_count();
    double w = alpha1 * (v / n);
    if (alpha2 != 0 && t_tilde != mu_s && sampled.frame_count() >= 2) {
        const double achieved = expected_interval(sampled.timestamps());
        w += alpha2 * (achieved - mu_s) / static_cast<double>(t_tilde - mu_s);
    }
    return w;
}

Aggregator aggregator_from_string(const std::string& name) {
    if (name == "gated") return Aggregator::gated;
    if (name == "max") return Aggregator::max_pool;
    if (name == "avg") return Aggregator::avg_pool;
    throw DataError("unknown aggregator '" + name + "' (expected gated|max|avg)");
}

std::string to_string(Aggregator a) {
    switch (a) {
        case Aggregator::gated: return "gated";
        case Aggregator::max_pool: return "max";
        case Aggregator::avg_pool: return "avg";
    }
    return "gated";
}

namespace {

void scaled_uniform_init(std::vector<double>& w, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-bound, bound);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Forward pieces of the gated attention head kept for the backward pass.
struct GatedCache {
    std::vector<double> tanh_act;  // M x L
    std::vector<double> sigm_act;  // M x L
    std::vector<double> scores;    // M
    std::vector<double> attention; // M
};

void gated_forward(const MilModel& m, const std::vector<const float*>& instances, GatedCache& cache) {
    const int M = static_cast<int>(instances.size());
    const int L = m.hidden, D = m.d;
    cache.tanh_act.assign(static_cast<std::size_t>(M) * L, 0.0);
    cache.sigm_act.assign(static_cast<std::size_t>(M) * L, 0.0);
    cache.scores.assign(M, 0.0);
    for (int i = 0; i < M; ++i) {
        const float* f = instances[i];
        double score = 0;
        for (int l = 0; l < L; ++l) {
            const double* trow = m.theta.data() + static_cast<std::size_t>(l) * D;
            const double* prow = m.phi.data() + static_cast<std::size_t>(l) * D;
            double a = 0, b = 0;
            for (int k = 0; k < D; ++k) {
                a += trow[k] * f[k];
                b += prow[k] * f[k];
            }
            const double t = std::tanh(a);
            const double s = sigmoid(b);
            cache.tanh_act[static_cast<std::size_t>(i) * L + l] = t;
            cache.sigm_act[static_cast<std::size_t>(i) * L + l] = s;
            score += m.psi[l] * t * s;
        }
        cache.scores[i] = score;
    }
    const double peak = *std::max_element(cache.scores.begin(), cache.scores.end());
    cache.attention.assign(M, 0.0);
    double sum = 0;
    for (int i = 0; i < M; ++i) {
        cache.attention[i] = std::exp(cache.scores[i] - peak);
        sum += cache.attention[i];
    }
    for (int i = 0; i < M; ++i) cache.attention[i] /= sum;
}

std::vector<double> softmax_vec(const std::vector<double>& logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace

MilModel MilModel::init(Aggregator kind, int hidden, int d, int classes, Rng& rng) {
    if (hidden < 1 || d < 1 || classes < 1) throw DataError("MilModel: dimensions must be >= 1");
    MilModel m;
    m.kind = kind;
    m.hidden = hidden;
    m.d = d;
    m.classes = classes;
    m.theta.assign(static_cast<std::size_t>(hidden) * d, 0.0);
    m.phi.assign(static_cast<std::size_t>(hidden) * d, 0.0);
    m.psi.assign(hidden, 0.0);
    m.cls_w.assign(static_cast<std::size_t>(classes) * d, 0.0);
    m.cls_b.assign(classes, 0.0);
    if (kind == Aggregator::gated) {
        scaled_uniform_init(m.theta, d, hidden, rng);
        scaled_uniform_init(m.phi, d, hidden, rng);
        scaled_uniform_init(m.psi, hidden, 1, rng);
    }
    scaled_uniform_init(m.cls_w, d, classes, rng);
    return m;
}

MilGrads MilGrads::zeros(const MilModel& model) {
    MilGrads g;
    g.theta.assign(model.theta.size(), 0.0);
    g.phi.assign(model.phi.size(), 0.0);
    g.psi.assign(model.psi.size(), 0.0);
    g.cls_w.assign(model.cls_w.size(), 0.0);
    g.cls_b.assign(model.cls_b.size(), 0.0);
    return g;
}

void MilGrads::add_scaled(const MilGrads& other, double scale) {
    auto add = [scale](std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    };
    add(theta, other.theta);
    add(phi, other.phi);
    add(psi, other.psi);
    add(cls_w, other.cls_w);
    add(cls_b, other.cls_b);
}

double MilGrads::max_abs_diff(const MilGrads& other) const {
    double worst = 0;
    auto scan = [&worst](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    };
    scan(theta, other.theta);
    scan(phi, other.phi);
    scan(psi, other.psi);
    scan(cls_w, other.cls_w);
    scan(cls_b, other.cls_b);
    return worst;
}

std::vector<const float*> gather_instances(const EmbeddingSequence& seq, const std::vector<int>* frames) {
    std::vector<const float*> instances;
    auto add_frame = [&](int n) {
        for (int k = 0; k < seq.k(n); ++k) instances.push_back(seq.instance(n, k));
    };
    if (frames) {
        for (int n : *frames) add_frame(n);
    } else {
        for (int n = 0; n < seq.frame_count(); ++n) add_frame(n);
    }
    return instances;
}

AggregateResult aggregate(const MilModel& model, const std::vector<const float*>& instances) {
    if (instances.empty()) throw DataError("aggregate: zero instances");
    const int M = static_cast<int>(instances.size());
    const int D = model.d;
    AggregateResult result;
    result.representation.assign(D, 0.0);

    switch (model.kind) {
        case Aggregator::gated: {
            GatedCache cache;
            gated_forward(model, instances, cache);
            for (int i = 0; i < M; ++i) {
                const float* f = instances[i];
                const double a = cache.attention[i];
                for (int k = 0; k < D; ++k) result.representation[k] += a * f[k];
            }
            result.attention = std::move(cache.attention);
            break;
        }
        case Aggregator::max_pool:
            for (int k = 0; k < D; ++k) {
                double best = instances[0][k];
                for (int i = 1; i < M; ++i) best = std::max(best, static_cast<double>(instances[i][k]));
                result.representation[k] = best;
            }
            break;
        case Aggregator::avg_pool:
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < D; ++k) result.representation[k] += instances[i][k];
            for (int k = 0; k < D; ++k) result.representation[k] /= M;
            break;
    }
    return result;
}

std::vector<double> predict(const MilModel& model, const EmbeddingSequence& seq) {
    if (seq.d != model.d)
        throw DataError("predict: sequence dimension " + std::to_string(seq.d) +
                        " does not match model dimension " + std::to_string(model.d));
    const AggregateResult agg = aggregate(model, gather_instances(seq));
    std::vector<double> logits(model.classes, 0.0);
    for (int c = 0; c < model.classes; ++c) {
        double a = model.cls_b[c];
        const double* row = model.cls_w.data() + static_cast<std::size_t>(c) * model.d;
        for (int k = 0; k < model.d; ++k) a += row[k] * agg.representation[k];
        logits[c] = a;
    }
    return softmax_vec(logits);
}

namespace {

// Cross-entropy loss and parameter gradients for a single bag (unweighted).
double bag_loss_and_grads(const MilModel& m, const Bag& bag, MilGrads& g) {
    const int M = static_cast<int>(bag.instances.size());
    const int L = m.hidden, D = m.d, C = m.classes;
    if (M == 0) throw DataError("loss_and_grads: bag with zero instances");
    if (bag.label < 0 || bag.label >= C) throw DataError("loss_and_grads: label out of range");

    GatedCache cache;
    std::vector<double> z(D, 0.0);
    if (m.kind == Aggregator::gated) {
        gated_forward(m, bag.instances, cache);
        for (int i = 0; i < M; ++i)
            for (int k = 0; k < D; ++k) z[k] += cache.attention[i] * bag.instances[i][k];
    } else if (m.kind == Aggregator::max_pool) {
        for (int k = 0; k < D; ++k) {
            double best = bag.instances[0][k];
            for (int i = 1; i < M; ++i) best = std::max(best, static_cast<double>(bag.instances[i][k]));
            z[k] = best;
        }
    } else {
        for (int i = 0; i < M; ++i)
            for (int k = 0; k < D; ++k) z[k] += bag.instances[i][k];
        for (int k = 0; k < D; ++k) z[k] /= M;
    }

    std::vector<double> logits(C, 0.0);
    for (int c = 0; c < C; ++c) {
        double a = m.cls_b[c];
        const double* row = m.cls_w.data() + static_cast<std::size_t>(c) * D;
        for (int k = 0; k < D; ++k) a += row[k] * z[k];
        logits[c] = a;
    }
    const std::vector<double> p = softmax_vec(logits);
    const double loss = -std::log(std::max(p[bag.label], 1e-300));

    // d(loss)/d(logits) = p - onehot(label)
    std::vector<double> dlogits = p;
    dlogits[bag.label] -= 1.0;
    std::vector<double> dz(D, 0.0);
    for (int c = 0; c < C; ++c) {
        const double gc = dlogits[c];
        g.cls_b[c] += gc;
        double* grow = g.cls_w.data() + static_cast<std::size_t>(c) * D;
        const double* wrow = m.cls_w.data() + static_cast<std::size_t>(c) * D;
        for (int k = 0; k < D; ++k) {
            grow[k] += gc * z[k];
            dz[k] += gc * wrow[k];
        }
    }

    if (m.kind == Aggregator::avg_pool) {
        return loss;  // dz/df is constant; no attention parameters
    }
    if (m.kind == Aggregator::max_pool) {
        return loss;  // gradient w.r.t. instances only; no parameters below the classifier
    }

    // Gated attention backward. dL/dA_i = <dz, f_i>; softmax Jacobian gives
    // dL/ds_i = A_i (dL/dA_i - sum_j A_j dL/dA_j).
    std::vector<double> dA(M, 0.0);
    double weighted = 0;
    for (int i = 0; i < M; ++i) {
        const float* f = bag.instances[i];
        double dot = 0;
        for (int k = 0; k < D; ++k) dot += dz[k] * f[k];
        dA[i] = dot;
        weighted += cache.attention[i] * dot;
    }
    for (int i = 0; i < M; ++i) {
        const double ds = cache.attention[i] * (dA[i] - weighted);
        const float* f = bag.instances[i];
        const double* tanh_row = cache.tanh_act.data() + static_cast<std::size_t>(i) * L;
        const double* sigm_row = cache.sigm_act.data() + static_cast<std::size_t>(i) * L;
        for (int l = 0; l < L; ++l) {
            const double t = tanh_row[l];
            const double s = sigm_row[l];
            g.psi[l] += ds * t * s;
            const double da = ds * m.psi[l] * s * (1.0 - t * t);
            const double db = ds * m.psi[l] * t * s * (1.0 - s);
            double* trow = g.theta.data() + static_cast<std::size_t>(l) * D;
            double* prow = g.phi.data() + static_cast<std::size_t>(l) * D;
            for (int k = 0; k < D; ++k) {
                trow[k] += da * f[k];
                prow[k] += db * f[k];
            }
        }
    }
    return loss;
}

}  // namespace

double loss_and_grads(const MilModel& model, const std::vector<Bag>& minibatch, MilGrads& grads) {
    if (minibatch.empty()) throw DataError("loss_and_grads: empty minibatch");
    double weight_sum = 0;
    for (const auto& bag : minibatch) {
        if (!(bag.weight >= 0) || !std::isfinite(bag.weight))
            throw DataError("loss_and_grads: invalid bag weight");
        weight_sum += bag.weight;
    }
    if (weight_sum <= 0) throw DataError("loss_and_grads: weights sum to zero");

    grads = MilGrads::zeros(model);
    double loss = 0;
    MilGrads bag_grads = MilGrads::zeros(model);
    for (const auto& bag : minibatch) {
        const double scale = bag.weight / weight_sum;
        bag_grads = MilGrads::zeros(model);
        loss += scale * bag_loss_and_grads(model, bag, bag_grads);
        grads.add_scaled(bag_grads, scale);
    }
    if (!std::isfinite(loss)) throw DataError("loss_and_grads: non-finite loss");
    return loss;
}

TrainResult train_mil(const std::vector<const EmbeddingSequence*>& training,
                      const std::vector<int>& labels, int classes, const TrainConfig& config) {
    if (training.empty()) throw DataError("train_mil: no training sequences");
    if (training.size() != labels.size()) throw DataError("train_mil: label count mismatch");
    const int d = training.front()->d;
    for (const auto* seq : training)
        if (seq->d != d) throw DataError("train_mil: inconsistent embedding dimensions");

    Rng master(config.seed);
    Rng init_rng = master.fork(0);
    Rng shuffle_rng = master.fork(1);
    Rng interval_rng = master.fork(2);
    Rng snippet_rng = master.fork(3);

    TrainResult result;
    result.model = MilModel::init(config.aggregator, config.hidden, d, classes, init_rng);

    IntervalModel intervals;
    if (config.use_tss) intervals = build_interval_model(training);

    std::vector<int> order(training.size());
    std::iota(order.begin(), order.end(), 0);
    MilGrads grads = MilGrads::zeros(result.model);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double epoch_loss = 0;
        int steps = 0;
        std::vector<Bag> minibatch;
        std::vector<SampledSequence> holders;  // keeps frame index storage alive
        minibatch.reserve(config.batch_size);
        holders.reserve(config.batch_size);

        auto flush = [&]() {
            if (minibatch.empty()) return;
            const double loss = loss_and_grads(result.model, minibatch, grads);
            if (!std::isfinite(loss))
                throw DataError("train_mil: diverged at epoch " + std::to_string(epoch));
            epoch_loss += loss;
            ++steps;
            auto step = [&](std::vector<double>& p, const std::vector<double>& g) {
                for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * g[i];
            };
            step(result.model.theta, grads.theta);
            step(result.model.phi, grads.phi);
            step(result.model.psi, grads.psi);
            step(result.model.cls_w, grads.cls_w);
            step(result.model.cls_b, grads.cls_b);
            minibatch.clear();
            holders.clear();
        };

        for (int idx : order) {
            const EmbeddingSequence& seq = *training[idx];
            Bag bag;
            bag.label = labels[idx];
            if (config.use_tss) {
                const int mu_s = intervals.mu_of(seq.sequence_id);
                const int t_tilde = sample_interval(intervals, mu_s, interval_rng);
                holders.push_back(tss_sample(seq, t_tilde, mu_s, snippet_rng));
                const SampledSequence& ss = holders.back();
                bag.weight = reweight(ss, mu_s, t_tilde, config.alpha1, config.alpha2);
                bag.instances = gather_instances(seq, &ss.frame_indices);
            } else {
                bag.weight = 1.0;
                bag.instances = gather_instances(seq);
            }
            minibatch.push_back(std::move(bag));
            if (static_cast<int>(minibatch.size()) == config.batch_size) flush();
        }
        flush();
        result.epoch_loss.push_back(steps > 0 ? epoch_loss / steps : 0.0);
    }
    return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'L', 'A', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in.gcount() != sizeof(T)) throw DataError("checkpoint truncated: " + path.string());
    return v;
}

void put_block(std::ofstream& out, const std::vector<double>& block) {
    put<std::uint64_t>(out, block.size());
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(double)));
}

std::vector<double> get_block(std::ifstream& in, const std::filesystem::path& path) {
    const auto n = get<std::uint64_t>(in, path);
    std::vector<double> block(n);
    in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
        throw DataError("checkpoint truncated: " + path.string());
    return block;
}

}  // namespace

void save_mil_checkpoint(const MilModel& model, const TrainConfig& config,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.kind));
    put<std::int32_t>(out, model.hidden);
    put<std::int32_t>(out, model.d);
    put<std::int32_t>(out, model.classes);
    put<std::int32_t>(out, config.epochs);
    put<std::int32_t>(out, config.batch_size);
    put<double>(out, config.learning_rate);
    put<std::int32_t>(out, config.alpha1);
    put<std::int32_t>(out, config.alpha2);
    put<std::uint8_t>(out, config.use_tss ? 1 : 0);
    put<std::uint64_t>(out, config.seed);
    put_block(out, model.theta);
    put_block(out, model.phi);
    put_block(out, model.psi);
    put_block(out, model.cls_w);
    put_block(out, model.cls_b);
    if (!out) throw DataError("write failed for checkpoint " + path.string());
}

MilModel load_mil_checkpoint(const std::filesystem::path& path, TrainConfig* config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError("checkpoint magic mismatch: " + path.string());
    if (get<std::uint32_t>(in, path) != kCheckpointVersion)
        throw DataError("checkpoint version unsupported: " + path.string());

    MilModel model;
    model.kind = static_cast<Aggregator>(get<std::uint32_t>(in, path));
    model.hidden = get<std::int32_t>(in, path);
    model.d = get<std::int32_t>(in, path);
    model.classes = get<std::int32_t>(in, path);
    TrainConfig cfg;
    cfg.hidden = model.hidden;
    cfg.aggregator = model.kind;
    cfg.epochs = get<std::int32_t>(in, path);
    cfg.batch_size = get<std::int32_t>(in, path);
    cfg.learning_rate = get<double>(in, path);
    cfg.alpha1 = get<std::int32_t>(in, path);
    cfg.alpha2 = get<std::int32_t>(in, path);
    cfg.use_tss = get<std::uint8_t>(in, path) != 0;
    cfg.seed = get<std::uint64_t>(in, path);
    model.theta = get_block(in, path);
    model.phi = get_block(in, path);
    model.psi = get_block(in, path);
    model.cls_w = get_block(in, path);
    model.cls_b = get_block(in, path);
    if (config) *config = cfg;
    return model;
}

}  // namespace clanet
