// Command-line front end: exposes the corpus generator, the selection /
// embedding stages, MIL training and the evaluation protocols as
// subcommands, with layered configuration (file < environment < flags).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "clanet/archive.hpp"
#include "clanet/config.hpp"
#include "clanet/image_io.hpp"
#include "clanet/synth.hpp"

using namespace clanet;

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string timestamp_tag() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&t));
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

DatasetManifest synth_corpus(const PipelineConfig& config, const std::filesystem::path& out_dir) {
    const auto classes = default_class_specs(config.synth_classes);
    const auto batches = default_batch_specs(config.synth_classes, config.synth_batches_per_class,
                                             config.synth_sequences_per_batch);
    SynthParams params;
    params.width = params.height = config.synth_image_size;
    Rng rng(config.seed);
    return generate_corpus(classes, batches, params, rng, out_dir);
}

std::unique_ptr<EmbeddingProvider> make_provider(const PipelineConfig& config,
                                                 const std::string& ssl_model_path) {
    if (config.provider == "descriptor")
        return std::make_unique<DescriptorProvider>(config.embed_d);
    if (config.provider == "ssl") {
        if (ssl_model_path.empty())
            throw DataError("embed: provider 'ssl' needs --model <checkpoint>");
        return std::make_unique<SslProvider>(load_ssl_checkpoint(ssl_model_path));
    }
    throw DataError("provider '" + config.provider + "' has no embedding network (use --in for archives)");
}

std::map<std::string, EmbeddingSequence> load_archives(const std::filesystem::path& dir) {
    std::map<std::string, EmbeddingSequence> out;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".clae") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        EmbeddingSequence seq = read_embedding_archive(file);
        const std::string id = seq.sequence_id;
        out.emplace(id, std::move(seq));
    }
    if (out.empty()) throw DataError("no .clae archives under " + dir.string());
    return out;
}

void write_archives(const std::map<std::string, EmbeddingSequence>& embeddings,
                    const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [id, seq] : embeddings) write_embedding_archive(seq, dir / (id + ".clae"));
}

std::vector<GrayImage> collect_patches(const DatasetManifest& manifest, const CcsParams& ccs,
                                       std::size_t cap) {
    std::vector<GrayImage> patches;
    for (const auto& record : manifest.sequences) {
        const ImageSequence images = load_sequence_images(manifest, record);
        for (const auto& img : images.frames) {
            const BinaryMask mask = segment(img, ccs.seg);
            for (auto& patch : select_patches(img, mask, ccs.k, ccs.patch_w, ccs.patch_h).patches) {
                patches.push_back(std::move(patch.pixels));
                if (patches.size() >= cap) return patches;
            }
        }
    }
    return patches;
}

GrayImage draw_boxes(GrayImage img, const std::vector<BBox>& boxes) {
    for (const auto& b : boxes) {
        for (int x = b.x; x < b.x + b.w; ++x) {
            img.at(x, b.y) = 255;
            img.at(x, b.y + b.h - 1) = 255;
        }
        for (int y = b.y; y < b.y + b.h; ++y) {
            img.at(b.x, y) = 255;
            img.at(b.x + b.w - 1, y) = 255;
        }
    }
    return img;
}

ExperimentConfig experiment_config(const PipelineConfig& config, bool with_baselines) {
    ExperimentConfig ec;
    ec.split = split_from_string(config.split);
    ec.replicates = config.replicates;
    ec.seed = config.seed;
    ec.mil = config.mil;
    ec.baseline = config.baseline;
    ec.methods.no_tss = with_baselines;
    ec.methods.majority = with_baselines;
    return ec;
}

std::string report_text(const ExperimentResult& result) {
    std::string text = "split: " + to_string(result.split) + "\n";
    char line[256];
    for (const auto& m : result.methods) {
        const auto& s = m.summary;
        std::snprintf(line, sizeof(line),
                      "%-14s seq acc %.4f +/- %.4f | seq f1 %.4f +/- %.4f | batch acc %.4f +/- %.4f "
                      "| batch f1 %.4f +/- %.4f\n",
                      m.method.c_str(), s.seq_mean.accuracy, s.seq_std.accuracy, s.seq_mean.f1,
                      s.seq_std.f1, s.batch_mean.accuracy, s.batch_std.accuracy, s.batch_mean.f1,
                      s.batch_std.f1);
        text += line;
    }
    return text;
}

// Truncation study over the clanet replicate models; natural and reverse
// orders at the reference fractions.
std::string truncation_csv(const DatasetManifest& manifest,
                           const std::map<std::string, EmbeddingSequence>& embeddings,
                           const ExperimentResult& result) {
    const std::vector<double> fractions = {0.25, 0.5, 0.75, 1.0};
    const int classes = static_cast<int>(manifest.classes.size());
    std::string csv = "order,fraction,replicate,seq_accuracy,seq_f1,batch_accuracy,batch_f1\n";
    char line[256];
    for (std::size_t r = 0; r < result.clanet_models.size(); ++r) {
        std::vector<const EmbeddingSequence*> test;
        std::vector<int> labels;
        std::vector<std::string> ids;
        for (const auto& id : result.splits[r].test_ids) {
            test.push_back(&embeddings.at(id));
            labels.push_back(manifest.class_of_sequence(manifest.sequence(id)));
            ids.push_back(id);
        }
        for (TruncationOrder order : {TruncationOrder::natural, TruncationOrder::reverse}) {
            const auto points = truncation_study(result.clanet_models[r], test, labels, ids, manifest,
                                                 classes, fractions, order);
            for (const auto& point : points) {
                std::snprintf(line, sizeof(line), "%s,%.2f,%zu,%.6f,%.6f,%.6f,%.6f\n",
                              order == TruncationOrder::natural ? "natural" : "reverse",
                              point.fraction, r, point.report.sequence.accuracy,
                              point.report.sequence.f1, point.report.batch.accuracy,
                              point.report.batch.f1);
                csv += line;
            }
        }
    }
    return csv;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-batch cell line identification pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // parent-level --seed/--threads/--config after subcommands

    // Layer 1+2+3: defaults, then config file, then environment. Flags bind
    // to the resolved values below, so parsed flags win.
    PipelineConfig config;
    try {
        for (int i = 1; i + 1 < argc; ++i)
            if (std::string(argv[i]) == "--config") apply_config_file(config, argv[i + 1]);
        apply_env(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    std::string config_path;
    app.add_option("--config", config_path, "config file (key value per line)");
    app.add_option("--threads", config.threads, "worker cap (0 = auto)");
    app.add_option("--seed", config.seed, "master seed");

    std::string manifest_path, out_path, report_path, model_path, in_dir, train_ids_path;
    bool overlays = false;
    bool with_stats = false;

    auto* synth_cmd = app.add_subcommand("synth-gen", "generate a synthetic brightfield corpus");
    synth_cmd->add_option("--classes", config.synth_classes);
    synth_cmd->add_option("--batches-per-class", config.synth_batches_per_class);
    synth_cmd->add_option("--sequences-per-batch", config.synth_sequences_per_batch);
    synth_cmd->add_option("--image-size", config.synth_image_size);
    synth_cmd->add_option("--out", out_path)->required();
    synth_cmd->add_flag("--stats", with_stats, "also write corpus_stats.csv (confluency curves)");

    auto* segment_cmd = app.add_subcommand("segment", "write foreground masks for every frame");
    segment_cmd->add_option("--manifest", manifest_path)->required();
    segment_cmd->add_option("--out", out_path)->required();
    segment_cmd->add_option("--window", config.ccs.seg.window);
    segment_cmd->add_option("--close-iterations", config.ccs.seg.close_iterations);
    segment_cmd->add_option("--min-area", config.ccs.seg.min_area);

    auto* select_cmd = app.add_subcommand("select-patches", "cell cluster-level patch selection");
    select_cmd->add_option("--manifest", manifest_path)->required();
    select_cmd->add_option("--out", out_path)->required();
    select_cmd->add_option("--k", config.ccs.k);
    select_cmd->add_option("--patch-size", config.ccs.patch_w);
    select_cmd->add_flag("--overlays", overlays, "write box overlays per frame");
    select_cmd->add_option("--window", config.ccs.seg.window);
    select_cmd->add_option("--min-area", config.ccs.seg.min_area);

    auto* embed_cmd = app.add_subcommand("embed", "patch embeddings as .clae archives");
    embed_cmd->add_option("--manifest", manifest_path);
    embed_cmd->add_option("--out", out_path)->required();
    embed_cmd->add_option("--provider", config.provider, "descriptor | ssl | archive");
    embed_cmd->add_option("--d", config.embed_d);
    embed_cmd->add_option("--model", model_path, "ssl checkpoint (provider ssl)");
    embed_cmd->add_option("--in", in_dir, "existing archives (provider archive)");
    embed_cmd->add_option("--k", config.ccs.k);
    embed_cmd->add_option("--patch-size", config.ccs.patch_w);

    auto* ssl_cmd = app.add_subcommand("train-ssl", "toy self-distillation embedding trainer");
    ssl_cmd->add_option("--manifest", manifest_path)->required();
    ssl_cmd->add_option("--out", out_path)->required();
    ssl_cmd->add_option("--epochs", config.ssl.epochs);
    ssl_cmd->add_option("--lr", config.ssl.learning_rate);
    ssl_cmd->add_option("--out-dim", config.ssl.out_dim);
    ssl_cmd->add_option("--hidden", config.ssl.hidden);
    ssl_cmd->add_option("--lambda", config.ssl.lambda);
    std::size_t ssl_max_patches = 2000;
    ssl_cmd->add_option("--patch-cap", ssl_max_patches, "training patch cap");

    auto* mil_cmd = app.add_subcommand("train-mil", "train the MIL head on embedding archives");
    mil_cmd->add_option("--manifest", manifest_path)->required();
    mil_cmd->add_option("--embeddings", in_dir)->required();
    mil_cmd->add_option("--out", out_path)->required();
    mil_cmd->add_option("--epochs", config.mil.epochs);
    mil_cmd->add_option("--batch", config.mil.batch_size);
    mil_cmd->add_option("--lr", config.mil.learning_rate);
    mil_cmd->add_option("--alpha1", config.mil.alpha1);
    mil_cmd->add_option("--alpha2", config.mil.alpha2);
    mil_cmd->add_option("--hidden", config.mil.hidden);
    std::string aggregator_name = to_string(config.mil.aggregator);
    mil_cmd->add_option("--aggregator", aggregator_name, "gated | max | avg");
    bool no_tss = false;
    mil_cmd->add_flag("--no-tss", no_tss, "train on full sequences every epoch");
    mil_cmd->add_option("--train-ids", train_ids_path, "file of sequence ids (default: all)");

    auto* eval_cmd = app.add_subcommand("evaluate", "replicated split evaluation with baselines");
    eval_cmd->add_option("--manifest", manifest_path)->required();
    eval_cmd->add_option("--embeddings", in_dir)->required();
    eval_cmd->add_option("--split", config.split, "separated | stratified");
    eval_cmd->add_option("--replicates", config.replicates);
    eval_cmd->add_option("--report", report_path)->required();
    eval_cmd->add_option("--epochs", config.mil.epochs);
    eval_cmd->add_option("--batch", config.mil.batch_size);
    eval_cmd->add_option("--lr", config.mil.learning_rate);
    eval_cmd->add_option("--hidden", config.mil.hidden);
    eval_cmd->add_option("--baseline-epochs", config.baseline.epochs);

    auto* trunc_cmd = app.add_subcommand("truncation-study",
                                         "accuracy vs utilized sequence length (both orders)");
    trunc_cmd->add_option("--manifest", manifest_path)->required();
    trunc_cmd->add_option("--embeddings", in_dir)->required();
    trunc_cmd->add_option("--out", out_path)->required();
    trunc_cmd->add_option("--split", config.split);
    trunc_cmd->add_option("--replicates", config.replicates);
    trunc_cmd->add_option("--epochs", config.mil.epochs);
    trunc_cmd->add_option("--batch", config.mil.batch_size);
    trunc_cmd->add_option("--lr", config.mil.learning_rate);
    trunc_cmd->add_option("--hidden", config.mil.hidden);

    auto* pipe_cmd = app.add_subcommand("pipeline", "synth/ingest -> ccs -> embed -> train -> evaluate");
    pipe_cmd->add_option("--manifest", manifest_path, "ingest an existing corpus instead of synth");
    pipe_cmd->add_option("--out", out_path, "run directory (default run-<time>-<seed>)");
    pipe_cmd->add_option("--classes", config.synth_classes);
    pipe_cmd->add_option("--batches-per-class", config.synth_batches_per_class);
    pipe_cmd->add_option("--sequences-per-batch", config.synth_sequences_per_batch);
    pipe_cmd->add_option("--image-size", config.synth_image_size);
    pipe_cmd->add_option("--k", config.ccs.k);
    pipe_cmd->add_option("--patch-size", config.ccs.patch_w);
    pipe_cmd->add_option("--d", config.embed_d);
    pipe_cmd->add_option("--split", config.split);
    pipe_cmd->add_option("--replicates", config.replicates);
    pipe_cmd->add_option("--epochs", config.mil.epochs);
    pipe_cmd->add_option("--batch", config.mil.batch_size);
    pipe_cmd->add_option("--lr", config.mil.learning_rate);
    pipe_cmd->add_option("--hidden", config.mil.hidden);
    pipe_cmd->add_option("--baseline-epochs", config.baseline.epochs);
    bool with_truncation = false;
    pipe_cmd->add_flag("--truncation", with_truncation, "also run the truncation study");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems exit 2, --help exits 0
    }

    try {
        config.ccs.patch_h = config.ccs.patch_w;
        config.mil.seed = config.seed;
        const int threads = resolve_threads(config.threads);

        if (*synth_cmd) {
            const DatasetManifest manifest = synth_corpus(config, out_path);
            std::cout << "corpus: " << manifest.classes.size() << " classes, "
                      << manifest.batches.size() << " batches, " << manifest.sequences.size()
                      << " sequences -> " << out_path << "\n";
            if (with_stats)
                write_text(std::filesystem::path(out_path) / "corpus_stats.csv",
                           corpus_stats(manifest, config.ccs.seg).to_csv());
        } else if (*segment_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            std::filesystem::create_directories(out_path);
            for (const auto& record : manifest.sequences) {
                const ImageSequence images = load_sequence_images(manifest, record);
                for (std::size_t n = 0; n < images.frames.size(); ++n) {
                    const BinaryMask mask = segment(images.frames[n], config.ccs.seg);
                    GrayImage img(mask.width, mask.height);
                    for (std::size_t i = 0; i < mask.bits.size(); ++i)
                        img.pixels[i] = mask.bits[i] ? 255 : 0;
                    char name[128];
                    std::snprintf(name, sizeof(name), "%s_f%04zu_mask.pgm",
                                  record.sequence_id.c_str(), n);
                    write_image(img, std::filesystem::path(out_path) / name);
                }
            }
            std::cout << "masks -> " << out_path << "\n";
        } else if (*select_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            std::filesystem::create_directories(out_path);
            std::size_t total = 0;
            for (const auto& record : manifest.sequences) {
                const ImageSequence images = load_sequence_images(manifest, record);
                for (std::size_t n = 0; n < images.frames.size(); ++n) {
                    const BinaryMask mask = segment(images.frames[n], config.ccs.seg);
                    const PatchSet set = select_patches(images.frames[n], mask, config.ccs.k,
                                                        config.ccs.patch_w, config.ccs.patch_h);
                    char name[160];
                    for (std::size_t p = 0; p < set.patches.size(); ++p) {
                        std::snprintf(name, sizeof(name), "%s_f%04zu_p%02zu.pgm",
                                      record.sequence_id.c_str(), n, p);
                        write_image(set.patches[p].pixels, std::filesystem::path(out_path) / name);
                        ++total;
                    }
                    if (overlays) {
                        std::vector<BBox> boxes;
                        for (const auto& p : set.patches) boxes.push_back(p.source);
                        std::snprintf(name, sizeof(name), "%s_f%04zu_overlay.pgm",
                                      record.sequence_id.c_str(), n);
                        write_image(draw_boxes(images.frames[n], boxes),
                                    std::filesystem::path(out_path) / name);
                    }
                }
            }
            std::cout << total << " patches -> " << out_path << "\n";
        } else if (*embed_cmd) {
            if (config.provider == "archive") {
                if (in_dir.empty()) throw DataError("embed: provider 'archive' needs --in <dir>");
                write_archives(load_archives(in_dir), out_path);  // validate + re-emit
            } else {
                if (manifest_path.empty()) throw DataError("embed: need --manifest");
                const DatasetManifest manifest = load_manifest(manifest_path);
                const auto provider = make_provider(config, model_path);
                const auto embeddings = embed_corpus(manifest, config.ccs, *provider, threads);
                write_archives(embeddings, out_path);
            }
            std::cout << "embeddings -> " << out_path << "\n";
        } else if (*ssl_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            const auto patches = collect_patches(manifest, config.ccs, ssl_max_patches);
            if (patches.empty()) throw DataError("train-ssl: no patches found in the corpus");
            Rng rng(config.seed);
            const SslModel model = train_ssl(patches, config.ssl, rng);
            save_ssl_checkpoint(model, out_path);
            std::cout << "ssl model (" << patches.size() << " patches, final loss "
                      << model.epoch_loss.back() << ") -> " << out_path << "\n";
        } else if (*mil_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            const auto embeddings = load_archives(in_dir);
            config.mil.aggregator = aggregator_from_string(aggregator_name);
            config.mil.use_tss = !no_tss;

            std::vector<std::string> ids;
            if (!train_ids_path.empty()) {
                std::ifstream in(train_ids_path);
                if (!in) throw DataError("cannot open " + train_ids_path);
                std::string line;
                while (std::getline(in, line))
                    if (!line.empty()) ids.push_back(line);
            } else {
                for (const auto& [id, seq] : embeddings) ids.push_back(id);
            }
            std::vector<const EmbeddingSequence*> train;
            std::vector<int> labels;
            for (const auto& id : ids) {
                train.push_back(&embeddings.at(id));
                labels.push_back(manifest.class_of_sequence(manifest.sequence(id)));
            }
            const TrainResult result =
                train_mil(train, labels, static_cast<int>(manifest.classes.size()), config.mil);
            save_mil_checkpoint(result.model, config.mil, out_path);
            std::cout << "mil model (" << train.size() << " bags, final loss "
                      << result.epoch_loss.back() << ") -> " << out_path << "\n";
        } else if (*eval_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            const auto embeddings = load_archives(in_dir);
            const ExperimentResult result =
                run_experiment(manifest, embeddings, experiment_config(config, true));
            write_text(report_path, metrics_csv({&result}));
            std::cout << report_text(result);
        } else if (*trunc_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            const auto embeddings = load_archives(in_dir);
            ExperimentConfig ec = experiment_config(config, false);
            const ExperimentResult result = run_experiment(manifest, embeddings, ec);
            write_text(out_path, truncation_csv(manifest, embeddings, result));
            std::cout << "truncation study -> " << out_path << "\n";
        } else if (*pipe_cmd) {
            const std::filesystem::path run_dir =
                out_path.empty()
                    ? std::filesystem::path("run-" + timestamp_tag() + "-" + std::to_string(config.seed))
                    : std::filesystem::path(out_path);
            std::filesystem::create_directories(run_dir);
            write_text(run_dir / "config", config_snapshot(config));
            std::string log;

            const DatasetManifest manifest = manifest_path.empty()
                                                 ? synth_corpus(config, run_dir / "corpus")
                                                 : load_manifest(manifest_path);
            log += "corpus: " + std::to_string(manifest.sequences.size()) + " sequences\n";

            const DescriptorProvider provider(config.embed_d);
            const auto embeddings = embed_corpus(manifest, config.ccs, provider, threads);
            write_archives(embeddings, run_dir / "embeddings");
            log += "embedded: " + std::to_string(embeddings.size()) + " archives\n";

            const ExperimentResult result =
                run_experiment(manifest, embeddings, experiment_config(config, true));
            write_text(run_dir / "metrics.csv", metrics_csv({&result}));
            std::filesystem::create_directories(run_dir / "models");
            for (std::size_t r = 0; r < result.clanet_models.size(); ++r)
                save_mil_checkpoint(result.clanet_models[r], config.mil,
                                    run_dir / "models" / ("clanet_r" + std::to_string(r) + ".bin"));
            log += report_text(result);

            if (with_truncation) {
                write_text(run_dir / "truncation.csv", truncation_csv(manifest, embeddings, result));
                log += "truncation study written\n";
            }
            write_text(run_dir / "logs", log);
            std::cout << log << "run -> " << run_dir.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
