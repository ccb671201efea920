// Exercises the installed binary end to end through a shell: usage errors,
// subcommand plumbing, and the repeated-run determinism contract at a tiny
// scale. Takes the binary path as argv[1].

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what.c_str());
    if (!ok) ++failures;
}

int run(const std::string& command) {
    const int status = std::system((command + " > /dev/null 2>&1").c_str());
    return status < 0 ? status : WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <clanet binary>\n";
        return 1;
    }
    const std::string bin = argv[1];
    const std::filesystem::path dir = "test_tmp/cli";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    check(run(bin + " --help") == 0, "--help exits 0");
    check(run(bin + " pipeline --help") == 0, "subcommand --help exits 0");
    check(run(bin + " --definitely-not-a-flag") == 2, "unknown flag exits 2");
    check(run(bin + " frobnicate") == 2, "unknown subcommand exits 2");
    check(run(bin + " evaluate --manifest missing.txt --embeddings nowhere --report r.csv") == 1,
          "runtime failure exits 1");

    // Tiny corpus end to end: generate, segment, select, embed, train, evaluate.
    const std::string corpus = (dir / "corpus").string();
    check(run(bin + " synth-gen --classes 2 --batches-per-class 2 --sequences-per-batch 2"
                    " --image-size 128 --seed 11 --out " + corpus) == 0,
          "synth-gen runs");
    const std::string manifest = corpus + "/manifest.txt";
    check(std::filesystem::exists(manifest), "synth-gen writes a manifest");

    check(run(bin + " select-patches --manifest " + manifest + " --out " + (dir / "patches").string() +
              " --k 3 --patch-size 64 --overlays") == 0,
          "select-patches runs");
    bool overlay_found = false;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "patches"))
        overlay_found = overlay_found || entry.path().string().find("overlay") != std::string::npos;
    check(overlay_found, "select-patches writes overlays");

    const std::string embeddings = (dir / "embeddings").string();
    check(run(bin + " embed --manifest " + manifest + " --out " + embeddings +
              " --provider descriptor --d 64 --k 3 --patch-size 64") == 0,
          "embed runs");

    check(run(bin + " embed --in " + embeddings + " --out " + (dir / "embeddings2").string() +
              " --provider archive") == 0,
          "archive pass-through runs");

    check(run(bin + " train-mil --manifest " + manifest + " --embeddings " + embeddings +
              " --out " + (dir / "model.bin").string() + " --epochs 3 --batch 4 --hidden 8"
              " --seed 5") == 0,
          "train-mil runs");
    check(std::filesystem::exists(dir / "model.bin"), "train-mil writes a checkpoint");

    check(run(bin + " evaluate --manifest " + manifest + " --embeddings " + embeddings +
              " --split stratified --replicates 2 --report " + (dir / "report.csv").string() +
              " --epochs 3 --hidden 8 --baseline-epochs 10 --seed 5") == 0,
          "evaluate runs");
    check(slurp(dir / "report.csv").find("clanet,stratified") != std::string::npos,
          "evaluate report has table rows");

    check(run(bin + " train-ssl --manifest " + manifest + " --out " + (dir / "ssl.bin").string() +
              " --epochs 1 --patch-cap 24 --hidden 16 --out-dim 8 --seed 5") == 0,
          "train-ssl runs");
    check(run(bin + " embed --manifest " + manifest + " --out " + (dir / "embeddings_ssl").string() +
              " --provider ssl --model " + (dir / "ssl.bin").string() + " --k 2 --patch-size 64") == 0,
          "embed with the ssl provider runs");

    // Determinism: two pipeline runs with one seed produce byte-identical
    // metrics and checkpoints.
    const std::string run_a = (dir / "run_a").string();
    const std::string run_b = (dir / "run_b").string();
    const std::string pipeline_flags =
        " pipeline --classes 2 --batches-per-class 2 --sequences-per-batch 2 --image-size 128"
        " --patch-size 64 --k 3 --d 64 --split separated --replicates 1 --epochs 4 --hidden 8"
        " --baseline-epochs 10 --seed 7 --out ";
    check(run(bin + pipeline_flags + run_a) == 0, "pipeline run A");
    check(run(bin + pipeline_flags + run_b) == 0, "pipeline run B");
    check(!slurp(run_a + "/metrics.csv").empty(), "pipeline writes metrics.csv");
    check(slurp(run_a + "/metrics.csv") == slurp(run_b + "/metrics.csv"),
          "metrics.csv is byte-identical across runs");
    check(slurp(run_a + "/models/clanet_r0.bin") == slurp(run_b + "/models/clanet_r0.bin"),
          "checkpoint is byte-identical across runs");
    check(!slurp(run_a + "/config").empty(), "pipeline writes a config snapshot");

    // The snapshot replays the run: pointing --config at it must be accepted.
    check(run(bin + " --config " + run_a + "/config synth-gen --out " + (dir / "replay").string()) == 0,
          "config snapshot is readable as a config file");

    if (failures) {
        std::printf("%d cli checks failed\n", failures);
        return 1;
    }
    std::printf("all cli checks passed\n");
    return 0;
}
