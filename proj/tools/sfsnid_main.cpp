// sfsnid: nighttime image dehazing via spatial-frequency interaction.
//
// Subcommands cover the full workflow: synthesize a dataset, train the
// supervised stage, generate pseudo labels for the unlabeled split, retrain
// on the fused set, run inference, evaluate, and verify gradients.
// All outputs are deterministic functions of (--config, --seed, --out).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "sfsnid/gradsuite.hpp"
#include "sfsnid/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace sfsnid;

// The only environment variable the tool reads. Every computation is
// single-threaded by contract (results must be bitwise reproducible), so
// values above 1 are accepted but execute as 1.
int thread_count_from_env() {
    const char* raw = std::getenv("SFSNID_THREADS");
    if (!raw) return 1;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || n < 1)
        throw std::runtime_error("SFSNID_THREADS must be a positive integer, got '" + std::string(raw) + "'");
    return static_cast<int>(n);
}

Config load_effective_config(const std::string& config_path, std::uint64_t seed, bool seed_set) {
    Config cfg = load_config(config_path);
    if (seed_set) cfg.train.seed = seed;
    return cfg;
}

std::string default_under(const std::string& out_dir, const char* name) {
    return (fs::path(out_dir) / name).string();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sfsnid: nighttime dehazing workflow"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    auto add_common = [&](CLI::App* cmd, bool config_required = true) {
        auto* c = cmd->add_option("--config", config_path, "configuration file (INI sections)");
        if (config_required) c->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "override the [train] seed")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--out", out_dir, "output directory")->required();
    };

    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic nighttime-haze dataset");
    add_common(cmd_synth);

    std::string manifest_path, checkpoint_path, resume_path, image_path, output_name;
    std::string split = "synthetic";

    auto* cmd_train = app.add_subcommand("train", "supervised training on synthetic pairs");
    add_common(cmd_train);
    cmd_train->add_option("--manifest", manifest_path, "dataset manifest (default <out>/manifest.txt)");
    cmd_train->add_option("--resume", resume_path, "checkpoint to continue from")
        ->check(CLI::ExistingFile);

    auto* cmd_pseudo = app.add_subcommand("pseudo", "write pseudo labels for the unlabeled split");
    add_common(cmd_pseudo);
    cmd_pseudo->add_option("--manifest", manifest_path, "dataset manifest (default <out>/manifest.txt)");
    cmd_pseudo->add_option("--checkpoint", checkpoint_path,
                           "trained checkpoint (default <out>/checkpoint_supervised.ckpt)");

    auto* cmd_retrain = app.add_subcommand("retrain", "fusion retraining with the full objective");
    add_common(cmd_retrain);
    cmd_retrain->add_option("--manifest", manifest_path,
                            "manifest with pseudo labels (default <out>/manifest_pseudo.txt)");
    cmd_retrain->add_option("--checkpoint", checkpoint_path,
                            "stage-one checkpoint (default <out>/checkpoint_supervised.ckpt)");

    auto* cmd_infer = app.add_subcommand("infer", "dehaze one image");
    add_common(cmd_infer);
    cmd_infer->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
        ->required()->check(CLI::ExistingFile);
    cmd_infer->add_option("--image", image_path, "input image (.png or .ppm)")
        ->required()->check(CLI::ExistingFile);
    cmd_infer->add_option("--output", output_name,
                          "output file name (default dehazed_<input stem>.png)");

    auto* cmd_eval = app.add_subcommand("eval", "PSNR/SSIM/brightness report over a split");
    add_common(cmd_eval);
    cmd_eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
        ->required()->check(CLI::ExistingFile);
    cmd_eval->add_option("--manifest", manifest_path, "dataset manifest (default <out>/manifest.txt)");
    cmd_eval->add_option("--split", split, "synthetic or real")->capture_default_str();

    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(cmd_gradcheck, /*config_required=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        thread_count_from_env();
        fs::create_directories(out_dir);
        if (manifest_path.empty()) {
            manifest_path = cmd_retrain->parsed() ? default_under(out_dir, "manifest_pseudo.txt")
                                                  : default_under(out_dir, "manifest.txt");
        }
        if (checkpoint_path.empty())
            checkpoint_path = default_under(out_dir, "checkpoint_supervised.ckpt");

        if (cmd_synth->parsed()) {
            Config cfg = load_effective_config(config_path, seed, seed_set);
            DatasetManifest m = generate_dataset(cfg.data, cfg.train.seed, out_dir);
            std::printf("synth: %zu synthetic pairs, %zu unlabeled images -> %s\n",
                        m.synthetic_pairs.size(), m.real_hazy.size(),
                        default_under(out_dir, "manifest.txt").c_str());
        } else if (cmd_train->parsed()) {
            Config cfg = load_effective_config(config_path, seed, seed_set);
            DatasetManifest m = load_manifest(manifest_path);
            Checkpoint ck;
            if (!resume_path.empty()) {
                ck = load_checkpoint(resume_path, cfg.train);
                ck = train_supervised(m, cfg, out_dir, &ck);
            } else {
                ck = train_supervised(m, cfg, out_dir);
            }
            std::printf("train: %lld epochs, %lld steps -> %s\n", static_cast<long long>(ck.epoch),
                        static_cast<long long>(ck.step),
                        default_under(out_dir, "checkpoint_supervised.ckpt").c_str());
        } else if (cmd_pseudo->parsed()) {
            Config cfg = load_effective_config(config_path, seed, seed_set);
            DatasetManifest m = load_manifest(manifest_path);
            Checkpoint ck = load_checkpoint(checkpoint_path, cfg.train);
            DatasetManifest updated = generate_pseudo_labels(ck, m, out_dir);
            std::printf("pseudo: %zu labels -> %s\n", updated.pseudo_labels.size(),
                        default_under(out_dir, "manifest_pseudo.txt").c_str());
        } else if (cmd_retrain->parsed()) {
            Config cfg = load_effective_config(config_path, seed, seed_set);
            DatasetManifest m = load_manifest(manifest_path);
            Checkpoint ck = load_checkpoint(checkpoint_path, cfg.train);
            Checkpoint fused = retrain_fused(ck, m, cfg, out_dir);
            std::printf("retrain: %lld epochs, %lld steps -> %s\n",
                        static_cast<long long>(fused.epoch), static_cast<long long>(fused.step),
                        default_under(out_dir, "checkpoint_fused.ckpt").c_str());
        } else if (cmd_infer->parsed()) {
            Config cfg = load_effective_config(config_path, seed, seed_set);
            Checkpoint ck = load_checkpoint(checkpoint_path, cfg.train);
            Tensor img = load_image(image_path);
            Tensor out = infer_image(ck, img);
            if (output_name.empty())
                output_name = "dehazed_" + fs::path(image_path).stem().string() + ".png";
            const std::string out_path = default_under(out_dir, output_name.c_str());
            save_image(out, out_path);
            std::printf("infer: %s -> %s (mean brightness %.4f -> %.4f)\n", image_path.c_str(),
                        out_path.c_str(), mean_brightness(img), mean_brightness(out));
        } else if (cmd_eval->parsed()) {
            Config cfg = load_effective_config(config_path, seed, seed_set);
            Checkpoint ck = load_checkpoint(checkpoint_path, cfg.train);
            DatasetManifest m = load_manifest(manifest_path);
            EvalReport report = evaluate(ck, m, split);
            const std::string out_path = default_under(out_dir, ("eval_" + split + ".txt").c_str());
            write_eval_report(report, out_path);
            if (report.referenced > 0)
                std::printf("eval %s: %zu images, psnr %.4f ssim %.4f, mean brightness %.4f -> %.4f\n",
                            split.c_str(), report.records.size(), report.mean_psnr, report.mean_ssim,
                            report.mean_input, report.mean_pred);
            else
                std::printf("eval %s: %zu images (no references), mean brightness %.4f -> %.4f\n",
                            split.c_str(), report.records.size(), report.mean_input, report.mean_pred);
            std::printf("eval: report -> %s\n", out_path.c_str());
        } else if (cmd_gradcheck->parsed()) {
            std::vector<GradCheckReport> reports = run_gradient_suite();
            print_gradient_reports(reports, stdout);
            std::FILE* f = std::fopen(default_under(out_dir, "gradcheck.txt").c_str(), "w");
            if (f) {
                print_gradient_reports(reports, f);
                std::fclose(f);
            }
            if (!all_passed(reports)) return 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
