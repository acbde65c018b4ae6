// Command-line driver: victim capture, attack run, text attack, metrics
// eval, experiment run. Exit codes: 0 success, 1 config/usage error,
// 2 runtime abort.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "gradleak/attack.hpp"
#include "gradleak/experiment.hpp"
#include "gradleak/image_io.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/patterns.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/text.hpp"

using namespace gradleak;

namespace {

nlohmann::json json_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

struct ModelFlags {
    std::string arch = "lenet_lite";
    std::vector<int64_t> widths = {64, 32, 4};
    int64_t in_channels = 1, channels = 12, image_hw = 8;
    int64_t vocab_size = 100, embed_dim = 16, heads = 4, ff_dim = 32, seq_len = 8, blocks = 1;
    std::string activation = "sigmoid";
    int64_t classes = 4;

    void attach(CLI::App* cmd) {
        cmd->add_option("--arch", arch, "mlp | lenet_lite | transformer_lite")
            ->check(CLI::IsMember({"mlp", "lenet_lite", "transformer_lite"}));
        cmd->add_option("--widths", widths, "mlp layer widths incl. input/output");
        cmd->add_option("--in-channels", in_channels);
        cmd->add_option("--channels", channels);
        cmd->add_option("--image-hw", image_hw);
        cmd->add_option("--vocab-size", vocab_size);
        cmd->add_option("--embed-dim", embed_dim);
        cmd->add_option("--heads", heads);
        cmd->add_option("--ff-dim", ff_dim);
        cmd->add_option("--seq-len", seq_len);
        cmd->add_option("--blocks", blocks, "transformer encoder blocks (0 or 1)");
        cmd->add_option("--activation", activation)->check(CLI::IsMember({"sigmoid", "gelu"}));
        cmd->add_option("--classes", classes);
    }

    ModelSpec build() const {
        ModelSpec spec;
        if (arch == "mlp") {
            spec.arch = MlpSpec{widths};
        } else if (arch == "lenet_lite") {
            spec.arch = LenetLiteSpec{in_channels, channels, image_hw};
        } else {
            TransformerLiteSpec t;
            t.vocab_size = vocab_size;
            t.embed_dim = embed_dim;
            t.heads = heads;
            t.ff_dim = ff_dim;
            t.seq_len = seq_len;
            t.blocks = blocks;
            spec.arch = t;
        }
        spec.activation = activation == "gelu" ? Activation::gelu : Activation::sigmoid;
        spec.num_classes = classes;
        spec.validate();
        return spec;
    }
};

struct InitFlags {
    std::string scheme = "uniform";
    double lo = -0.5, hi = 0.5, gain = 1.0;
    uint64_t weight_seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--init", scheme, "uniform | xavier_normal")
            ->check(CLI::IsMember({"uniform", "xavier_normal"}));
        cmd->add_option("--lo", lo);
        cmd->add_option("--hi", hi);
        cmd->add_option("--gain", gain);
        cmd->add_option("--weight-seed", weight_seed);
    }

    WeightInit build() const {
        WeightInit w;
        w.scheme = scheme == "uniform" ? WeightInit::Scheme::uniform
                                       : WeightInit::Scheme::xavier_normal;
        w.lo = lo;
        w.hi = hi;
        w.gain = gain;
        w.seed = weight_seed;
        w.validate();
        return w;
    }
};

struct AttackFlags {
    std::string distance = "sapag";
    std::string optimizer = "lbfgs_lite";
    std::string dummy_init = "normal";
    std::string sigma_mode = "per_layer_scaled";
    std::string q_schedule = "harmonic";
    double constant_value = 0.5, gamma = 0.5, sigma_floor = 1e-8, stop_tol = 1e-10;
    double lr = -1.0;
    int64_t max_iters = -1, log_every = 10;

    void attach(CLI::App* cmd) {
        cmd->add_option("--distance", distance, "sapag | dlg")
            ->check(CLI::IsMember({"sapag", "dlg", "euclidean"}));
        cmd->add_option("--optimizer", optimizer)
            ->check(CLI::IsMember({"adamw", "adam", "lbfgs_lite", "lbfgs"}));
        cmd->add_option("--dummy-init", dummy_init)->check(CLI::IsMember({"normal", "constant"}));
        cmd->add_option("--constant-value", constant_value);
        cmd->add_option("--sigma-mode", sigma_mode)
            ->check(CLI::IsMember({"per_layer", "global", "per_layer_scaled"}));
        cmd->add_option("--q-schedule", q_schedule)
            ->check(CLI::IsMember({"constant", "harmonic", "geometric"}));
        cmd->add_option("--gamma", gamma);
        cmd->add_option("--sigma-floor", sigma_floor);
        cmd->add_option("--lr", lr, "optimizer learning rate (per-optimizer default if unset)");
        cmd->add_option("--iters", max_iters, "max iterations (500 lbfgs / 20000 adam default)");
        cmd->add_option("--log-every", log_every);
        cmd->add_option("--stop-tol", stop_tol);
    }

    AttackConfig build(uint64_t seed) const {
        AttackConfig cfg;
        cfg.distance_kind = distance_kind_from_name(distance);
        cfg.optimizer = optimizer_from_name(optimizer);
        cfg.dummy_init = dummy_init_from_name(dummy_init);
        cfg.constant_value = constant_value;
        cfg.sigma_mode = sigma_mode_from_name(sigma_mode);
        cfg.q_schedule = q_schedule_from_name(q_schedule);
        cfg.gamma = gamma;
        cfg.sigma_floor = sigma_floor;
        cfg.stop_tol = stop_tol;
        cfg.log_every = log_every;
        if (lr > 0) cfg.lr = lr;
        if (max_iters > 0) cfg.max_iters = max_iters;
        cfg.seed = seed;
        return cfg;
    }
};

void write_trace(const std::filesystem::path& path, const ReconstructionResult& r) {
    std::ofstream f(path);
    bool with_mse = !r.loss_trace.empty() && r.loss_trace.front().mse_vs_truth.has_value();
    f << "iter,distance" << (with_mse ? ",mse_vs_truth" : "") << "\n";
    for (const auto& tp : r.loss_trace) {
        f << tp.iter << "," << tp.distance;
        if (with_mse) f << "," << tp.mse_vs_truth.value_or(0.0);
        f << "\n";
    }
}

void write_image_batch(const std::filesystem::path& dir, const std::string& stem,
                       const Tensor& batch) {
    int64_t b = batch.dim(0);
    int64_t per = batch.numel() / b;
    Shape item_shape(batch.shape().begin() + 1, batch.shape().end());
    auto p = batch.data();
    for (int64_t i = 0; i < b; ++i) {
        Tensor item = Tensor::from_data(
            item_shape, std::vector<double>(p.begin() + static_cast<ptrdiff_t>(i * per),
                                            p.begin() + static_cast<ptrdiff_t>((i + 1) * per)));
        std::string ext = (item.ndim() == 3 && item.dim(0) == 3) ? ".ppm" : ".pgm";
        std::string name = b == 1 ? stem + ext : stem + "_" + std::to_string(i) + ext;
        save_image(dir / name, item);
    }
}

nlohmann::json metric_json(const MetricReport& m) {
    nlohmann::json j;
    j["mse"] = json_double(m.mse);
    j["psnr_db"] = json_double(m.psnr);
    j["ssim"] = json_double(m.ssim);
    j["assignment"] = m.assignment;
    return j;
}

int threads_from(int cli_threads) {
    if (cli_threads > 0) return cli_threads;
    if (const char* env = std::getenv("GRADLEAK_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient inversion attack toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    uint64_t seed = 0;
    std::string out = "out";
    int threads = 0;
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out, "output file or directory");
    app.add_option("--threads", threads, "worker threads (GRADLEAK_THREADS fallback)");

    // ---- victim capture ----
    auto* victim = app.add_subcommand("victim", "victim-side operations");
    auto* vcap = victim->add_subcommand("capture", "train optionally, then capture gradients");
    ModelFlags vmodel;
    InitFlags vinit;
    vmodel.attach(vcap);
    vinit.attach(vcap);
    std::string data_kind = "mixed";
    int64_t data_size = 8, per_class = 4, batch = 1, pick = 0, epochs = 0;
    double train_lr = 0.01;
    std::string image_path, weights_out = "weights.bin";
    int64_t image_label = 0;
    vcap->add_option("--data-kind", data_kind, "builtin pattern set")
        ->check(CLI::IsMember({"stripes", "checkerboard", "disks", "gradients", "mixed"}));
    vcap->add_option("--data-size", data_size)->check(CLI::IsMember({4, 8, 16}));
    vcap->add_option("--per-class", per_class);
    vcap->add_option("--batch", batch, "victim batch size");
    vcap->add_option("--pick", pick, "index of the first item to capture");
    vcap->add_option("--image", image_path, "attack a PGM/PPM file instead of builtin data");
    vcap->add_option("--label", image_label, "class label for --image");
    vcap->add_option("--epochs", epochs, "victim training epochs before capture");
    vcap->add_option("--train-lr", train_lr);
    vcap->add_option("--weights-out", weights_out, "weight checkpoint path");

    // ---- attack run ----
    auto* attack = app.add_subcommand("attack", "gradient-matching attacks");
    auto* arun = attack->add_subcommand("run", "reconstruct data from a snapshot");
    AttackFlags aflags;
    aflags.attach(arun);
    std::string snapshot_path, weights_path, truth_path;
    arun->add_option("--snapshot", snapshot_path, "gradient snapshot file")->required();
    arun->add_option("--weights", weights_path, "weight checkpoint file")->required();
    arun->add_option("--truth", truth_path, "optional truth image for evaluation");

    // ---- text attack ----
    auto* text = app.add_subcommand("text", "text-model operations");
    auto* tattack = text->add_subcommand("attack", "embedding-space attack + token recovery");
    ModelFlags tmodel;
    tmodel.arch = "transformer_lite";
    tmodel.activation = "gelu";
    InitFlags tinit;
    AttackFlags tflags;
    tflags.optimizer = "adamw";
    tflags.lr = 0.01;
    tflags.max_iters = 4000;
    tmodel.attach(tattack);
    tinit.attach(tattack);
    tflags.attach(tattack);
    std::string vocab_file, tokens_csv;
    tattack->add_option("--vocab-file", vocab_file, "one token per line (index = line)");
    tattack->add_option("--tokens", tokens_csv, "comma-separated true token indices");

    // ---- metrics eval ----
    auto* metrics_cmd = app.add_subcommand("metrics", "reconstruction metrics");
    auto* meval = metrics_cmd->add_subcommand("eval", "score recon images against truth");
    std::vector<std::string> recon_files, truth_files;
    meval->add_option("--recon", recon_files, "reconstructed image(s)")->required();
    meval->add_option("--truth", truth_files, "ground-truth image(s)")->required();

    // ---- experiment run ----
    auto* experiment = app.add_subcommand("experiment", "batch experiments");
    auto* erun = experiment->add_subcommand("run", "run a config-driven grid");
    std::string config_path;
    erun->add_option("--config", config_path, "JSON experiment config")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (vcap->parsed()) {
            ModelSpec spec = vmodel.build();
            WeightInit winit = vinit.build();
            if (winit.seed == 0) winit.seed = derive_seed(seed, "weights", 0);
            auto weights = init_weights(spec, winit);

            Tensor x, y;
            if (!image_path.empty()) {
                Tensor img = load_image(image_path);
                Shape bshape = img.shape();
                bshape.insert(bshape.begin(), 1);
                x = reshape(img, bshape);
                std::vector<double> yd(static_cast<size_t>(spec.num_classes), 0.0);
                yd[static_cast<size_t>(image_label % spec.num_classes)] = 1.0;
                y = Tensor::from_data({1, spec.num_classes}, std::move(yd));
            } else {
                PatternDataset ds = builtin_patterns(pattern_kind_from_name(data_kind), data_size,
                                                     per_class, derive_seed(seed, "data", 0));
                if (epochs > 0) {
                    TrainResult tr = train(spec, weights, ds.data(), epochs, train_lr);
                    weights = std::move(tr.weights);
                }
                x = ds.image_batch(pick, batch);
                y = ds.label_batch(pick, batch);
            }
            GradientSnapshot snap = capture(spec, weights, x, y, seed, epochs);
            save_snapshot(out, snap);
            save_weights(weights_out, spec, weights);
            std::cout << "snapshot: " << out << " (" << snap.layer_grads.size()
                      << " layers, checksum " << snap.weight_checksum << ")\nweights: "
                      << weights_out << "\n";
        } else if (arun->parsed()) {
            GradientSnapshot snap = load_snapshot(snapshot_path);
            auto [spec, weights] = load_weights(weights_path);
            AttackConfig cfg = aflags.build(seed);

            Tensor truth;
            const Tensor* truth_ptr = nullptr;
            if (!truth_path.empty()) {
                Tensor img = load_image(truth_path);
                Shape bshape = img.shape();
                bshape.insert(bshape.begin(), 1);
                truth = reshape(img, bshape);
                truth_ptr = &truth;
            }
            ReconstructionResult res = run_attack(spec, weights, snap, cfg, truth_ptr);
            std::filesystem::create_directories(out);
            write_trace(std::filesystem::path(out) / "trace.csv", res);
            write_image_batch(out, "recon", res.x_recon);

            nlohmann::json rj;
            rj["model"] = model_spec_to_json(spec);
            rj["attack"] = attack_config_to_json(cfg);
            rj["best_distance"] = json_double(res.best_distance);
            rj["best_iter"] = res.best_iter;
            rj["iters_run"] = res.iters_run;
            rj["predicted_labels"] = res.predicted_labels;
            rj["wall_seconds"] = res.wall_seconds;
            rj["aborted"] = res.aborted;
            if (res.aborted) rj["abort_reason"] = res.abort_reason;
            if (truth_ptr) {
                MetricReport m = match_batch(res.x_recon, truth);
                rj["metrics"] = metric_json(m);
                std::ofstream mf(std::filesystem::path(out) / "metrics.json");
                mf << metric_json(m).dump(2) << "\n";
            }
            std::ofstream rf(std::filesystem::path(out) / "result.json");
            rf << rj.dump(2) << "\n";
            std::cout << "best distance " << res.best_distance << " after " << res.iters_run
                      << " iterations; artifacts in " << out << "\n";
            if (res.aborted) return 2;
        } else if (tattack->parsed()) {
            ModelSpec spec = tmodel.build();
            const auto& tspec = std::get<TransformerLiteSpec>(spec.arch);
            WeightInit winit = tinit.build();
            if (winit.seed == 0) winit.seed = derive_seed(seed, "weights", 0);
            auto weights = init_weights(spec, winit);
            Vocabulary vocab =
                vocab_file.empty()
                    ? synthetic_vocabulary(tspec.vocab_size, tspec.embed_dim,
                                           derive_seed(seed, "vocab", 0))
                    : load_vocabulary(vocab_file, tspec.embed_dim, derive_seed(seed, "vocab", 0));

            std::vector<int64_t> tokens;
            if (!tokens_csv.empty()) {
                std::stringstream ss(tokens_csv);
                std::string item;
                while (std::getline(ss, item, ',')) tokens.push_back(std::stoll(item));
            } else {
                Rng rng(derive_seed(seed, "tokens", 0));
                for (int64_t i = 0; i < tspec.seq_len; ++i)
                    tokens.push_back(static_cast<int64_t>(rng.next_u64() %
                                                          static_cast<uint64_t>(vocab.size())));
            }
            if (static_cast<int64_t>(tokens.size()) != tspec.seq_len)
                throw ConfigError("--tokens must list exactly seq_len indices");

            int64_t cls = 0;
            for (int64_t t : tokens) cls += t;
            std::vector<double> yd(static_cast<size_t>(spec.num_classes), 0.0);
            yd[static_cast<size_t>(cls % spec.num_classes)] = 1.0;
            Tensor y = Tensor::from_data({1, spec.num_classes}, std::move(yd));
            GradientSnapshot snap = capture(spec, weights, vocab.embed_sequence(tokens), y, seed);

            AttackConfig cfg = tflags.build(seed);
            TextReconstruction rec = run_text_attack(spec, weights, vocab, snap, cfg, &tokens);

            std::filesystem::create_directories(out);
            nlohmann::json tj;
            tj["positions"] = nlohmann::json::array();
            int matches = 0;
            for (size_t i = 0; i < rec.recovered_tokens.size(); ++i) {
                bool match = (*rec.match_mask)[i];
                matches += match;
                tj["positions"].push_back({{"recovered", rec.recovered_tokens[i]},
                                           {"truth", vocab.tokens[static_cast<size_t>(tokens[i])]},
                                           {"match", match}});
            }
            tj["matches"] = matches;
            tj["best_distance"] = json_double(rec.attack.best_distance);
            std::ofstream jf(std::filesystem::path(out) / "text_result.json");
            jf << tj.dump(2) << "\n";

            std::ofstream tf(std::filesystem::path(out) / "text_result.txt");
            auto render = [&](std::ostream& os) {
                os << "recovered: ";
                for (size_t i = 0; i < rec.recovered_tokens.size(); ++i)
                    os << ((*rec.match_mask)[i] ? "**" + rec.recovered_tokens[i] + "**"
                                                : rec.recovered_tokens[i])
                       << " ";
                os << "\ntruth:     ";
                for (int64_t t : tokens) os << vocab.tokens[static_cast<size_t>(t)] << " ";
                os << "\nmatches:   " << matches << "/" << tokens.size() << "\n";
            };
            render(tf);
            render(std::cout);
            if (rec.attack.aborted) return 2;
        } else if (meval->parsed()) {
            if (recon_files.size() != truth_files.size())
                throw ConfigError("--recon and --truth must list the same number of images");
            std::vector<double> rd, td;
            Shape item_shape;
            for (size_t i = 0; i < recon_files.size(); ++i) {
                Tensor r = load_image(recon_files[i]);
                Tensor t = load_image(truth_files[i]);
                if (!r.same_shape(t)) throw ConfigError("recon/truth shapes differ");
                if (item_shape.empty()) item_shape = r.shape();
                rd.insert(rd.end(), r.data().begin(), r.data().end());
                td.insert(td.end(), t.data().begin(), t.data().end());
            }
            Shape bshape = item_shape;
            bshape.insert(bshape.begin(), static_cast<int64_t>(recon_files.size()));
            MetricReport m = match_batch(Tensor::from_data(bshape, std::move(rd)),
                                         Tensor::from_data(bshape, std::move(td)));
            nlohmann::json j = metric_json(m);
            if (out != "out") {
                std::ofstream f(out);
                f << j.dump(2) << "\n";
            }
            std::cout << j.dump(2) << "\n";
        } else if (erun->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path);
            if (out != "out") cfg.out_dir = out;
            if (seed != 0) cfg.master_seed = seed;
            cfg.threads = threads_from(threads > 0 ? threads : cfg.threads);
            ExperimentResult res = run_experiment(cfg, std::cout);
            return res.exit_code;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
