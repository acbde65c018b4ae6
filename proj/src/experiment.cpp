#include "gradleak/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <thread>

#include "gradleak/image_io.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/serialize.hpp"

namespace gradleak {

namespace {

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

nlohmann::json json_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

struct VictimInstance {
    std::vector<NamedTensor> weights;
    GradientSnapshot snapshot;
    Tensor truth_x;  // batch
    Tensor truth_y;
};

struct Dataset {
    Tensor images;  // N x C x H x W
    Tensor labels;  // N x classes
};

Dataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.data.source == DataSourceConfig::Source::builtin) {
        PatternDataset pd = builtin_patterns(cfg.data.kind, cfg.data.size, cfg.data.per_class,
                                             derive_seed(cfg.master_seed, "data", 0));
        if (pd.num_classes != cfg.model.num_classes)
            throw ConfigError("config.data: builtin patterns provide " +
                              std::to_string(pd.num_classes) + " classes but model expects " +
                              std::to_string(cfg.model.num_classes));
        return {pd.images, pd.labels};
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(cfg.data.directory)) {
        auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw ConfigError("config.data.path: no .pgm/.ppm files in " +
                          cfg.data.directory.string());
    std::vector<double> images;
    Shape item_shape;
    for (const auto& f : files) {
        Tensor img = load_image(f);
        if (item_shape.empty())
            item_shape = img.shape();
        else if (img.shape() != item_shape)
            throw ConfigError("config.data.path: image sizes differ (" + f.string() + ")");
        auto d = img.data();
        images.insert(images.end(), d.begin(), d.end());
    }
    int64_t n = static_cast<int64_t>(files.size());
    Shape batch_shape = item_shape;
    batch_shape.insert(batch_shape.begin(), n);
    // labels: round-robin over the model's classes
    std::vector<double> labels(static_cast<size_t>(n * cfg.model.num_classes), 0.0);
    for (int64_t i = 0; i < n; ++i)
        labels[static_cast<size_t>(i * cfg.model.num_classes + i % cfg.model.num_classes)] = 1.0;
    return {Tensor::from_data(batch_shape, std::move(images)),
            Tensor::from_data({n, cfg.model.num_classes}, std::move(labels))};
}

Tensor rows_slice(const Tensor& t, int64_t start, int64_t count) {
    int64_t per = t.numel() / t.dim(0);
    Shape shape = t.shape();
    shape[0] = count;
    auto p = t.data();
    std::vector<double> out(p.begin() + static_cast<ptrdiff_t>(start * per),
                            p.begin() + static_cast<ptrdiff_t>((start + count) * per));
    return Tensor::from_data(std::move(shape), std::move(out));
}

/// Victim construction is keyed by (init, epochs, repeat) only, so all
/// distance kinds in a cell row attack the same victim instance.
VictimInstance make_victim(const ExperimentConfig& cfg, const Dataset& ds, const WeightInit& init,
                           int64_t epochs, int64_t repeat_idx, const std::string& victim_key) {
    uint64_t vseed = derive_seed(cfg.master_seed, victim_key, static_cast<uint64_t>(repeat_idx));
    WeightInit winit = init;
    winit.seed = derive_seed(vseed, "weights", 0);

    VictimInstance v;
    v.weights = init_weights(cfg.model, winit);
    if (epochs > 0) {
        TrainResult tr = train(cfg.model, v.weights, {ds.images, ds.labels}, epochs, cfg.train_lr);
        v.weights = std::move(tr.weights);
    }
    int64_t n = ds.images.dim(0);
    if (cfg.batch_size > n)
        throw ConfigError("config.batch_size exceeds dataset size " + std::to_string(n));
    int64_t start = static_cast<int64_t>(derive_seed(vseed, "pick", 0) %
                                         static_cast<uint64_t>(n - cfg.batch_size + 1));
    v.truth_x = rows_slice(ds.images, start, cfg.batch_size);
    v.truth_y = rows_slice(ds.labels, start, cfg.batch_size);
    v.snapshot = capture(cfg.model, v.weights, v.truth_x, v.truth_y, vseed, epochs);
    return v;
}

void write_trace_csv(const std::filesystem::path& path, const ReconstructionResult& r) {
    std::ofstream f(path);
    bool with_mse = !r.loss_trace.empty() && r.loss_trace.front().mse_vs_truth.has_value();
    f << "iter,distance" << (with_mse ? ",mse_vs_truth" : "") << "\n";
    for (const auto& tp : r.loss_trace) {
        f << tp.iter << "," << fmt_double(tp.distance);
        if (with_mse) f << "," << fmt_double(tp.mse_vs_truth.value_or(0.0));
        f << "\n";
    }
}

nlohmann::json metrics_to_json(const MetricReport& m) {
    nlohmann::json j;
    j["mse"] = json_double(m.mse);
    j["psnr_db"] = json_double(m.psnr);
    j["ssim"] = json_double(m.ssim);
    j["assignment"] = m.assignment;
    auto items = nlohmann::json::array();
    for (const auto& it : m.per_item)
        items.push_back({{"mse", json_double(it.mse)},
                         {"psnr_db", json_double(it.psnr)},
                         {"ssim", json_double(it.ssim)}});
    j["per_item"] = items;
    return j;
}

void write_images(const std::filesystem::path& dir, const char* stem, const Tensor& batch) {
    int64_t b = batch.dim(0);
    for (int64_t i = 0; i < b; ++i) {
        Shape item_shape(batch.shape().begin() + 1, batch.shape().end());
        int64_t per = batch.numel() / b;
        auto p = batch.data();
        Tensor item = Tensor::from_data(
            item_shape, std::vector<double>(p.begin() + static_cast<ptrdiff_t>(i * per),
                                            p.begin() + static_cast<ptrdiff_t>((i + 1) * per)));
        std::string name =
            b == 1 ? std::string(stem) + ".pgm" : std::string(stem) + "_" + std::to_string(i) + ".pgm";
        if (item.ndim() == 3 && item.dim(0) == 3)
            name.replace(name.size() - 3, 3, "ppm");
        save_image(dir / name, item);
    }
}

}  // namespace

nlohmann::json attack_config_to_json(const AttackConfig& cfg) {
    nlohmann::json j;
    j["dummy_init"] = dummy_init_name(cfg.dummy_init);
    j["constant_value"] = cfg.constant_value;
    j["optimizer"] = optimizer_name(cfg.optimizer);
    j["lr"] = cfg.resolved_lr();
    j["max_iters"] = cfg.resolved_max_iters();
    j["weight_decay"] = cfg.weight_decay;
    j["history"] = cfg.history;
    j["distance"] = distance_kind_name(cfg.distance_kind);
    j["sigma_mode"] = sigma_mode_name(cfg.sigma_mode);
    j["q_schedule"] = q_schedule_name(cfg.q_schedule);
    j["gamma"] = cfg.gamma;
    j["sigma_floor"] = cfg.sigma_floor;
    j["seed"] = cfg.seed;
    j["log_every"] = cfg.log_every;
    j["stop_tol"] = cfg.stop_tol;
    return j;
}

AttackConfig attack_config_from_json(const nlohmann::json& j) {
    AttackConfig cfg;
    if (j.contains("dummy_init")) cfg.dummy_init = dummy_init_from_name(j["dummy_init"]);
    cfg.constant_value = j.value("constant_value", 0.5);
    if (j.contains("optimizer")) cfg.optimizer = optimizer_from_name(j["optimizer"]);
    if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
    if (j.contains("max_iters")) cfg.max_iters = j["max_iters"].get<int64_t>();
    cfg.weight_decay = j.value("weight_decay", 0.01);
    cfg.history = j.value("history", 20);
    if (j.contains("distance")) cfg.distance_kind = distance_kind_from_name(j["distance"]);
    if (j.contains("sigma_mode")) cfg.sigma_mode = sigma_mode_from_name(j["sigma_mode"]);
    if (j.contains("q_schedule")) cfg.q_schedule = q_schedule_from_name(j["q_schedule"]);
    cfg.gamma = j.value("gamma", 0.5);
    cfg.sigma_floor = j.value("sigma_floor", 1e-8);
    cfg.seed = j.value("seed", uint64_t{0});
    cfg.log_every = j.value("log_every", int64_t{10});
    cfg.stop_tol = j.value("stop_tol", 1e-10);
    if (cfg.resolved_max_iters() < 1) throw ConfigError("config.attack.max_iters must be >= 1");
    if (!(cfg.resolved_lr() > 0.0)) throw ConfigError("config.attack.lr must be > 0");
    return cfg;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        cfg.model = model_spec_from_json(j.at("model"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config.model: ") + e.what());
    }

    if (j.contains("data")) {
        const auto& d = j["data"];
        std::string source = d.value("source", "builtin");
        if (source == "builtin") {
            cfg.data.source = DataSourceConfig::Source::builtin;
            cfg.data.kind = pattern_kind_from_name(d.value("kind", "mixed"));
            cfg.data.size = d.value("size", int64_t{8});
            cfg.data.per_class = d.value("per_class", int64_t{4});
        } else if (source == "dir") {
            cfg.data.source = DataSourceConfig::Source::directory;
            cfg.data.directory = d.at("path").get<std::string>();
            if (!std::filesystem::is_directory(cfg.data.directory))
                throw ConfigError("config.data.path: not a directory: " +
                                  cfg.data.directory.string());
        } else {
            throw ConfigError("config.data.source: unknown value '" + source + "'");
        }
    }
    cfg.batch_size = j.value("batch_size", int64_t{1});
    if (cfg.batch_size < 1) throw ConfigError("config.batch_size must be >= 1");

    const auto grid = j.value("grid", nlohmann::json::object());
    for (const auto& d : grid.value("distance", nlohmann::json::array({"sapag"})))
        cfg.distances.push_back(distance_kind_from_name(d.get<std::string>()));
    if (grid.contains("init")) {
        for (const auto& e : grid["init"]) {
            if (e.is_string()) {
                WeightInit w;
                std::string s = e.get<std::string>();
                if (s == "uniform")
                    w.scheme = WeightInit::Scheme::uniform;
                else if (s == "xavier_normal")
                    w.scheme = WeightInit::Scheme::xavier_normal;
                else
                    throw ConfigError("config.grid.init: unknown scheme '" + s + "'");
                cfg.inits.push_back(w);
            } else {
                cfg.inits.push_back(weight_init_from_json(e));
            }
        }
    } else {
        cfg.inits.push_back(WeightInit{});
    }
    for (const auto& e : grid.value("epochs", nlohmann::json::array({0})))
        cfg.epochs.push_back(e.get<int64_t>());
    for (int64_t e : cfg.epochs)
        if (e < 0) throw ConfigError("config.grid.epochs: values must be >= 0");

    cfg.train_lr = j.value("train_lr", 0.01);
    cfg.attack = attack_config_from_json(j.value("attack", nlohmann::json::object()));
    cfg.repeat = j.value("repeat", int64_t{1});
    if (cfg.repeat < 1) throw ConfigError("config.repeat must be >= 1");
    cfg.master_seed = j.value("master_seed", uint64_t{0});
    cfg.out_dir = j.value("out_dir", std::string("out"));
    cfg.threads = j.value("threads", 1);
    if (cfg.threads < 1) throw ConfigError("config.threads must be >= 1");
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    return parse_experiment_config(j);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.model.validate();
    Dataset ds = build_dataset(cfg);

    struct Cell {
        DistanceKind distance;
        WeightInit init;
        int64_t epochs;
        std::string id;
        std::string victim_key;  // distance-independent
    };
    std::vector<Cell> cells;
    for (DistanceKind d : cfg.distances)
        for (const WeightInit& w : cfg.inits)
            for (int64_t e : cfg.epochs) {
                std::string victim_key = w.scheme_name() + "_e" + std::to_string(e);
                cells.push_back({d, w, e,
                                 std::string(distance_kind_name(d)) + "_" + victim_key, victim_key});
            }

    int64_t total = static_cast<int64_t>(cells.size()) * cfg.repeat;
    ExperimentResult result;
    result.runs.resize(static_cast<size_t>(total));

    std::atomic<int64_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            int64_t at = cursor.fetch_add(1);
            if (at >= total) return;
            const Cell& cell = cells[static_cast<size_t>(at / cfg.repeat)];
            int64_t rep = at % cfg.repeat;

            RunOutcome& out = result.runs[static_cast<size_t>(at)];
            out.cell_id = cell.id;
            out.run_id = cell.id + "/r" + std::to_string(rep);
            out.distance = cell.distance;
            out.init_scheme = cell.init.scheme_name();
            out.epochs = cell.epochs;

            std::filesystem::path run_dir = cfg.out_dir / cell.id / std::to_string(rep);
            std::filesystem::create_directories(run_dir);

            VictimInstance victim =
                make_victim(cfg, ds, cell.init, cell.epochs, rep, cell.victim_key);

            AttackConfig acfg = cfg.attack;
            acfg.distance_kind = cell.distance;
            acfg.seed = derive_seed(cfg.master_seed, cell.id + "/attack",
                                    static_cast<uint64_t>(rep));
            ReconstructionResult recon =
                run_attack(cfg.model, victim.weights, victim.snapshot, acfg, &victim.truth_x);

            out.metrics = match_batch(recon.x_recon, victim.truth_x);
            out.wall_seconds = recon.wall_seconds;
            out.aborted = recon.aborted;
            out.abort_reason = recon.abort_reason;

            write_trace_csv(run_dir / "trace.csv", recon);
            write_images(run_dir, "recon", recon.x_recon);
            write_images(run_dir, "truth", victim.truth_x);
            {
                std::ofstream mf(run_dir / "metrics.json");
                mf << metrics_to_json(out.metrics).dump(2) << "\n";
            }
            {
                nlohmann::json rj;
                rj["run_id"] = out.run_id;
                rj["model"] = model_spec_to_json(cfg.model);
                rj["init"] = weight_init_to_json(cell.init);
                rj["epochs"] = cell.epochs;
                rj["batch_size"] = cfg.batch_size;
                rj["attack"] = attack_config_to_json(acfg);
                rj["metrics"] = metrics_to_json(out.metrics);
                rj["iters_run"] = recon.iters_run;
                rj["best_iter"] = recon.best_iter;
                rj["best_distance"] = json_double(recon.best_distance);
                rj["predicted_labels"] = recon.predicted_labels;
                rj["wall_seconds"] = recon.wall_seconds;
                rj["aborted"] = recon.aborted;
                if (recon.aborted) rj["abort_reason"] = recon.abort_reason;
                std::ofstream rf(run_dir / "result.json");
                rf << rj.dump(2) << "\n";
            }
        }
    };

    int workers = std::min<int>(cfg.threads, static_cast<int>(total));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // aggregates, written by the coordinator in deterministic order
    std::filesystem::create_directories(cfg.out_dir);
    for (const char* name : {"summary.csv", "metrics.csv"}) {
        std::ofstream f(cfg.out_dir / name);
        f << "run_id,distance_kind,init_scheme,epochs,mse,psnr,ssim\n";
        for (const auto& r : result.runs)
            f << r.run_id << "," << distance_kind_name(r.distance) << "," << r.init_scheme << ","
              << r.epochs << "," << fmt_double(r.metrics.mse) << "," << fmt_double(r.metrics.psnr)
              << "," << fmt_double(r.metrics.ssim) << "\n";
    }

    int64_t aborted = 0;
    for (const auto& r : result.runs) aborted += r.aborted ? 1 : 0;
    log << "experiment: " << total << " runs, " << aborted << " aborted, artifacts in "
        << cfg.out_dir.string() << "\n";
    if (aborted > 0) {
        for (const auto& r : result.runs)
            if (r.aborted) log << "  aborted " << r.run_id << ": " << r.abort_reason << "\n";
        result.exit_code = 2;
    }
    return result;
}

}  // namespace gradleak
