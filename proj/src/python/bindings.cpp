#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gradleak/attack.hpp"
#include "gradleak/experiment.hpp"
#include "gradleak/image_io.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/patterns.hpp"
#include "gradleak/text.hpp"

namespace py = pybind11;
using namespace gradleak;

namespace {

Tensor tensor_from_array(const py::array& arr) {
    auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(arr);
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    const double* p = a.data();
    return Tensor::from_data(std::move(shape),
                             std::vector<double>(p, p + a.size()));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

nlohmann::json json_from_py(const py::dict& d) {
    py::module json_mod = py::module::import("json");
    std::string dumped = py::cast<std::string>(json_mod.attr("dumps")(d));
    return nlohmann::json::parse(dumped);
}

std::vector<NamedTensor> weights_from_py(const py::list& weights) {
    std::vector<NamedTensor> out;
    for (auto item : weights) {
        auto pair = py::cast<py::tuple>(item);
        out.push_back({py::cast<std::string>(pair[0]), tensor_from_array(py::cast<py::array>(pair[1]))});
    }
    return out;
}

py::list weights_to_py(const std::vector<NamedTensor>& weights) {
    py::list out;
    for (const auto& nt : weights) out.append(py::make_tuple(nt.name, array_from_tensor(nt.tensor)));
    return out;
}

AttackConfig attack_from_py(const py::dict& d) { return attack_config_from_json(json_from_py(d)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gradient inversion attack toolkit (SAPAG / DLG) core";

    py::register_exception<Error>(m, "GradleakError");

    py::class_<GradientSnapshot>(m, "GradientSnapshot")
        .def_property_readonly("layer_names",
                               [](const GradientSnapshot& s) {
                                   std::vector<std::string> names;
                                   for (const auto& lg : s.layer_grads) names.push_back(lg.name);
                                   return names;
                               })
        .def_property_readonly("weight_checksum",
                               [](const GradientSnapshot& s) { return s.weight_checksum; })
        .def_property_readonly("batch_size",
                               [](const GradientSnapshot& s) { return s.meta.batch_size; })
        .def("layer_grad",
             [](const GradientSnapshot& s, const std::string& name) {
                 for (const auto& lg : s.layer_grads)
                     if (lg.name == name) return array_from_tensor(lg.tensor);
                 throw Error("no layer named '" + name + "'");
             })
        .def("save", [](const GradientSnapshot& s, const std::string& path) {
            save_snapshot(path, s);
        });

    py::class_<Vocabulary>(m, "Vocabulary")
        .def_property_readonly("tokens", [](const Vocabulary& v) { return v.tokens; })
        .def_property_readonly("embed", [](const Vocabulary& v) { return array_from_tensor(v.embed); })
        .def("embed_sequence", [](const Vocabulary& v, const std::vector<int64_t>& t) {
            return array_from_tensor(v.embed_sequence(t));
        });

    m.def("init_weights", [](const py::dict& model, const py::dict& init) {
        return weights_to_py(
            init_weights(model_spec_from_json(json_from_py(model)), weight_init_from_json(json_from_py(init))));
    });

    m.def("forward", [](const py::dict& model, const py::list& weights, const py::array& x) {
        return array_from_tensor(forward(model_spec_from_json(json_from_py(model)),
                                         weights_from_py(weights), tensor_from_array(x)));
    });

    m.def("loss", [](const py::array& logits, const py::array& y) {
        return loss(tensor_from_array(logits), tensor_from_array(y)).item();
    });

    m.def(
        "capture",
        [](const py::dict& model, const py::list& weights, const py::array& x, const py::array& y,
           uint64_t seed, int64_t epochs) {
            return capture(model_spec_from_json(json_from_py(model)), weights_from_py(weights),
                           tensor_from_array(x), tensor_from_array(y), seed, epochs);
        },
        py::arg("model"), py::arg("weights"), py::arg("x"), py::arg("y"), py::arg("seed") = 0,
        py::arg("epochs") = 0);

    m.def("load_snapshot", [](const std::string& path) { return load_snapshot(path); });

    m.def("estimate_sigma2",
          [](const GradientSnapshot& snap, const std::string& mode, double floor) {
              return estimate_sigma2(snap, sigma_mode_from_name(mode), floor);
          },
          py::arg("snapshot"), py::arg("mode") = "per_layer_scaled", py::arg("sigma_floor") = 1e-8);

    m.def("make_q_weights",
          [](int64_t n, const std::string& schedule, double gamma) {
              return make_q_weights(n, q_schedule_from_name(schedule), gamma);
          },
          py::arg("num_layers"), py::arg("schedule") = "harmonic", py::arg("gamma") = 0.5);

    m.def(
        "run_attack",
        [](const py::dict& model, const py::list& weights, const GradientSnapshot& snap,
           const py::dict& cfg) {
            ReconstructionResult r = run_attack(model_spec_from_json(json_from_py(model)),
                                                weights_from_py(weights), snap, attack_from_py(cfg));
            py::dict out;
            out["x_recon"] = array_from_tensor(r.x_recon);
            out["y_recon"] = array_from_tensor(r.y_recon);
            out["predicted_labels"] = r.predicted_labels;
            out["best_distance"] = r.best_distance;
            out["best_iter"] = r.best_iter;
            out["iters_run"] = r.iters_run;
            out["wall_seconds"] = r.wall_seconds;
            out["aborted"] = r.aborted;
            py::list trace;
            for (const auto& tp : r.loss_trace) trace.append(py::make_tuple(tp.iter, tp.distance));
            out["trace"] = trace;
            return out;
        },
        py::arg("model"), py::arg("weights"), py::arg("snapshot"), py::arg("config"));

    m.def("mse", [](const py::array& a, const py::array& b) {
        return mse(tensor_from_array(a), tensor_from_array(b));
    });
    m.def(
        "psnr",
        [](const py::array& a, const py::array& b, double max_value) {
            return psnr(tensor_from_array(a), tensor_from_array(b), max_value);
        },
        py::arg("recon"), py::arg("truth"), py::arg("max_value") = 1.0);
    m.def("ssim", [](const py::array& a, const py::array& b) {
        return ssim(tensor_from_array(a), tensor_from_array(b));
    });
    m.def("match_batch", [](const py::array& recon, const py::array& truth) {
        MetricReport r = match_batch(tensor_from_array(recon), tensor_from_array(truth));
        py::dict out;
        out["mse"] = r.mse;
        out["psnr"] = r.psnr;
        out["ssim"] = r.ssim;
        out["assignment"] = r.assignment;
        return out;
    });

    m.def("synthetic_vocabulary", [](int64_t size, int64_t dim, uint64_t seed) {
        return synthetic_vocabulary(size, dim, seed);
    });
    m.def(
        "pseudoinverse",
        [](const py::array& w, double ridge) {
            return array_from_tensor(pseudoinverse(tensor_from_array(w), ridge));
        },
        py::arg("w"), py::arg("ridge") = 1e-10);
    m.def("recover_tokens", [](const py::array& e, const Vocabulary& vocab) {
        TextReconstruction r = recover_tokens(tensor_from_array(e), vocab);
        py::dict out;
        out["indices"] = r.recovered_indices;
        out["tokens"] = r.recovered_tokens;
        out["scores"] = array_from_tensor(r.token_scores);
        return out;
    });
    m.def(
        "run_text_attack",
        [](const py::dict& model, const py::list& weights, const Vocabulary& vocab,
           const GradientSnapshot& snap, const py::dict& cfg,
           const std::optional<std::vector<int64_t>>& truth) {
            TextReconstruction r =
                run_text_attack(model_spec_from_json(json_from_py(model)), weights_from_py(weights),
                                vocab, snap, attack_from_py(cfg), truth ? &*truth : nullptr);
            py::dict out;
            out["indices"] = r.recovered_indices;
            out["tokens"] = r.recovered_tokens;
            out["best_distance"] = r.attack.best_distance;
            if (r.match_mask) out["match_mask"] = *r.match_mask;
            return out;
        },
        py::arg("model"), py::arg("weights"), py::arg("vocab"), py::arg("snapshot"),
        py::arg("config"), py::arg("truth_tokens") = std::nullopt);

    m.def(
        "builtin_patterns",
        [](const std::string& kind, int64_t size, int64_t per_class, uint64_t seed) {
            PatternDataset ds = builtin_patterns(pattern_kind_from_name(kind), size, per_class, seed);
            return py::make_tuple(array_from_tensor(ds.images), array_from_tensor(ds.labels));
        },
        py::arg("kind") = "mixed", py::arg("size") = 8, py::arg("per_class") = 4,
        py::arg("seed") = 0);

    m.def("load_image", [](const std::string& path) { return array_from_tensor(load_image(path)); });
    m.def("save_image", [](const std::string& path, const py::array& img) {
        save_image(path, tensor_from_array(img));
    });

    m.def("run_experiment", [](const py::dict& config) {
        ExperimentConfig cfg = parse_experiment_config(json_from_py(config));
        std::ostringstream log;
        ExperimentResult r = run_experiment(cfg, log);
        py::dict out;
        out["exit_code"] = r.exit_code;
        out["log"] = log.str();
        py::list runs;
        for (const auto& run : r.runs) {
            py::dict rr;
            rr["run_id"] = run.run_id;
            rr["ssim"] = run.metrics.ssim;
            rr["mse"] = run.metrics.mse;
            rr["aborted"] = run.aborted;
            runs.append(rr);
        }
        out["runs"] = runs;
        return out;
    });
}
