#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedmtl/errors.hpp"
#include "fedmtl/runner.hpp"

namespace py = pybind11;
using namespace fedmtl;

namespace {

Tensor2 tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    Tensor2 t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    const double* src = a.data();
    std::copy(src, src + t.size(), t.data().begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor2& t) {
    py::array_t<double> a({t.rows(), t.cols()});
    std::copy(t.data().begin(), t.data().end(), a.mutable_data());
    return a;
}

// PartitionedModel plus its loss, exposed as one trainable object.
class Model {
public:
    Model(std::size_t input_width, const std::vector<std::size_t>& hidden,
          const std::string& hidden_activation, const std::string& output,
          std::size_t output_width, const std::vector<std::string>& tags, std::uint64_t seed) {
        std::vector<LayerSpec> arch;
        for (std::size_t w : hidden) arch.push_back({w, activation_from_string(hidden_activation)});
        const Activation out_act = activation_from_string(output);
        arch.push_back({output_width, out_act});
        std::vector<LayerGroup> groups;
        for (const std::string& t : tags) groups.push_back(layer_group_from_string(t));
        model_ = build_partitioned_model(input_width, arch, groups, seed);
        loss_ = out_act == Activation::Softmax ? LossKind::CategoricalCrossEntropy
                                               : LossKind::BinaryCrossEntropy;
    }

    py::array_t<double> forward(const py::array_t<double>& x) const {
        return array_from_tensor(compose_forward(model_, tensor_from_array(x)));
    }

    void train_local(const py::array_t<double>& x, const py::array_t<double>& y,
                     std::size_t epochs, std::size_t batch_size, double learning_rate) {
        const Tensor2 tx = tensor_from_array(x);
        const Tensor2 ty = tensor_from_array(y);
        const std::size_t n = tx.rows();
        const std::size_t batch = std::min(std::max<std::size_t>(batch_size, 1), n);
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            for (std::size_t start = 0; start < n; start += batch) {
                const std::size_t end = std::min(n, start + batch);
                const Tensor2 bx = tx.slice_rows(start, end);
                const Tensor2 by = ty.slice_rows(start, end);
                const ForwardCache cache = compose_forward_cached(model_, bx);
                sgd_step(model_, backward(model_.layers, cache, by, loss_), learning_rate);
            }
        }
    }

    py::tuple evaluate_on(const py::array_t<double>& x, const py::array_t<double>& y) const {
        const EvalResult r = evaluate(model_, tensor_from_array(x), tensor_from_array(y), loss_);
        return py::make_tuple(r.accuracy, r.loss);
    }

    double gradient_check(const py::array_t<double>& x, const py::array_t<double>& y,
                          double epsilon) const {
        const Tensor2 tx = tensor_from_array(x);
        const Tensor2 ty = tensor_from_array(y);
        const ForwardCache cache = compose_forward_cached(model_, tx);
        const GradientSet analytic = backward(model_.layers, cache, ty, loss_);
        const GradientSet numeric = finite_diff_grad(model_.layers, tx, ty, loss_, epsilon);
        return max_relative_error(analytic, numeric);
    }

    std::vector<std::string> tags() const {
        std::vector<std::string> out;
        for (LayerGroup g : model_.tags) out.emplace_back(to_string(g));
        return out;
    }

private:
    PartitionedModel model_;
    LossKind loss_ = LossKind::BinaryCrossEntropy;
};

py::dict summarize(const MetricsLog& log) {
    const RoundRecord& last = log.final_round();
    py::dict out;
    out["rounds"] = log.rounds.size();
    out["task_names"] = log.task_names;
    out["overall_accuracy"] = last.overall_accuracy;
    out["overall_loss"] = last.overall_loss;
    out["task_accuracy"] = last.task_accuracy;
    py::list curve;
    for (const RoundRecord& rec : log.rounds) curve.append(rec.overall_accuracy);
    out["accuracy_curve"] = curve;
    return out;
}

ExperimentConfig load_config(const std::string& path, const py::object& seed) {
    ExperimentConfig cfg = parse_config(path);
    if (!seed.is_none()) cfg.seed = seed.cast<std::uint64_t>();
    return cfg;
}

} // namespace

PYBIND11_MODULE(fedmtl, m) {
    m.doc() = "Layered multi-task federated learning simulator";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<Model>(m, "Model")
        .def(py::init<std::size_t, const std::vector<std::size_t>&, const std::string&,
                      const std::string&, std::size_t, const std::vector<std::string>&,
                      std::uint64_t>(),
             py::arg("input_width"), py::arg("hidden"), py::arg("hidden_activation") = "relu",
             py::arg("output") = "sigmoid", py::arg("output_width") = 1, py::arg("tags"),
             py::arg("seed") = 0)
        .def("forward", &Model::forward, py::arg("x"))
        .def("train_local", &Model::train_local, py::arg("x"), py::arg("y"),
             py::arg("epochs") = 1, py::arg("batch_size") = 16, py::arg("learning_rate") = 0.1)
        .def("evaluate", &Model::evaluate_on, py::arg("x"), py::arg("y"))
        .def("gradient_check", &Model::gradient_check, py::arg("x"), py::arg("y"),
             py::arg("epsilon") = 1e-5)
        .def_property_readonly("tags", &Model::tags);

    m.def(
        "gen_synthetic",
        [](std::size_t samples, std::size_t latent_dim, std::size_t feature_dim,
           std::size_t tasks, const std::string& rule, double label_noise, std::uint64_t seed) {
            SyntheticConfig cfg;
            cfg.samples = samples;
            cfg.latent_dim = latent_dim;
            cfg.feature_dim = feature_dim;
            cfg.tasks = tasks;
            if (rule == "linear") cfg.rule = SyntheticConfig::Rule::Linear;
            else if (rule == "nonlinear") cfg.rule = SyntheticConfig::Rule::Nonlinear;
            else throw ConfigError("rule must be linear or nonlinear");
            cfg.label_noise = label_noise;
            cfg.seed = seed;
            const TabularDataset data = gen_synthetic_multitask(cfg);
            return py::make_tuple(array_from_tensor(data.features), array_from_tensor(data.labels));
        },
        py::arg("samples"), py::arg("latent_dim") = 8, py::arg("feature_dim") = 32,
        py::arg("tasks") = 5, py::arg("rule") = "linear", py::arg("label_noise") = 0.0,
        py::arg("seed") = 0);

    m.def(
        "load_har",
        [](const std::string& dir) {
            const TabularDataset data = load_har(dir);
            return py::make_tuple(array_from_tensor(data.features), array_from_tensor(data.labels),
                                  data.subjects);
        },
        py::arg("dir"));

    m.def(
        "run_config",
        [](const std::string& path, const py::object& out_dir, const py::object& seed,
           std::size_t threads) {
            const ExperimentConfig cfg = load_config(path, seed);
            MetricsLog log;
            if (out_dir.is_none()) log = run_scenario(cfg, threads);
            else log = run_to_dir(cfg, out_dir.cast<std::string>(), threads);
            return summarize(log);
        },
        py::arg("path"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
        py::arg("threads") = 1);

    m.def(
        "grid_config",
        [](const std::string& path, const py::object& out_dir, const py::object& seed,
           std::size_t threads) {
            const ExperimentConfig cfg = load_config(path, seed);
            GridResult grid;
            if (out_dir.is_none()) grid = grid_search(cfg, threads);
            else grid = grid_to_dir(cfg, out_dir.cast<std::string>(), threads);
            const GridPoint& best = grid.points[grid.best];
            py::dict out = summarize(grid.logs[grid.best]);
            out["grid_points"] = grid.points.size();
            out["best_index"] = grid.best;
            out["best_learning_rate"] = best.learning_rate;
            out["best_local_epochs"] = best.local_epochs;
            out["best_batch_size"] = best.batch_size;
            out["best_clients_per_round"] = best.clients_per_round;
            return out;
        },
        py::arg("path"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
        py::arg("threads") = 1);
}
