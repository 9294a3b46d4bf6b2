// Python bindings. Arrays cross the boundary as (count, dim): one sample per
// row, the transpose of the column-major layout used in C++.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "proxflow/cli.hpp"
#include "proxflow/conditional.hpp"
#include "proxflow/error.hpp"
#include "proxflow/flow.hpp"
#include "proxflow/linalg.hpp"
#include "proxflow/metrics.hpp"
#include "proxflow/problems.hpp"
#include "proxflow/train.hpp"

namespace py = pybind11;
using namespace proxflow;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat cols(const RowMat& rows) { return rows.transpose(); }
RowMat rows(const Mat& cols) { return cols.transpose(); }

void check_width(const RowMat& a, std::size_t dim, const char* what) {
  if (static_cast<std::size_t>(a.cols()) != dim)
    throw InvalidArgument(std::string(what) + " must have " + std::to_string(dim) + " columns, got " +
                          std::to_string(a.cols()));
}

// Broadcasts a single condition row to `count` rows.
Mat conditions(const ProxFlow& flow, const RowMat& y, Eigen::Index count) {
  check_width(y, flow.cond_dim(), "y");
  if (y.rows() == 1) return y.transpose().replicate(1, count);
  if (y.rows() != count) throw InvalidArgument("y needs one row or one row per sample");
  return y.transpose();
}

struct Model {
  ProxFlow flow;
  // Defaults when the checkpoint carried no config.
  TrainConfig config;

  Mat cond_or_throw(const std::optional<RowMat>& y, Eigen::Index count) const {
    if (flow.conditional() != y.has_value())
      throw InvalidArgument(flow.conditional() ? "conditional flow needs y" : "unconditional flow takes no y");
    return y ? conditions(flow, *y, count) : Mat();
  }
};

}  // namespace

PYBIND11_MODULE(_proxflow, m) {
  m.doc() = "Proximal residual flows: training, sampling and density evaluation.";
  m.attr("__version__") = kVersion;

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Model>(m, "Flow")
      .def_static(
          "from_json",
          [](const std::string& text) {
            Model md;
            md.flow = flow_from_checkpoint(text, &md.config);
            return md;
          },
          py::arg("text"))
      .def_static(
          "load",
          [](const std::string& path) {
            Model md;
            md.flow = load_checkpoint(path, &md.config);
            return md;
          },
          py::arg("path"))
      .def("to_json", [](const Model& md) { return checkpoint_json(md.flow, &md.config); })
      .def_property_readonly("dim", [](const Model& md) { return md.flow.dim(); })
      .def_property_readonly("cond_dim", [](const Model& md) { return md.flow.cond_dim(); })
      .def_property_readonly("blocks", [](const Model& md) { return md.flow.size(); })
      .def(
          "forward",
          [](const Model& md, const RowMat& x, const std::optional<RowMat>& y) {
            check_width(x, md.flow.dim(), "x");
            const Mat c = md.cond_or_throw(y, x.rows());
            return rows(flow_forward(md.flow, cols(x), c.size() ? &c : nullptr));
          },
          py::arg("x"), py::arg("y") = py::none())
      .def(
          "inverse",
          [](const Model& md, const RowMat& z, const std::optional<RowMat>& y) {
            check_width(z, md.flow.dim(), "z");
            const Mat c = md.cond_or_throw(y, z.rows());
            const SolverOptions opts = solver_options(md.config);
            py::gil_scoped_release unlock;
            return rows(flow_inverse(md.flow, cols(z), c.size() ? &c : nullptr, opts));
          },
          py::arg("z"), py::arg("y") = py::none())
      .def(
          "logdensity",
          [](const Model& md, const RowMat& x, const std::optional<RowMat>& y) -> Vec {
            check_width(x, md.flow.dim(), "x");
            const Mat c = md.cond_or_throw(y, x.rows());
            return flow_forward_logdensity(md.flow, cols(x), c.size() ? &c : nullptr).logdensity;
          },
          py::arg("x"), py::arg("y") = py::none())
      .def(
          "sample",
          [](const Model& md, std::size_t count, std::uint64_t seed, const std::optional<RowMat>& y) {
            Rng rng(seed);
            const SolverOptions opts = solver_options(md.config);
            if (!md.flow.conditional()) {
              if (y) throw InvalidArgument("unconditional flow takes no y");
              py::gil_scoped_release unlock;
              return rows(flow_sample(md.flow, count, rng, opts));
            }
            if (!y || y->rows() != 1) throw InvalidArgument("conditional sampling needs a single row y");
            check_width(*y, md.flow.cond_dim(), "y");
            const Vec yv = y->row(0).transpose();
            py::gil_scoped_release unlock;
            return rows(cond_sample(md.flow, yv, count, rng, opts));
          },
          py::arg("count"), py::arg("seed") = 0, py::arg("y") = py::none());

  m.def(
      "train",
      [](const std::string& config_json, const std::string& preset, const std::function<void(std::size_t, double)>& on_step) {
        const TrainConfig base = preset.empty() ? TrainConfig{} : TrainConfig::preset(preset);
        const TrainConfig cfg = TrainConfig::from_json(config_json.empty() ? "{}" : config_json, base);
        TrainHooks hooks;
        if (on_step) {
          hooks.on_step = [&](const LossRecord& r) {
            py::gil_scoped_acquire lock;
            on_step(r.step, r.loss);
          };
        }
        TrainResult res;
        {
          py::gil_scoped_release unlock;
          res = train_loop(cfg, make_sampler(cfg), hooks);
        }
        Model md{std::move(res.flow), cfg};
        std::vector<double> losses;
        for (const auto& r : res.history) losses.push_back(r.loss);
        return py::make_tuple(std::move(md), losses);
      },
      py::arg("config_json") = "", py::arg("preset") = "", py::arg("on_step") = nullptr,
      "Train from a JSON config (keys as in the CLI). Returns (Flow, per-step losses).");

  m.def(
      "polar_project", [](const Mat& t, double tol, std::size_t max_iter) { return linalg::polar_project(t, tol, max_iter); },
      py::arg("t"), py::arg("tol") = 1e-10, py::arg("max_iter") = 50);

  m.def(
      "empirical_w2", [](const RowMat& a, const RowMat& b) { return empirical_w2(cols(a), cols(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "empirical_kl",
      [](const RowMat& p, const RowMat& q, std::vector<std::size_t> bins) {
        GridSpec g;
        g.bins = std::move(bins);
        return empirical_kl(cols(p), cols(q), g).value;
      },
      py::arg("p"), py::arg("q"), py::arg("bins"));

  m.def(
      "sample_toy",
      [](const std::string& name, std::size_t count, std::uint64_t seed) {
        Rng rng(seed);
        return rows(sample_toy(name, count, rng));
      },
      py::arg("name"), py::arg("count"), py::arg("seed") = 0);
}
