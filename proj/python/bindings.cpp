#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kilab/config.hpp"
#include "kilab/errors.hpp"
#include "kilab/estimators.hpp"
#include "kilab/lab.hpp"
#include "kilab/linalg.hpp"
#include "kilab/ntk.hpp"
#include "kilab/report.hpp"
#include "kilab/spectral.hpp"
#include "kilab/variance.hpp"

#include <sstream>

namespace py = pybind11;
using namespace kilab;

namespace {

KernelSpec kernel(const std::string& j) { return kernel_from_json(Json::parse(j)); }
Domain domain(const std::string& j) { return domain_from_json(Json::parse(j)); }

py::dict decay_dict(const DecayFit& f) {
  py::dict d;
  d["beta"] = f.beta;
  d["c"] = f.c;
  d["r2"] = f.r2;
  d["i_min"] = f.i_min;
  d["i_max"] = f.i_max;
  return d;
}

std::string run_experiment(const std::string& verb, const std::string& config, const std::string& output_dir) {
  ExperimentConfig c = parse_config(Json::parse(config), verb);
  if (!output_dir.empty()) c.output_dir = output_dir;
  if (verb == "kernel-info") {
    std::ostringstream text;
    return kernel_info(c, text).dump();
  }
  ScalingReport report;
  {
    py::gil_scoped_release release;
    if (verb == "spectrum") report = run_spectrum(c);
    else if (verb == "variance") report = run_variance_scaling(c);
    else if (verb == "scaling") report = run_interpolation_scaling(c);
    else if (verb == "ntk") report = run_ntk_pipeline(c);
    else if (verb == "concentration") report = run_seminorm_concentration(c);
    else throw ConfigError("unknown experiment '" + verb + "'");
  }
  if (!output_dir.empty()) {
    write_resolved_config(c);
    emit_report(report, c.output_dir);
  }
  Json out = summary_json(report);
  Json records = Json::array();
  for (const auto& r : report.records)
    records.push_back({{"n", r.n}, {"lambda", r.lambda}, {"seed", r.seed}, {"risk", r.risk}, {"variance", r.variance}});
  out["records_table"] = records;
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kernel interpolation lab core";

  auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", config_error.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<InterpolationInfeasible>(m, "InterpolationInfeasible", numerical.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", numerical.ptr());

  m.def("sample", [](const std::string& d, std::size_t n, std::uint64_t seed) { return sample_iid(domain(d), n, seed); },
        py::arg("domain"), py::arg("n"), py::arg("seed"));
  m.def(
      "quadrature",
      [](const std::string& d, int resolution) {
        const auto g = quadrature(domain(d), resolution);
        return py::make_tuple(g.nodes, g.weights);
      },
      py::arg("domain"), py::arg("resolution"));

  m.def("kernel_eval", [](const std::string& k, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    return kernel(k)(x, y);
  });
  m.def("gram", [](const std::string& k, const Points& X) { return gram(kernel(k), X).raw(); });
  m.def("cross_gram", [](const std::string& k, const Points& A, const Points& B) { return cross_gram(kernel(k), A, B); });

  py::class_<FitResult>(m, "Fit")
      .def_readonly("dual", &FitResult::dual)
      .def_readonly("lam", &FitResult::lambda)
      .def_property_readonly("min_eigenvalue", [](const FitResult& f) { return f.diagnostics.min_eigenvalue; })
      .def_property_readonly("condition", [](const FitResult& f) { return f.diagnostics.condition; })
      .def("predict", [](const FitResult& f, const Points& P) { return predict(f, P); });
  m.def(
      "fit", [](const std::string& k, const Points& X, const Eigen::VectorXd& Y, double lam) { return fit(kernel(k), X, Y, lam); },
      py::arg("kernel"), py::arg("X"), py::arg("Y"), py::arg("lam") = 0.0);

  m.def(
      "variance_curve",
      [](const std::string& k, const std::string& d, const Points& X, double sigma2, const std::vector<double>& lambdas,
         int resolution) {
        const auto curve = variance_curve(kernel(k), X, sigma2, lambdas, quadrature(domain(d), resolution));
        std::vector<double> v;
        for (const auto& e : curve.entries) v.push_back(e.value);
        return v;
      },
      py::arg("kernel"), py::arg("domain"), py::arg("X"), py::arg("sigma2"), py::arg("lambdas"), py::arg("resolution"));
  m.def(
      "theoretical_variance_power_law",
      [](double c, double beta, std::size_t truncation, double sigma2, std::size_t n, double lam) {
        return theoretical_variance(SpectrumModel::power_law(c, beta, truncation), sigma2, n, lam);
      },
      py::arg("c"), py::arg("beta"), py::arg("truncation"), py::arg("sigma2"), py::arg("n"), py::arg("lam"));

  m.def(
      "effective_dimension",
      [](const std::vector<double>& eigenvalues, double lam, double p) {
        return effective_dimension(SpectrumModel::from_list(eigenvalues), lam, p).value;
      },
      py::arg("eigenvalues"), py::arg("lam"), py::arg("p") = 1.0);
  m.def(
      "effective_dimension_power_law",
      [](double c, double beta, std::size_t truncation, double lam, double p) {
        return effective_dimension(SpectrumModel::power_law(c, beta, truncation), lam, p).value;
      },
      py::arg("c"), py::arg("beta"), py::arg("truncation"), py::arg("lam"), py::arg("p") = 1.0);
  m.def(
      "dot_product_spectrum",
      [](const std::string& k, int d, int n_max, int quad_res) {
        return dot_product_spectrum(kernel(k), d, n_max, quad_res).eigenvalues();
      },
      py::arg("kernel"), py::arg("d"), py::arg("n_max"), py::arg("quad_res"));
  m.def("empirical_spectrum", [](const std::string& k, const Points& X) {
    const auto s = empirical_spectrum(gram(kernel(k), X));
    return py::make_tuple(s.eigenvalues(), s.validity_window());
  });
  m.def(
      "fit_decay",
      [](const std::vector<double>& eigenvalues, std::size_t i_min, std::size_t i_max) {
        return decay_dict(fit_decay(SpectrumModel::from_list(eigenvalues), i_min, i_max));
      },
      py::arg("eigenvalues"), py::arg("i_min"), py::arg("i_max"));

  py::class_<NetworkState>(m, "Network")
      .def_readonly("width", &NetworkState::width)
      .def_readonly("dim", &NetworkState::dim)
      .def_readonly("w", &NetworkState::w)
      .def_readonly("a", &NetworkState::a)
      .def("forward", &NetworkState::forward)
      .def("loss", [](const NetworkState& n, const Points& X, const Eigen::VectorXd& Y) { return training_loss(n, X, Y); });
  m.def("init_network", &init_symmetric, py::arg("width"), py::arg("dim"), py::arg("seed"));
  m.def(
      "train",
      [](const NetworkState& net, const Points& X, const Eigen::VectorXd& Y, double eta, std::size_t steps,
         double tolerance) {
        TrainOptions o;
        o.eta = eta;
        o.steps = steps;
        o.tolerance = tolerance;
        TrainTrace t;
        {
          py::gil_scoped_release release;
          t = train_gd(net, X, Y, o);
        }
        return py::make_tuple(t.final_state, t.loss_history);
      },
      py::arg("network"), py::arg("X"), py::arg("Y"), py::arg("eta") = 1.0, py::arg("steps") = 1000,
      py::arg("tolerance") = 1e-8);
  m.def("ntk_interpolator", [](const Points& X, const Eigen::VectorXd& Y) { return ntk_interpolator(X, Y); });
  m.def("sup_gap", [](const NetworkState& n, const FitResult& f, const Points& grid) { return sup_gap(n, f, grid); });

  m.def("run", &run_experiment, py::arg("verb"), py::arg("config"), py::arg("output_dir") = "");
  m.def("eigensolver_backend", &eigensolver_backend);
}
