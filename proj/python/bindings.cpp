#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pfeis/config.hpp"
#include "pfeis/errors.hpp"
#include "pfeis/filters.hpp"
#include "pfeis/harness.hpp"
#include "pfeis/heuristics.hpp"
#include "pfeis/ismt_bounds.hpp"
#include "pfeis/unimodality.hpp"

namespace py = pybind11;
using namespace pfeis;

namespace {

std::vector<Observation> to_observations(const std::vector<Mat>& Y) {
  std::vector<Observation> out(Y.size());
  for (size_t t = 0; t < Y.size(); ++t) {
    out[t].Y = Y[t];
    out[t].failed = Eigen::MatrixXi::Zero(Y[t].rows(), Y[t].cols());
  }
  return out;
}

std::vector<Mat> from_observations(const std::vector<Observation>& Y) {
  std::vector<Mat> out;
  for (const Observation& o : Y) out.push_back(o.Y);
  return out;
}

py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict certificate_dict(const UnimodalityCertificate& c) {
  py::dict d;
  d["condition2"] = c.condition2;
  d["reason"] = c.reason;
  d["epsilon0"] = c.epsilon0;
  d["delta_star"] = c.delta_star;
  d["region_minima"] = c.region_minima;
  d["certified"] = c.certified;
  d["argmin"] = c.argmin;
  return d;
}

CondPosterior make_posterior(const LdssModel& m, const Observation& Y, const Vec& C_tilde, const Mat& B_r,
                             const Vec& f_r, const Vec& Delta_r) {
  CondPosterior post;
  post.obs = &m.obs;
  post.Y = &Y;
  post.C_tilde = C_tilde;
  post.B_r = B_r;
  post.f_r = f_r;
  post.Delta_r = Delta_r;
  return post;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  static py::exception<ConfigError> config_error(mod, "ConfigError", PyExc_ValueError);
  static py::exception<NumericalError> numerical_error(mod, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    }
  });

  py::class_<LdssModel>(mod, "Model")
      .def_static("from_json", [](const std::string& text) {
        LdssModel m = parse_model(json::parse(text));
        m.validate();
        return m;
      })
      .def_static("from_file", [](const std::string& path) {
        LdssModel m = parse_model(load_json(path));
        m.validate();
        return m;
      })
      .def_property_readonly("M", &LdssModel::M)
      .def_readwrite("a", &LdssModel::a)
      .def_readwrite("B", &LdssModel::B)
      .def_readwrite("delta_nu", &LdssModel::delta_nu)
      .def_readwrite("C0", &LdssModel::C0)
      .def_property_readonly("alpha", [](const LdssModel& m) { return m.obs.alpha; })
      .def_property_readonly("sigma_obs2", [](const LdssModel& m) { return m.obs.sigma_obs2; });

  py::class_<FilterSpec>(mod, "FilterSpec")
      .def_readonly("name", &FilterSpec::name)
      .def_property_readonly("kind", [](const FilterSpec& f) { return to_string(f.kind); })
      .def_static("original", &FilterSpec::original, py::arg("M"), py::arg("name") = "PF-Original")
      .def_static("doucet", &FilterSpec::doucet, py::arg("M"), py::arg("name") = "PF-Doucet")
      .def_static("eis", &FilterSpec::eis, py::arg("M"), py::arg("s"), py::arg("name") = "PF-EIS")
      .def_static("mt", &FilterSpec::mt, py::arg("M"), py::arg("s"), py::arg("name") = "PF-MT")
      .def_static("eis_mt", &FilterSpec::eis_mt, py::arg("M"), py::arg("s"), py::arg("rr"),
                  py::arg("name") = "PF-EIS-MT")
      .def_static("orig_kdim", &FilterSpec::orig_kdim, py::arg("M"), py::arg("s"),
                  py::arg("name") = "PF-Orig-K-dim");

  mod.def(
      "simulate",
      [](const LdssModel& m, int T, std::uint64_t seed, std::uint64_t run) {
        Trajectory tr = simulate(m, T, seed, run);
        py::dict d;
        d["C"] = tr.C;
        d["v"] = tr.v;
        d["Y"] = from_observations(tr.Y);
        return d;
      },
      py::arg("model"), py::arg("T"), py::arg("seed"), py::arg("run") = 0);

  mod.def(
      "energy",
      [](const LdssModel& m, const Mat& Y, const Vec& C) { return energy(m.obs, to_observations({Y})[0], C); },
      py::arg("model"), py::arg("Y"), py::arg("C"));
  mod.def(
      "grad_energy",
      [](const LdssModel& m, const Mat& Y, const Vec& C) { return grad_energy(m.obs, to_observations({Y})[0], C); },
      py::arg("model"), py::arg("Y"), py::arg("C"));

  mod.def(
      "find_mode",
      [](const LdssModel& m, const Mat& Y, const Vec& C_tilde, const Mat& B_r, const Vec& f_r, const Vec& Delta_r) {
        Observation obs = to_observations({Y})[0];
        CondPosterior post = make_posterior(m, obs, C_tilde, B_r, f_r, Delta_r);
        ModeResult r = find_mode(post);
        py::dict d;
        d["mode"] = r.m;
        d["covariance"] = laplace_covariance(post, r.m);
        d["iterations"] = r.diag.iterations;
        d["cap_hit"] = r.diag.cap_hit;
        return d;
      },
      py::arg("model"), py::arg("Y"), py::arg("C_tilde"), py::arg("B_r"), py::arg("f_r"), py::arg("Delta_r"));

  mod.def(
      "delta_star",
      [](const std::string& path) {
        DeltaStarInstance inst = parse_delta_star_instance(load_json(path));
        return certificate_dict(certify_instance(inst.posterior(), inst.grid(), inst.epsilon0));
      },
      py::arg("path"));
  mod.def("certify", &certify, py::arg("delta_star"), py::arg("Delta_r"));

  mod.def(
      "vp_tail_bound",
      [](double eps, double eps2, int M_rr, double delta_m) {
        return vp_tail_bound({eps, eps2, M_rr, delta_m, NormKind::Max});
      },
      py::arg("eps"), py::arg("eps2"), py::arg("M_rr"), py::arg("delta_m"));
  mod.def(
      "chernoff_tail_bound",
      [](double eps, double eps2, int M_rr, double delta_m) {
        return chernoff_tail_bound({eps, eps2, M_rr, delta_m, NormKind::Euclidean});
      },
      py::arg("eps"), py::arg("eps2"), py::arg("M_rr"), py::arg("delta_m"));
  mod.def("trace_threshold", &trace_threshold, py::arg("eps1"), py::arg("eps2"), py::arg("M"));
  mod.def("trace_proof_bound", &trace_proof_bound, py::arg("trace"), py::arg("eps1"), py::arg("M"));
  mod.def(
      "choose_mrr",
      [](const Vec& variances, double eps, double eps2, const std::string& bound) {
        MrrChoice c = choose_mrr(variances, eps, eps2, MrrMode::Offline, parse_boundkind(bound));
        py::dict d;
        d["M_rr"] = c.M_rr;
        d["indices"] = c.indices;
        d["bound"] = c.bound;
        return d;
      },
      py::arg("variances"), py::arg("eps"), py::arg("eps2"), py::arg("bound") = "vp");

  mod.def("choose_vts_single", &choose_vts_single, py::arg("B"), py::arg("delta_nu"), py::arg("p0"), py::arg("K"));
  mod.def("ol_multimodal_prob", py::overload_cast<const Mat&>(&ol_multimodal_prob), py::arg("alpha"));
  mod.def("onfly_default_threshold", &onfly_default_threshold, py::arg("M"), py::arg("fpr") = 0.04);

  mod.def(
      "run_filter",
      [](const LdssModel& m, const FilterSpec& spec, const std::vector<Mat>& Y, int N, std::uint64_t seed,
         std::uint64_t run) {
        py::gil_scoped_release release;
        return run_filter(m, spec, to_observations(Y), N, seed, run).means;
      },
      py::arg("model"), py::arg("spec"), py::arg("Y"), py::arg("N"), py::arg("seed"), py::arg("run") = 0);
  mod.def(
      "kalman_filter",
      [](const LdssModel& m, const std::vector<Mat>& Y) {
        KalmanResult k = kalman_filter(m, to_observations(Y));
        return py::make_tuple(k.means, k.covs);
      },
      py::arg("model"), py::arg("Y"));

  mod.def(
      "run_experiment",
      [](const std::string& path, int jobs, py::object seed) {
        ExperimentConfig cfg = load_experiment(path);
        if (!seed.is_none()) cfg.seed = seed.cast<std::uint64_t>();
        json out;
        {
          py::gil_scoped_release release;
          out = summary_json(run_experiment(cfg, jobs));
        }
        return to_python(out);
      },
      py::arg("path"), py::arg("jobs") = 1, py::arg("seed") = py::none());
}
