#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "brpp/condsim.hpp"
#include "brpp/depfit.hpp"
#include "brpp/error.hpp"
#include "brpp/margins.hpp"
#include "brpp/maxstable.hpp"
#include "brpp/postproc.hpp"
#include "brpp/variogram.hpp"
#include "brpp/verify.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace brpp;

namespace {

// (n, 2) array of planar coordinates in km.
std::vector<Point> points(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw py::value_error("locations must have shape (n, 2)");
  const auto r = a.unchecked<2>();
  std::vector<Point> out(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = {r(i, 0), r(i, 1)};
  return out;
}

py::handle error_type;  // owned by the module attribute

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bivariate Brown-Resnick post-processing of spatial forecast maxima";

  error_type = py::exception<Error>(m, "BrppError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("category") = category_name(e.category());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<GevParams>(m, "GevParams")
      .def(py::init<>())
      .def(py::init([](double shape, double location, double scale) { return GevParams{shape, location, scale}; }),
           "shape"_a, "location"_a, "scale"_a)
      .def_readwrite("shape", &GevParams::shape)
      .def_readwrite("location", &GevParams::location)
      .def_readwrite("scale", &GevParams::scale)
      .def("__repr__", [](GevParams p) {
        return "GevParams(shape=" + std::to_string(p.shape) + ", location=" + std::to_string(p.location) +
               ", scale=" + std::to_string(p.scale) + ")";
      });

  m.def("gev_cdf", py::vectorize([](double x, GevParams p) { return gev_cdf(x, p); }), "x"_a, "params"_a);
  m.def("gev_quantile", py::vectorize([](double q, GevParams p) { return gev_quantile(q, p); }), "prob"_a,
        "params"_a);
  m.def("crps_gev", py::vectorize([](double x, GevParams p) { return crps_gev(p, x); }), "x"_a, "params"_a,
        "Closed-form CRPS of a GEV forecast at observation x");
  m.def(
      "fit_gev",
      [](const std::vector<double>& samples, std::optional<double> fixed_shape) {
        const StationGevFit f = fit_gev_mle(samples, fixed_shape);
        return py::dict("params"_a = f.params, "std_errors"_a = f.std_errors, "log_likelihood"_a = f.log_likelihood);
      },
      "samples"_a, "fixed_shape"_a = py::none(), "Maximum-likelihood GEV fit (at least 20 samples)");
  m.def("to_gumbel", py::vectorize([](double v, double mm, double s, GevParams p) { return to_gumbel(v, mm, s, p); }),
        "v"_a, "m"_a, "s"_a, "params"_a);
  m.def("from_gumbel",
        py::vectorize([](double x, double mm, double s, GevParams p) { return from_gumbel(x, mm, s, p); }), "x"_a,
        "m"_a, "s"_a, "params"_a);

  py::class_<AnisotropyParams>(m, "Anisotropy")
      .def(py::init<>())
      .def(py::init([](double ratio, double angle) { return AnisotropyParams{ratio, angle}; }), "ratio"_a, "angle"_a)
      .def_readwrite("ratio", &AnisotropyParams::ratio)
      .def_readwrite("angle", &AnisotropyParams::angle);

  py::class_<UnivVariogramParams>(m, "UnivariateModel")
      .def(py::init<>())
      .def(py::init([](double scale, double exponent, AnisotropyParams a) {
             return UnivVariogramParams{scale, a, exponent};
           }),
           "scale"_a, "exponent"_a, "aniso"_a = AnisotropyParams{})
      .def_readwrite("scale", &UnivVariogramParams::scale)
      .def_readwrite("aniso", &UnivVariogramParams::aniso)
      .def_readwrite("exponent", &UnivVariogramParams::exponent);

#define BIV_FIELD(name) .def_readwrite(#name, &BivVariogramParams::name)
  py::class_<BivVariogramParams>(m, "BivariateModel")
      .def(py::init<>())
      BIV_FIELD(sill) BIV_FIELD(common_scale) BIV_FIELD(aniso) BIV_FIELD(long_range) BIV_FIELD(constant)
      BIV_FIELD(amp1) BIV_FIELD(smooth1) BIV_FIELD(amp2) BIV_FIELD(smooth2) BIV_FIELD(matern_scale) BIV_FIELD(rho)
      .def("cross_smooth", &BivVariogramParams::cross_smooth)
      .def("max_abs_rho", &BivVariogramParams::max_abs_rho);
#undef BIV_FIELD

  m.def("variogram", [](const DependenceModel& model, double hx, double hy, int k1, int k2) {
        return model_variogram(model, {hx, hy}, k1, k2);
      }, "model"_a, "hx"_a, "hy"_a, "k1"_a = 0, "k2"_a = 0);
  m.def("validate_model", [](const DependenceModel& model) { require_valid(model); }, "model"_a,
        "Raises BrppError when the parameters leave the valid region");
  m.def("extremal_coeff",
        [](const DependenceModel& model, std::pair<double, double> s1, std::pair<double, double> s2, int k1, int k2) {
          return extremal_coeff(model, {s1.first, s1.second}, {s2.first, s2.second}, k1, k2);
        },
        "model"_a, "s1"_a, "s2"_a, "k1"_a = 0, "k2"_a = 0);

  m.def(
      "simulate_br",
      [](const DependenceModel& model, const py::array_t<double>& locations, int n_rep, std::uint64_t seed) {
        const auto locs = points(locations);
        const int comps = component_count(model);
        std::vector<BrSample> s;
        {
          py::gil_scoped_release release;
          s = simulate_br(locs, model, n_rep, seed);
        }
        py::array_t<double> out({static_cast<py::ssize_t>(n_rep), static_cast<py::ssize_t>(locs.size()),
                                 static_cast<py::ssize_t>(comps)});
        auto w = out.mutable_unchecked<3>();
        for (int r = 0; r < n_rep; ++r)
          for (std::size_t i = 0; i < locs.size(); ++i)
            for (int k = 0; k < comps; ++k) w(r, i, k) = s[r].values(i, k);
        return out;
      },
      "model"_a, "locations"_a, "n_rep"_a, "seed"_a,
      "Exact Brown-Resnick replicates on the standard Gumbel scale, shape (n_rep, sites, components)");

  m.def(
      "conditional_simulate",
      [](const DependenceModel& model, const py::array_t<double>& cond_sites, const std::vector<double>& cond_values,
         int cond_component, const py::array_t<double>& target_sites, const std::vector<int>& target_components, int K,
         std::uint64_t seed) {
        const auto ts = points(target_sites);
        if (ts.size() != target_components.size()) throw py::value_error("one component per target site");
        std::vector<SiteComponent> targets;
        for (std::size_t i = 0; i < ts.size(); ++i) targets.push_back({ts[i], target_components[i]});
        const ConditioningSet cond{points(cond_sites), cond_values, cond_component};
        py::gil_scoped_release release;
        return Eigen::MatrixXd(conditional_simulate(model, cond, targets, K, seed));
      },
      "model"_a, "cond_sites"_a, "cond_values"_a, "cond_component"_a, "target_sites"_a, "target_components"_a, "K"_a,
      "seed"_a, "K x targets draws given Gumbel-scale values at the conditioning sites");

  m.def("fmadogram", [](const std::vector<double>& a, const std::vector<double>& b) { return fmadogram(a, b); });
  m.def("theta_from_madogram", &theta_from_madogram, "nu"_a);

  m.def("crps_empirical", [](const std::vector<double>& samples, double x) { return crps_empirical(samples, x); },
        "samples"_a, "x"_a);
  m.def("energy_score", [](const Eigen::MatrixXd& samples, const Eigen::VectorXd& x, double chi) {
        return energy_score(samples, x, chi);
      }, "samples"_a, "x"_a, "chi"_a = 1.0, "Plug-in energy score; samples are rows");

  m.def(
      "postprocess",
      [](const BivVariogramParams& model, const py::array_t<double>& sites, const std::vector<double>& vmax_pred,
         const std::vector<double>& m_hat, const std::vector<double>& s_hat, const std::vector<GevParams>& obs,
         const std::vector<GevParams>& pred, int K, std::uint64_t seed) {
        const auto locs = points(sites);
        const MarginalFits fits{obs, pred};
        py::gil_scoped_release release;
        return Eigen::MatrixXd(postprocess(model, locs, vmax_pred, m_hat, s_hat, fits, K, seed).fields);
      },
      "model"_a, "sites"_a, "vmax_pred"_a, "m"_a, "s"_a, "obs_margins"_a, "pred_margins"_a, "K"_a, "seed"_a,
      "K x sites post-processed maxima for one period (local conditioning)");
}
