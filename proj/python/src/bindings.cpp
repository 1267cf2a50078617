#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sfess/baselines.hpp"
#include "sfess/error.hpp"
#include "sfess/estimators.hpp"
#include "sfess/metrics.hpp"
#include "sfess/poibin.hpp"
#include "sfess/subset.hpp"

namespace py = pybind11;
using namespace sfess;

namespace {

SubsetMask to_mask(const std::vector<int>& bits) {
  std::vector<std::uint8_t> v(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0 && bits[i] != 1) throw InvalidArgument("mask entries must be 0 or 1");
    v[i] = static_cast<std::uint8_t>(bits[i]);
  }
  return SubsetMask(std::move(v));
}

std::vector<int> to_bits(const SubsetMask& z) { return {z.bits().begin(), z.bits().end()}; }

poibin::DftMethod dft_method(const std::string& name) {
  if (name == "direct") return poibin::DftMethod::direct;
  if (name == "fft") return poibin::DftMethod::fft;
  if (name == "automatic") return poibin::DftMethod::automatic;
  throw InvalidArgument("method must be direct, fft or automatic");
}

std::vector<double> estimate(const SubsetDistribution& dist, const std::function<double(std::vector<int>)>& f,
                             std::size_t samples, Rng& rng, ScoreEstimator kind) {
  const Objective objective = [&](const SubsetMask& z, const DataExample&) { return f(to_bits(z)); };
  return score_function_grad(dist, objective, DataExample{}, samples, rng, kind).grad;
}

}  // namespace

PYBIND11_MODULE(_sfess, m) {
  m.doc() = "k-subset distributions and score-function gradient estimators";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto invalid = py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<InvalidSupport>(m, "InvalidSupport", invalid.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", invalid.ptr());
  py::register_exception<DegenerateDistribution>(m, "DegenerateDistribution", error.ptr());
  py::register_exception<TooLarge>(m, "TooLarge", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<ObjectiveError>(m, "ObjectiveError", error.ptr());

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("gumbel", &Rng::gumbel);

  m.def("pmf_dft", [](const std::vector<double>& theta, const std::string& method) {
    return poibin::pmf_dft(theta, dft_method(method));
  }, py::arg("theta"), py::arg("method") = "automatic");
  m.def("pmf_dp", [](const std::vector<double>& theta) { return poibin::pmf_dp(theta); }, py::arg("theta"));
  m.def("pmf_leave_one_out", [](const std::vector<double>& theta, std::size_t j) {
    return poibin::pmf_leave_one_out(theta, j);
  }, py::arg("theta"), py::arg("j"));
  m.def("leave_one_out_terms", [](const std::vector<double>& theta, std::size_t k) {
    auto t = poibin::leave_one_out_terms(theta, k);
    return py::make_tuple(t.below, t.at);
  }, py::arg("theta"), py::arg("k"));
  m.def("log_pmf_grad", [](const std::vector<double>& theta, std::size_t k) {
    return poibin::log_pmf_grad(theta, k);
  }, py::arg("theta"), py::arg("k"));

  py::class_<SubsetDistribution>(m, "SubsetDistribution")
      .def(py::init([](const std::vector<double>& theta, std::size_t k, bool cache) {
             return SubsetDistribution(theta, k, cache ? NormCache::eager : NormCache::none);
           }),
           py::arg("theta"), py::arg("k"), py::arg("cache") = true)
      .def_property_readonly("n", &SubsetDistribution::n)
      .def_property_readonly("k", &SubsetDistribution::k)
      .def_property_readonly("theta", [](const SubsetDistribution& d) {
        return std::vector<double>(d.theta().begin(), d.theta().end());
      })
      .def("log_normalizer", &SubsetDistribution::log_normalizer)
      .def("log_prob", [](const SubsetDistribution& d, const std::vector<int>& z) { return d.log_prob(to_mask(z)); })
      .def("prob", [](const SubsetDistribution& d, const std::vector<int>& z) { return d.prob(to_mask(z)); })
      .def("score", [](const SubsetDistribution& d, const std::vector<int>& z) { return d.score(to_mask(z)); })
      .def("sample", [](const SubsetDistribution& d, Rng& rng) { return to_bits(d.sample(rng)); })
      .def("marginals", &SubsetDistribution::marginals)
      .def("enumerate_support", [](const SubsetDistribution& d) {
        std::vector<std::pair<std::vector<int>, double>> out;
        for (const auto& [z, p] : enumerate_support(d)) out.emplace_back(to_bits(z), p);
        return out;
      });

  m.def("sfess_grad", [](const SubsetDistribution& d, const std::function<double(std::vector<int>)>& f,
                         std::size_t samples, Rng& rng) { return estimate(d, f, samples, rng, ScoreEstimator::vanilla); },
        py::arg("dist"), py::arg("f"), py::arg("samples"), py::arg("rng"));
  m.def("sfess_v_grad", [](const SubsetDistribution& d, const std::function<double(std::vector<int>)>& f,
                           std::size_t samples, Rng& rng) { return estimate(d, f, samples, rng, ScoreEstimator::loo_baseline); },
        py::arg("dist"), py::arg("f"), py::arg("samples"), py::arg("rng"));

  py::class_<baselines::RelaxedSubset>(m, "RelaxedSubset")
      .def_readonly("weights", &baselines::RelaxedSubset::weights)
      .def_readonly("temperature", &baselines::RelaxedSubset::temperature)
      .def_readonly("k", &baselines::RelaxedSubset::k);
  m.def("gumbel_topk_relaxed", [](const std::vector<double>& logits, std::size_t k, double tau, Rng& rng) {
    return baselines::gumbel_topk_relaxed(logits, k, tau, rng);
  }, py::arg("logits"), py::arg("k"), py::arg("tau"), py::arg("rng"));
  m.def("relaxed_backward", [](const baselines::RelaxedSubset& r, const std::vector<double>& g) {
    return baselines::relaxed_backward(r, g);
  });
  m.def("straight_through", [](const baselines::RelaxedSubset& r) { return to_bits(baselines::straight_through(r)); });
  m.def("temperature_schedule", &baselines::temperature_schedule, py::arg("step"), py::arg("total_steps"),
        py::arg("start") = 1.0, py::arg("end") = 0.01);
  m.def("top_k", [](const std::vector<double>& scores, std::size_t k) { return to_bits(top_k(scores, k)); });

  m.def("metric_psnr", [](const std::vector<double>& p, const std::vector<double>& t) { return metric_psnr(p, t); });
  m.def("metric_accuracy", [](const std::vector<int>& p, const std::vector<int>& l) { return metric_accuracy(p, l); });
}
