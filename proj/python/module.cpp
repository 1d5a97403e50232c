#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "empathic/error.hpp"
#include "empathic/experiments.hpp"
#include "empathic/inference.hpp"
#include "empathic/planning.hpp"
#include "empathic/reaction_model.hpp"
#include "empathic/session.hpp"

namespace py = pybind11;
using namespace empathic;

namespace {

ObjectType object_arg(const std::string& s) {
  const auto t = parse_object_type(s);
  if (!t) throw InvalidArgument("unknown object type: " + s);
  return *t;
}

RewardSpec spec_arg(const std::array<int, 3>& v) { return RewardSpec::from_values(v[0], v[1], v[2]); }

py::dict metrics_dict(const TickMetrics& m) {
  py::dict d;
  d["tick"] = m.tick;
  d["posterior"] = m.posterior;
  d["entropy"] = m.entropy;
  d["cumulative_return"] = m.cumulative_return;
  d["tau"] = m.tau;
  d["map_index"] = m.map_index;
  d["policy_index"] = m.policy_index;
  d["updates"] = m.updates;
  return d;
}

// Model weights shared between sessions.
struct Model {
  std::shared_ptr<const ModelParams> params;
  WindowConfig window;
};

}  // namespace

PYBIND11_MODULE(_empathic, m) {
  m.doc() = "Gridworld agent that learns a reward ranking from an observer's facial reactions.";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", base.ptr());
  static py::exception<IntegrityError> integrity(m, "IntegrityError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      invalid(e.what());
    } catch (const IntegrityError& e) {
      integrity(e.what());
    } catch (const Error& e) {
      base(e.what());
    }
  });

  m.attr("DISCOUNT") = kDiscount;

  m.def("rankings", [] {
    std::vector<std::array<int, 3>> out;
    for (const auto& r : all_rankings()) out.push_back(r.values());
    return out;
  }, "The six candidate rankings as (passenger, roadblock, parked car) values.");
  m.def("ranking_index", [](const std::array<int, 3>& v) { return ranking_index(spec_arg(v)); });

  m.def("plan_values", [](std::uint64_t seed, const std::array<int, 3>& spec) {
    const auto state = new_episode(seed, spec_arg(spec));
    const auto map = static_snapshot(state);
    const auto v = value_iterate(map, object_rewards(spec_arg(spec)));
    py::array_t<double> out(static_cast<py::ssize_t>(v.values().size()));
    std::copy(v.values().begin(), v.values().end(), out.mutable_data());
    return py::make_tuple(out, v.residual(), v.sweeps());
  }, py::arg("seed"), py::arg("spec") = std::array<int, 3>{6, -1, -5},
     "Value iteration on the frozen start map of a seeded episode: (values, residual, sweeps).");

  py::class_<Belief>(m, "Belief")
      .def(py::init([](const std::string& space) {
             const auto s = parse_hypothesis_space(space);
             if (!s) throw InvalidArgument("unknown hypothesis space: " + space);
             return Belief(*s);
           }),
           py::arg("space") = "permutations")
      .def("update", [](Belief& b, const std::string& object, const std::array<double, 3>& p, double floor) {
             b.update(object_arg(object), p, floor);
           }, py::arg("object"), py::arg("probabilities"), py::arg("floor") = kLikelihoodFloor)
      .def_property_readonly("probabilities", &Belief::probabilities)
      .def_property_readonly("entropy", &Belief::entropy)
      .def_property_readonly("updates", &Belief::updates)
      .def_property_readonly("map_index", [](const Belief& b) { return map_index(b); });

  m.def("kendall_tau", [](const std::vector<double>& a, const std::vector<double>& b, bool tie_corrected, bool one_sided) {
    const auto r = kendall_tau(a, b, tie_corrected, one_sided);
    return py::make_tuple(r.defined ? py::object(py::float_(r.tau)) : py::none(), r.p_value);
  }, py::arg("a"), py::arg("b"), py::arg("tie_corrected") = false, py::arg("one_sided") = false);
  m.def("wilcoxon_signed_rank", &wilcoxon_signed_rank, py::arg("values"), py::arg("null_median") = 0.0,
        py::arg("one_sided") = false);
  m.def("binomial_test", &binomial_test, py::arg("k"), py::arg("n"), py::arg("p0") = 0.5, py::arg("one_sided") = true);

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::string& path) {
        auto ck = load_checkpoint_file(path);
        return Model{std::make_shared<const ModelParams>(std::move(ck.params)), ck.config.window};
      })
      .def_static("random", [](std::uint64_t seed) {
        const WindowConfig w;
        return Model{std::make_shared<const ModelParams>(ModelParams::init(ModelConfig::for_window(w), seed)), w};
      }, py::arg("seed") = 0, "Untrained weights; useful for wiring tests.")
      .def_property_readonly("parameter_count", [](const Model& md) { return md.params->size(); })
      .def("describe", [](const Model& md) { return md.params->describe(); });

  py::class_<OnlineSession>(m, "Session")
      .def(py::init([](const Model& md, const std::string& config_json) {
             return std::make_unique<OnlineSession>(session_config_from_json(config_json), md.params, md.window);
           }), py::arg("model"), py::arg("config") = "{}")
      .def("step", [](OnlineSession& s) { s.step(); })
      .def("run", [](OnlineSession& s) {
        while (!s.finished()) s.step();
      })
      .def("inject_gesture", [](OnlineSession& s, const std::string& kind) {
        const auto k = parse_gesture_kind(kind);
        if (!k) throw InvalidArgument("unknown gesture: " + kind);
        const auto g = s.inject_gesture(*k);
        return py::make_tuple(g.onset_frame, g.offset_frame);
      })
      .def_property_readonly("finished", &OnlineSession::finished)
      .def_property_readonly("tick", [](const OnlineSession& s) { return s.state().tick; })
      .def_property_readonly("total_reward", [](const OnlineSession& s) { return s.log().total_reward(); })
      .def_property_readonly("posterior", [](const OnlineSession& s) { return s.belief().probabilities(); })
      .def_property_readonly("frames_produced", &OnlineSession::frames_produced)
      .def_property_readonly("metrics", [](const OnlineSession& s) {
        py::list out;
        for (const auto& x : s.metrics()) out.append(metrics_dict(x));
        return out;
      })
      .def("record", [](const OnlineSession& s) {
        std::ostringstream os;
        write_session_record(os, s.record());
        return os.str();
      }, "The session record as JSON lines.");

  m.def("replay", [](const Model& md, const std::string& record) {
    std::istringstream is(record);
    const auto r = replay_session(read_session_record(is), md.params, md.window);
    py::list out;
    for (const auto& x : r.metrics) out.append(metrics_dict(x));
    return out;
  }, py::arg("model"), py::arg("record"), "Re-runs a recorded session; returns its per-tick metrics.");

  m.def("online_batch", [](const Model& md, const std::string& config_json, int sessions, int baseline_episodes) {
    py::gil_scoped_release nogil;
    return online_batch_json(run_online_batch(session_config_from_json(config_json), md.params, md.window, sessions,
                                              baseline_episodes));
  }, py::arg("model"), py::arg("config") = "{}", py::arg("sessions") = 10, py::arg("baseline_episodes") = 100);
}
