#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "kinet/dataio.hpp"
#include "kinet/predictor.hpp"
#include "kinet/selftest.hpp"

namespace py = pybind11;
using namespace kinet;

namespace {

const RobotModel& robot() {
  static const RobotModel r = default_robot();
  return r;
}

std::array<std::array<double, 4>, 4> rows_of(const HomTransform& h) {
  const std::array<double, 16> m = h.matrix();
  std::array<std::array<double, 4>, 4> out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out[i][j] = m[4 * i + j];
  return out;
}

py::dict record_dict(const DatasetRecord& r) {
  py::dict d;
  d["task_id"] = r.task_id;
  d["target"] = r.target.values();
  d["chassis"] = std::array<double, 3>{r.witness_chassis.psi, r.witness_chassis.x, r.witness_chassis.y};
  d["joints"] = r.witness_joints;
  return d;
}

class PyCheckpoint {
 public:
  explicit PyCheckpoint(const std::string& path) : ck_(load_checkpoint(path, robot().table)) {}

  std::string kind() const { return model_name(ck_.kind); }

  py::dict predict(const std::array<double, 6>& pose, int max_attempts, std::uint64_t seed) const {
    Rng rng(seed, Stream::Dropout, 0);
    const PredictResult r = predict_with_resampling(ck_, pose_from_array(pose), max_attempts, rng, robot());
    py::dict d;
    d["success"] = r.success;
    d["attempts"] = r.attempts;
    d["chassis"] = std::array<double, 3>{r.config.chassis.psi, r.config.chassis.x, r.config.chassis.y};
    d["joints"] = r.config.joints;
    d["reason"] = std::string(reason_name(r.last_reason));
    return d;
  }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_kinet, m) {
  m.doc() = "UR10e mobile-manipulator kinematics and configuration predictors";

  m.def(
      "fk", [](const JointVector& q) { return rows_of(fk_chain(q, robot().table)); }, py::arg("joints"),
      "Flange pose in the arm base frame as a 4x4 nested list.");

  m.def(
      "analytic_ik",
      [](const std::array<double, 6>& pose) {
        const SolutionSet<double> s = analytic_ik(pose_to_hom(pose_from_array(pose)), robot().table);
        py::list out;
        for (int b = 0; b < kBranches; ++b) {
          py::dict d;
          d["joints"] = s.wrapped[b];
          d["valid"] = static_cast<bool>(s.branch_valid[b]);
          d["ideal"] = s.ideal(b);
          out.append(d);
        }
        return out;
      },
      py::arg("pose"), "Eight closed-form branches for pose (phi, theta, psi, x, y, z) in the base frame.");

  m.def(
      "acos_extended", [](double x, double delta) { return ad::acos_extended(x, delta); }, py::arg("x"),
      py::arg("delta") = ad::kDefaultDomainMargin);

  m.def("reach_annulus", [] { return std::pair{robot().reach.r_min, robot().reach.r_max}; });

  m.def(
      "generate_dataset",
      [](std::size_t n, std::uint64_t seed) {
        const DatasetFile f = generate_dataset(n, seed, DataGenConfig{}, robot());
        py::list out;
        for (const DatasetRecord& r : f.records) out.append(record_dict(r));
        return out;
      },
      py::arg("n"), py::arg("seed") = 1);

  m.def(
      "chassis_verdict",
      [](const std::array<double, 3>& chassis, const std::array<double, 6>& target) {
        const FeasibilityVerdict v =
            chassis_verdict(ChassisPose{chassis[0], chassis[1], chassis[2]}, pose_from_array(target), robot());
        return std::pair{v.valid, std::string(reason_name(v.reason))};
      },
      py::arg("chassis"), py::arg("target"), "(valid, reason) for chassis (psi, x, y) and a world target.");

  m.def(
      "selftest",
      [](int round_trips) {
        SelftestOptions o;
        o.round_trips = round_trips;
        const SelftestReport r = run_selftest(o);
        std::ostringstream os;
        r.print(os);
        return std::pair{r.passed(), os.str()};
      },
      py::arg("round_trips") = 200);

  py::class_<PyCheckpoint>(m, "Checkpoint")
      .def_property_readonly("kind", &PyCheckpoint::kind)
      .def("predict", &PyCheckpoint::predict, py::arg("pose"), py::arg("max_attempts") = 20, py::arg("seed") = 1);
  m.def(
      "load_checkpoint", [](const std::string& path) { return PyCheckpoint(path); }, py::arg("path"));

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
}
