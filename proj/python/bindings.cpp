#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "orientmp/cli.hpp"
#include "orientmp/verify.hpp"

namespace py = pybind11;
using namespace orientmp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Shape& shape, std::span<const double> values) {
  std::vector<py::ssize_t> dims(shape.begin(), shape.end());
  py::array_t<double> out(dims);
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_numpy(const Tensor& t) { return to_numpy(t.shape(), t.data()); }

Points to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ShapeError("expected an [N, 3] array");
  Points p(a.shape(0), 3);
  std::copy_n(a.data(), a.size(), p.data());
  return p;
}

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_data(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

PointCloud make_cloud(const Array& points, const std::optional<Array>& velocities, const std::optional<Array>& charges) {
  PointCloud c;
  c.points = to_points(points);
  if (velocities) c.velocities = to_points(*velocities);
  if (charges) {
    c.charges.resize(charges->size());
    std::copy_n(charges->data(), charges->size(), c.charges.data());
  }
  return c;
}

py::dict dataset_to_dict(const DatasetFile& f) {
  py::dict records;
  for (const auto& r : f.records) records[py::str(r.name)] = to_numpy(r.shape, r.values);
  py::dict d;
  d["kind"] = to_string(f.kind);
  d["seed"] = f.seed;
  d["metadata"] = f.metadata;
  d["records"] = records;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Rotation-invariant point-cloud message passing with learned orientations";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "gram_schmidt",
      [](const Array& v1, const Array& v2) { return to_numpy(gram_schmidt(to_tensor(v1), to_tensor(v2)).frames); },
      py::arg("v1"), py::arg("v2"), "Orthonormal frames [N, 3, 3] with columns u1, u2, u1 x u2.");

  m.def(
      "knn",
      [](const Array& points, std::size_t k) {
        const KnnGraph g = knn(to_points(points), k);
        py::array_t<std::int64_t> out({static_cast<py::ssize_t>(g.idx.shape[0]), static_cast<py::ssize_t>(k)});
        std::copy(g.idx.data.begin(), g.idx.data.end(), out.mutable_data());
        return out;
      },
      py::arg("points"), py::arg("k"));

  m.def(
      "fps", [](const Array& points, std::size_t count) { return fps(to_points(points), count); }, py::arg("points"),
      py::arg("count"));

  m.def(
      "sample_rotation",
      [](std::uint64_t seed) {
        Rng rng(seed);
        return Mat3(sample_rotation(rng).rotation);
      },
      py::arg("seed"), "Uniform random rotation matrix.");

  m.def(
      "simulate_nbody",
      [](std::uint64_t seed, std::size_t particles, std::size_t steps, double dt) {
        Rng rng(seed);
        const NBodyTrajectory t = simulate_nbody(rng, particles, steps, dt);
        const std::size_t frames = t.positions.size();
        py::array_t<double> x({frames, particles, std::size_t{3}});
        py::array_t<double> v({frames, particles, std::size_t{3}});
        for (std::size_t s = 0; s < frames; ++s) {
          std::copy_n(t.positions[s].data(), particles * 3, x.mutable_data() + s * particles * 3);
          std::copy_n(t.velocities[s].data(), particles * 3, v.mutable_data() + s * particles * 3);
        }
        return py::make_tuple(x, v, Eigen::VectorXd(t.charges));
      },
      py::arg("seed"), py::arg("particles") = 5, py::arg("steps") = 100, py::arg("dt") = kDefaultDt,
      "Returns (positions [T, N, 3], velocities [T, N, 3], charges [N]).");

  m.def(
      "gen_shapes",
      [](std::uint64_t seed, std::size_t per_class, std::size_t points, double noise, const std::string& rotation) {
        return dataset_to_dict(gen_shapes(seed, {per_class, points, noise, parse_rotation_mode(rotation)}));
      },
      py::arg("seed"), py::arg("per_class") = 4, py::arg("points") = 64, py::arg("noise") = 0.0,
      py::arg("rotation") = "none");

  m.def(
      "read_dataset", [](const std::string& path) { return dataset_to_dict(read_dataset(path)); }, py::arg("path"));

  py::class_<OrientationNet>(m, "OrientationNet")
      .def(py::init([](std::uint64_t seed, std::size_t layers, std::size_t scalars, std::size_t vectors,
                       std::size_t k) {
             Rng rng(seed);
             return OrientationNet::init({layers, scalars, vectors, k, 1}, rng);
           }),
           py::arg("seed") = 0, py::arg("layers") = 3, py::arg("scalar_channels") = 32,
           py::arg("vector_channels") = 8, py::arg("k") = 16)
      .def(
          "frames",
          [](const OrientationNet& net, const Array& points) {
            NoGradGuard guard;
            const Points p = to_points(points);
            return to_numpy(learn_orientations(net, p, knn(p, net.config.k)).frames);
          },
          py::arg("points"), "Per-point frames [N, 3, 3].");

  py::class_<TaskModel>(m, "Model")
      .def(py::init([](const std::string& config_json, std::uint64_t seed) {
             return TaskModel::init(parse_run_config(config_json).model, seed);
           }),
           py::arg("config_json") = "{}", py::arg("seed") = 0)
      .def_property_readonly("task", [](const TaskModel& mdl) { return to_string(mdl.config.task); })
      .def_property_readonly("num_parameters",
                             [](const TaskModel& mdl) {
                               std::size_t n = 0;
                               for (const auto& p : mdl.parameters()) n += p.tensor.numel();
                               return n;
                             })
      .def(
          "forward",
          [](const TaskModel& mdl, const Array& points, const std::optional<Array>& velocities,
             const std::optional<Array>& charges) {
            NoGradGuard guard;
            return to_numpy(model_forward(mdl, make_cloud(points, velocities, charges)).prediction);
          },
          py::arg("points"), py::arg("velocities") = std::nullopt, py::arg("charges") = std::nullopt)
      .def(
          "frames",
          [](const TaskModel& mdl, const Array& points, const std::optional<Array>& velocities,
             const std::optional<Array>& charges) {
            NoGradGuard guard;
            return to_numpy(model_forward(mdl, make_cloud(points, velocities, charges)).backbone.frames.front().frames);
          },
          py::arg("points"), py::arg("velocities") = std::nullopt, py::arg("charges") = std::nullopt);

  m.def(
      "verify",
      [](const std::string& config_json, std::uint64_t seed, std::size_t trials, std::size_t points) {
        VerifyOptions o;
        o.audit.seed = seed;
        o.audit.trials = trials;
        o.audit.points = points;
        o.gradients.seed = seed;
        o.gradients.sampled = 50;
        o.orthogonality_draws = 1000;
        return run_verification(parse_run_config(config_json), o).to_json();
      },
      py::arg("config_json") = R"({"task": "normals"})", py::arg("seed") = 0, py::arg("trials") = 3,
      py::arg("points") = 48, "Runs the audits and returns the JSON report.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command line in-process; returns (exit_code, stdout, stderr).");
}
