#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pla/association.hpp"
#include "pla/commands.hpp"
#include "pla/common.hpp"
#include "pla/eval.hpp"
#include "pla/geometry.hpp"
#include "pla/model.hpp"
#include "pla/synth.hpp"

namespace py = pybind11;

namespace {

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

pla::RunConfig make_config(const std::string& path, const py::dict& overrides) {
  pla::RunConfig cfg = pla::load_run_config(path);
  for (const auto& [k, v] : overrides) {
    std::string value;
    if (py::isinstance<py::bool_>(v))
      value = v.cast<bool>() ? "true" : "false";
    else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& x : v) value += (value.empty() ? "" : ",") + py::str(x).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    cfg.set(k.cast<std::string>(), value);
  }
  return cfg;
}

pla::ViewEntry make_view(const std::string& frame, std::vector<pla::PointIndex> points,
                         std::vector<std::string> words) {
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return {frame, {"scene", std::move(points)}, pla::EntitySet(std::move(words))};
}

}  // namespace

PYBIND11_MODULE(_pla, m) {
  m.doc() = "C++ core of the pla package";
  pla::init_logging();
  pla::tune_allocator();

  py::register_exception<pla::InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<pla::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("harmonic_mean_iou", &pla::harmonic_mean_iou, py::arg("miou_base"), py::arg("miou_novel"));

  m.def(
      "view_overlap",
      [](const pla::Points3& scene, const pla::Points3& back_projected, double voxel_size, double radius) {
        pla::PointCloud cloud;
        cloud.scene_id = "scene";
        cloud.positions = scene;
        cloud.colors = pla::Points3::Zero(scene.rows(), 3);
        cloud.labels.assign(static_cast<std::size_t>(scene.rows()), pla::kIgnored);
        return pla::view_overlap(cloud, back_projected, voxel_size, radius).indices;
      },
      py::arg("scene"), py::arg("back_projected"), py::arg("voxel_size") = 0.05, py::arg("radius") = 0.05,
      "Sorted indices of scene points near the back-projected points.");

  m.def(
      "extract_entities",
      [](const std::string& caption, std::vector<std::string> lexicon) {
        return pla::Lexicon(std::move(lexicon)).extract(caption).words();
      },
      py::arg("caption"), py::arg("lexicon"));

  m.def(
      "entity_pairs",
      [](std::vector<pla::PointIndex> points_i, std::vector<std::string> words_i,
         std::vector<pla::PointIndex> points_j, std::vector<std::string> words_j, int gamma, double delta) {
        const pla::EntityFilter filter{gamma, delta};
        filter.validate();
        py::list out;
        for (const auto& p : pla::entity_pairs(make_view("i", std::move(points_i), std::move(words_i)),
                                               make_view("j", std::move(points_j), std::move(words_j)), filter))
          out.append(py::make_tuple(p.points.indices, p.caption.text));
        return out;
      },
      py::arg("points_i"), py::arg("words_i"), py::arg("points_j"), py::arg("words_j"), py::arg("gamma") = 100,
      py::arg("delta") = 0.3, "(indices, caption) for each admissible difference or intersection.");

  m.def(
      "calibrate",
      [](const Eigen::MatrixXd& base_only, const Eigen::MatrixXd& novel_only, const Eigen::VectorXd& binary) {
        return pla::calibrate({base_only}, {novel_only}, binary).probs;
      },
      py::arg("base_only"), py::arg("novel_only"), py::arg("binary"));

  m.def(
      "evaluate",
      [](const std::vector<int>& predictions, const std::vector<int>& labels, std::vector<std::string> names,
         std::vector<bool> base_mask) {
        pla::CategoryList cats{std::move(names), std::move(base_mask)};
        cats.validate();
        pla::ConfusionMatrix cm(cats.size());
        cm.accumulate(predictions, labels);
        return parse_json(pla::report_to_json(pla::report(cm, cats)));
      },
      py::arg("predictions"), py::arg("labels"), py::arg("names"), py::arg("base_mask"),
      "Per-class IoU, base/novel/all mIoU and hIoU. Labels of -1 are ignored.");

  m.def(
      "synth",
      [](const std::string& out_dir, const std::optional<std::string>& spec) {
        pla::cmd_synth(spec ? pla::load_synth_spec(*spec) : pla::default_synth_spec(), out_dir);
      },
      py::arg("out_dir"), py::arg("spec") = py::none());

  m.def(
      "associate",
      [](const std::string& config, const py::dict& overrides) {
        return parse_json(pla::stats_to_json(pla::cmd_associate(make_config(config, overrides))));
      },
      py::arg("config"), py::arg("overrides") = py::dict());

  m.def(
      "train",
      [](const std::string& config, const py::dict& overrides) {
        const pla::RunConfig cfg = make_config(config, overrides);
        const auto out = pla::cmd_train(cfg);
        py::dict d;
        d["checkpoint"] = cfg.checkpoint_path();
        d["iterations"] = out.result.trace.size();
        if (!out.result.trace.empty()) {
          const auto& last = out.result.trace.back().loss;
          d["final_total"] = last.total;
          d["final_sem"] = last.parts.sem;
          d["final_bi"] = last.parts.bi;
        }
        return d;
      },
      py::arg("config"), py::arg("overrides") = py::dict());

  m.def(
      "eval_run",
      [](const std::string& config, const py::dict& overrides) {
        return parse_json(pla::report_to_json(pla::cmd_eval(make_config(config, overrides))));
      },
      py::arg("config"), py::arg("overrides") = py::dict());

  m.def("inspect", &pla::cmd_inspect, py::arg("path"));
}
