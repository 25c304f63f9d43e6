#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "wdci/checkpoint.hpp"
#include "wdci/cli.hpp"
#include "wdci/config.hpp"
#include "wdci/errors.hpp"
#include "wdci/losses.hpp"
#include "wdci/net.hpp"
#include "wdci/trainer.hpp"
#include "wdci/wavelet.hpp"

namespace py = pybind11;
using namespace wdci;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 4) throw ShapeError("expected an NCHW array, got " + std::to_string(a.ndim()) + " dimensions");
  Tensor t({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
            static_cast<int>(a.shape(3))});
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

Array to_array(const Tensor& t) {
  const Shape& s = t.shape();
  Array a({s.n, s.c, s.h, s.w});
  std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
  return a;
}

py::dict bands_dict(const WaveletBands& b) {
  py::dict d;
  d["cA"] = to_array(b.cA);
  d["cH"] = to_array(b.cH);
  d["cV"] = to_array(b.cV);
  d["cD"] = to_array(b.cD);
  return d;
}

RunConfig run_config(const std::map<std::string, std::string>& settings) {
  RunConfig cfg;
  for (const auto& [k, v] : settings) set_config_key(cfg, k, v);
  return cfg;
}

Dataset dataset_for(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return build_dataset(cfg.data_dir, cfg.manifest, cfg.dataset_options());
  if (cfg.synthetic_pairs > 0)
    return synthetic_dataset(cfg.synthetic_pairs, cfg.synthetic_size, cfg.synthetic_size, cfg.dataset_options());
  throw ConfigError("no dataset: set data_dir or synthetic_pairs");
}

py::dict breakdown_dict(const LossBreakdown& b) {
  py::dict d;
  d["l_fre"] = b.l_fre;
  d["l_spa"] = b.l_spa;
  d["l_fre_1_8"] = b.l_fre_1_8;
  d["l_spa_1_8"] = b.l_spa_1_8;
  d["l_vgg_1_8"] = b.l_vgg_1_8;
  d["total"] = b.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_wdci, m) {
  m.doc() = "Wavelet-decoupled stereo low-light enhancement";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ArgumentError>(m, "ArgumentError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<StructureError>(m, "StructureError", base);
  py::register_exception<IngestionError>(m, "IngestionError", base);
  py::register_exception<IoError>(m, "IoError", base);

  m.def(
      "decompose",
      [](const Array& x, int levels) {
        const WaveletPyramid p = decompose(to_tensor(x), levels);
        py::list lv;
        for (const auto& b : p.levels) lv.append(bands_dict(b));
        py::dict d;
        d["levels"] = lv;
        d["pad_bottom"] = p.pad_bottom;
        d["pad_right"] = p.pad_right;
        return d;
      },
      py::arg("x"), py::arg("levels"), "Multi-level Haar pyramid of an NCHW array.");
  m.def(
      "reconstruct",
      [](const py::dict& d) {
        WaveletPyramid p;
        for (const auto& item : d["levels"].cast<py::list>()) {
          const auto b = item.cast<py::dict>();
          p.levels.push_back({to_tensor(b["cA"].cast<Array>()), to_tensor(b["cH"].cast<Array>()),
                              to_tensor(b["cV"].cast<Array>()), to_tensor(b["cD"].cast<Array>())});
        }
        p.pad_bottom = d["pad_bottom"].cast<int>();
        p.pad_right = d["pad_right"].cast<int>();
        return to_array(reconstruct(p));
      },
      py::arg("pyramid"));
  m.def(
      "low_frequency_exchange",
      [](const Array& low, const Array& normal, int levels) {
        const auto [s_normal, s_low] = low_frequency_exchange(to_tensor(low), to_tensor(normal), levels);
        return py::make_tuple(to_array(s_normal), to_array(s_low));
      },
      py::arg("low"), py::arg("normal"), py::arg("levels"), "Returns (s_normal, s_low).");
  m.def(
      "psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_tensor(a), to_tensor(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def(
      "ssim",
      [](const Array& a, const Array& b, int window) {
        ops::SsimOptions o;
        o.window = window;
        return ssim(to_tensor(a), to_tensor(b), o);
      },
      py::arg("a"), py::arg("b"), py::arg("window") = 11);
  m.def(
      "synthesize_scene",
      [](int height, int width, std::uint64_t seed) {
        const StereoPair p = synthesize_scene(height, width, seed);
        return py::make_tuple(to_array(p.left), to_array(p.right));
      },
      py::arg("height"), py::arg("width"), py::arg("seed") = 0);
  m.def(
      "degrade",
      [](const Array& left, const Array& right, double gamma, double gain, double read_noise, double shot_noise,
         std::uint64_t seed) {
        DegradationParams p;
        p.gamma = gamma;
        p.gain = gain;
        p.read_noise_sigma = read_noise;
        p.shot_noise_scale = shot_noise;
        p.seed = seed;
        const StereoPair out = degrade({to_tensor(left), to_tensor(right)}, p);
        return py::make_tuple(to_array(out.left), to_array(out.right));
      },
      py::arg("left"), py::arg("right"), py::arg("gamma") = 2.2, py::arg("gain") = 0.2, py::arg("read_noise") = 0.0,
      py::arg("shot_noise") = 0.0, py::arg("seed") = 0);
  m.def(
      "lr_at",
      [](int epoch, const std::map<std::string, std::string>& settings) {
        return lr_at(epoch, run_config(settings).train);
      },
      py::arg("epoch"), py::arg("settings") = std::map<std::string, std::string>{});
  m.def("ablation_names", &ablation_names);
  m.def("config_keys", &config_keys);
  m.def(
      "resolved_config", [](const std::map<std::string, std::string>& s) { return resolved_config(run_config(s)); },
      py::arg("settings") = std::map<std::string, std::string>{});

  py::class_<WdciNet, std::shared_ptr<WdciNet>>(m, "Net")
      .def(py::init([](const std::map<std::string, std::string>& settings, std::uint64_t seed) {
             return std::make_shared<WdciNet>(run_config(settings).train.net, seed);
           }),
           py::arg("settings") = std::map<std::string, std::string>{}, py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return std::shared_ptr<WdciNet>(load_checkpoint(path)); },
          py::arg("path"))
      .def(
          "save",
          [](const WdciNet& net, const std::string& path) {
            CheckpointMeta meta;
            meta.net = net.config();
            save_checkpoint(path, net, meta);
          },
          py::arg("path"))
      .def_property_readonly("param_count", [](const WdciNet& n) { return n.params().scalar_count(); })
      .def_property_readonly("config_hash", [](const WdciNet& n) { return hash_hex(n.config().hash()); })
      .def_property_readonly("levels", [](const WdciNet& n) { return n.config().levels; })
      .def(
          "forward",
          [](const WdciNet& net, const Array& left, const Array& right) {
            NetOutput o;
            {
              NoGradGuard guard;
              o = net.forward(to_tensor(left), to_tensor(right));
            }
            py::dict d;
            d["left"] = to_array(o.enhanced_left.value());
            d["right"] = to_array(o.enhanced_right.value());
            d["lowfreq_left"] = to_array(o.lowfreq_left.value());
            d["lowfreq_right"] = to_array(o.lowfreq_right.value());
            py::list att;
            for (const auto& a : o.attention) att.append(py::make_tuple(to_array(a.t_l2r.value()), to_array(a.t_r2l.value())));
            d["attention"] = att;
            return d;
          },
          py::arg("left"), py::arg("right"), "Raw forward pass; sides must be multiples of 2^levels.")
      .def(
          "enhance",
          [](const WdciNet& net, const Array& left, const Array& right) {
            const StereoPair e = enhance(net, to_tensor(left), to_tensor(right));
            return py::make_tuple(to_array(e.left), to_array(e.right));
          },
          py::arg("left"), py::arg("right"), "Any size; output clamped to [0, 1].");

  m.def(
      "train",
      [](const std::map<std::string, std::string>& settings, const std::string& out_dir) {
        RunConfig cfg = run_config(settings);
        cfg.train.out_dir = out_dir;
        const Dataset ds = dataset_for(cfg);
        CheckpointSeries s;
        {
          py::gil_scoped_release release;
          s = train(cfg.train, ds);
        }
        py::list log;
        for (const auto& r : s.log) {
          py::dict d;
          d["epoch"] = r.epoch;
          d["lr"] = r.lr;
          d["steps"] = r.steps;
          d["train"] = breakdown_dict(r.train);
          if (r.val_psnr_l) d["val_psnr_l"] = *r.val_psnr_l;
          if (r.val_psnr_r) d["val_psnr_r"] = *r.val_psnr_r;
          log.append(d);
        }
        py::dict out;
        out["log"] = log;
        out["step_losses"] = s.step_losses;
        out["best_epoch"] = s.best_epoch;
        out["best"] = s.best;
        out["last"] = s.last;
        return out;
      },
      py::arg("settings"), py::arg("out_dir") = std::string(),
      "Trains on the configured dataset; settings use the flat config keys.");
}
