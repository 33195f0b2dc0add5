#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tipping/basin_geometry.hpp"
#include "tipping/cli.hpp"
#include "tipping/error.hpp"
#include "tipping/forecast_service.hpp"
#include "tipping/regime.hpp"
#include "tipping/state_io.hpp"
#include "tipping/toy_transformer.hpp"

namespace py = pybind11;
using namespace tipping;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::dict forecast_dict(const geometry::TipForecast& f) {
    py::dict d;
    d["case"] = std::string(geometry::to_string(f.kind));
    d["x"] = f.x;
    d["b_drive"] = f.b_drive;
    d["n_star"] = f.n_star;
    d["n_star_ceil"] = f.n_star_ceil ? py::cast(*f.n_star_ceil) : py::none();
    d["saturated"] = f.saturated;
    return d;
}

py::tuple set_to_tuple(const hsf::LabeledStateSet& set) {
    py::list groups;
    for (const auto& g : set.groups) {
        FloatArray data({set.layer_count, g.token_count, set.dim});
        std::copy(g.data.begin(), g.data.end(), data.mutable_data());
        groups.append(py::make_tuple(std::string(hsf::to_string(g.label)), g.phrase, data));
    }
    return py::make_tuple(set.dim, set.layer_count, set.meta.dump(), groups);
}

hsf::LabeledStateSet set_from_parts(std::size_t dim, std::size_t layer_count, const std::string& meta_json,
                                    const std::vector<std::tuple<std::string, std::string, FloatArray>>& groups) {
    hsf::LabeledStateSet set;
    set.dim = dim;
    set.layer_count = layer_count;
    set.meta = nlohmann::json::parse(meta_json);
    for (const auto& [label, phrase, data] : groups) {
        if (data.ndim() != 3 || static_cast<std::size_t>(data.shape(0)) != layer_count ||
            static_cast<std::size_t>(data.shape(2)) != dim) {
            throw Error(ErrorKind::ShapeMismatch, "group \"" + phrase + "\" must have shape (layers, tokens, dim)");
        }
        hsf::Group g;
        g.label = hsf::parse_label(label);
        g.phrase = phrase;
        g.token_count = static_cast<std::size_t>(data.shape(1));
        g.data.assign(data.data(), data.data() + data.size());
        set.groups.push_back(std::move(g));
    }
    set.validate();
    return set;
}

}  // namespace

PYBIND11_MODULE(_tipping, m) {
    m.doc() = "Tipping forecasts, hidden-state fixtures and regime classification";

    py::register_exception<Error>(m, "TippingError", PyExc_ValueError);

    m.def("tip_forecast",
          [](const Vector& c, const Vector& b, const Vector& d) { return forecast_dict(geometry::tip_forecast(c, b, d)); },
          py::arg("c"), py::arg("b"), py::arg("d"));

    m.def("load_hsf", [](const std::filesystem::path& path) { return set_to_tuple(hsf::load_hsf(path)); },
          py::arg("path"));
    m.def("save_hsf",
          [](const std::filesystem::path& path, std::size_t dim, std::size_t layer_count, const std::string& meta_json,
             const std::vector<std::tuple<std::string, std::string, FloatArray>>& groups) {
              return hsf::save_hsf(set_from_parts(dim, layer_count, meta_json, groups), path);
          },
          py::arg("path"), py::arg("dim"), py::arg("layer_count"), py::arg("meta_json"), py::arg("groups"));

    m.def("basin_pair",
          [](const std::filesystem::path& path, std::optional<std::size_t> layer) {
              const auto set = hsf::load_hsf(path);
              const auto pair = geometry::basin_pair_at(set, layer.value_or(hsf::penultimate_layer(set)));
              return py::make_tuple(pair.layer, pair.b, pair.d);
          },
          py::arg("path"), py::arg("layer") = py::none());

    m.def("replay",
          [](const std::filesystem::path& conversation, std::int64_t warn_threshold_n,
             std::optional<std::filesystem::path> basins, std::optional<std::size_t> layer) {
              const auto set = hsf::load_hsf(conversation);
              const auto basin_set = basins ? hsf::load_hsf(*basins) : set;
              const auto pair = geometry::basin_pair_at(basin_set, layer.value_or(hsf::penultimate_layer(basin_set)));
              py::list rows;
              for (const auto& e : service::replay(set, pair, warn_threshold_n)) {
                  py::dict row = forecast_dict(e.forecast);
                  row["turn_index"] = e.turn_index;
                  row["role"] = e.role;
                  row["warning"] = e.warning;
                  rows.append(row);
              }
              return rows;
          },
          py::arg("conversation"), py::arg("warn_threshold_n") = 3, py::arg("basins") = py::none(),
          py::arg("layer") = py::none());

    m.def("iterate_map",
          [](double lambda, double rho, double sigma, double x0, std::size_t steps, std::uint64_t seed) {
              return regime::iterate_map({lambda, rho, sigma, x0, steps, seed});
          },
          py::arg("lam"), py::arg("rho") = 1.0, py::arg("sigma") = 0.0, py::arg("x0") = 0.0, py::arg("steps") = 1,
          py::arg("seed") = 0);

    m.def("classify_letters",
          [](const std::string& letters) {
              auto t = regime::from_symbol_string(letters);
              return regime::to_string(regime::classify(t));
          },
          py::arg("letters"));

    m.def("toy_tip_steps",
          [](const std::string& preset, std::uint64_t first_seed, std::uint64_t last_seed) {
              const auto e = toy::make_case_two_fixture({});
              const toy::NamedConfig config{preset, toy::preset_config(toy::parse_preset(preset))};
              std::vector<std::optional<std::size_t>> steps;
              for (const auto& run : toy::seed_sweep(config, e, first_seed, last_seed).runs) steps.push_back(run.tip_step);
              return steps;
          },
          py::arg("preset"), py::arg("first_seed") = 0, py::arg("last_seed") = 49);

    m.def("run_cli",
          [](std::vector<std::string> args) {
              args.insert(args.begin(), "tipping");
              std::vector<const char*> argv;
              for (const auto& a : args) argv.push_back(a.c_str());
              std::ostringstream out, err;
              const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"));
}
