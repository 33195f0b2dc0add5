// Model-scale check: a fixture extracted from a small pretrained model must
// show the immediate-tip sign (x >= 0, n* = 0) at the penultimate layer.
// The fixture path comes from TIPPING_MODEL_FIXTURE, else
// fixtures/small_model.hsf; without one the test reports a skip (77).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "tipping/basin_geometry.hpp"
#include "tipping/state_io.hpp"

using namespace tipping;

int main() {
    std::filesystem::path path = std::filesystem::path(TIPPING_FIXTURE_DIR) / "small_model.hsf";
    if (const char* env = std::getenv("TIPPING_MODEL_FIXTURE")) path = env;
    if (!std::filesystem::exists(path)) {
        std::printf("SKIP  model-scale fixtures: %s not found\n", path.string().c_str());
        return 77;
    }
    try {
        const auto set = hsf::load_hsf(path);
        const std::size_t layer = hsf::penultimate_layer(set);
        const auto forecast = geometry::classify_timing(geometry::conversation_state_at(set, layer),
                                                        geometry::basin_pair_at(set, layer));
        const bool ok = forecast.kind == geometry::TipCase::Immediate && forecast.n_star == 0.0;
        std::printf("%s  small-model n* = 0 at penultimate layer %zu: x = %.6g, case %s\n", ok ? "PASS" : "FAIL",
                    layer, forecast.x, std::string(geometry::to_string(forecast.kind)).c_str());
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::printf("FAIL  model-scale fixtures: %s\n", e.what());
        return 1;
    }
}
