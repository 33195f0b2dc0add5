#include <doctest.h>

#include <fstream>
#include <thread>

#include <json.hpp>

#include "test_support.hpp"
#include "tipping/basin_geometry.hpp"
#include "tipping/error.hpp"
#include "tipping/forecast_service.hpp"
#include "tipping/random.hpp"

using namespace tipping;
using namespace tipping::service;
using geometry::TipCase;
using hsf::Label;

namespace {

Vector random_vector(Rng& rng, std::size_t dim) {
    Vector v(dim);
    for (auto& x : v) x = rng.normal();
    return v;
}

hsf::LabeledStateSet basin_set() {
    hsf::LabeledStateSet set;
    set.dim = 3;
    set.layer_count = 4;
    set.groups.push_back(test_support::constant_group(Label::B, "safe", {1, 0, 0}, 4, 2));
    set.groups.push_back(test_support::constant_group(Label::D, "unsafe", {1, 1, 0}, 4, 3));
    set.groups.push_back(test_support::constant_group(Label::C, "user: hi", {0, -1, 0.5f}, 4, 2));
    return set;
}

}  // namespace

TEST_CASE("sessions over a basin file") {
    test_support::TempDir dir;
    hsf::save_hsf(basin_set(), dir / "basins.hsf");
    SessionStore store;

    const std::string a = store.create_session(dir / "basins.hsf", 3);
    const std::string b = store.create_session(dir / "basins.hsf", 3);
    CHECK(a != b);
    CHECK(store.list() == std::vector<std::string>{a, b});
    const auto sa = store.snapshot(a), sb = store.snapshot(b);
    CHECK(sa.basins.layer == 2);
    CHECK(sa.basins.b == Vector{3, 0, 0});
    CHECK(sa.basins.b == sb.basins.b);
    CHECK(sa.basins.d == sb.basins.d);
    CHECK(store.trace(a).empty());
    CHECK(sa.running_c.empty());

    CHECK(store.snapshot(store.create_session(dir / "basins.hsf", 3, 0)).basins.b == Vector{1, 0, 0});

    auto no_d = basin_set();
    no_d.groups.erase(no_d.groups.begin() + 1);
    hsf::save_hsf(no_d, dir / "no_d.hsf");
    try {
        store.create_session(dir / "no_d.hsf", 3);
        FAIL("created a session without D");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingGroup);
        CHECK(std::string(e.what()).find("labelled D") != std::string::npos);
    }
    CHECK_THROWS_AS(store.create_session(dir / "absent.hsf", 3), Error);
}

TEST_CASE("turn forecasts") {
    SessionStore store;
    const auto basins = geometry::make_basin_pair(0, {1, 0}, {1.5, 1});
    const std::string id = store.create_session(basins, 2);

    SUBCASE("first turn at B delegates exactly") {
        const auto e = store.append_turn(id, "user", basins.b);
        CHECK(e.forecast == geometry::tip_forecast(basins.b, basins.b, basins.d));
        CHECK(e.forecast.x == 0.5);
        CHECK(e.turn_index == 0);
    }
    SUBCASE("opposite states cancel to an Immediate warning") {
        store.append_turn(id, "user", {-3, -0.25});
        const auto e = store.append_turn(id, "assistant", {3, 0.25});
        CHECK(store.snapshot(id).running_c == Vector{0, 0});
        CHECK(e.forecast.x == 0.0);
        CHECK(e.forecast.kind == TipCase::Immediate);
        CHECK(e.warning);
    }
    SUBCASE("warning threshold on the ceiling") {
        // n* = |x| / b_drive * exp(B.(C - B)) with B.(C - B) = c0 - 1
        const auto e = store.append_turn(id, "user", {1, -3});
        CHECK(e.forecast.kind == TipCase::Delayed);
        CHECK(e.forecast.n_star_ceil == 5);
        CHECK_FALSE(e.warning);
        CHECK(warning_for(e.forecast, 5));
        CHECK_FALSE(warning_for(e.forecast, 4));
        geometry::TipForecast never;
        never.kind = TipCase::Never;
        CHECK_FALSE(warning_for(never, 1000));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(store.append_turn("session-999", "user", {1, 0}), Error);
        CHECK_THROWS_AS(store.append_turn(id, "user", {1, 0, 0}), Error);
        CHECK_THROWS_AS(store.append_turn(id, "system", {1, 0}), Error);
        CHECK_THROWS_AS(store.append_turn(id, "user", {1, std::nan("")}), Error);
        try {
            store.trace("nope");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::UnknownSession);
        }
    }
}

TEST_CASE("forecasts equal direct library calls and ignore turn order") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 1 + rng.below(6);
        const auto basins = geometry::make_basin_pair(0, random_vector(rng, dim), random_vector(rng, dim));
        SessionStore store;
        const std::string id = store.create_session(basins, 3);
        std::vector<Vector> states;
        const std::size_t turns = 1 + rng.below(10);
        for (std::size_t k = 0; k < turns; ++k) {
            states.push_back(random_vector(rng, dim));
            const auto e = store.append_turn(id, k % 2 ? "assistant" : "user", states.back());
            CHECK(e.forecast == geometry::tip_forecast(mean_of(states), basins.b, basins.d));
        }
        auto permuted = states;
        rng.shuffle(std::span<Vector>(permuted));
        const std::string other = store.create_session(basins, 3);
        for (const auto& s : permuted) store.append_turn(other, "user", s);
        CHECK(store.trace(other).back().forecast == store.trace(id).back().forecast);
    }
}

TEST_CASE("re-appending the state that crossed the sign keeps the warning") {
    Rng rng(3);
    const auto basins = geometry::make_basin_pair(0, {1, 0}, {1, 1});
    for (int trial = 0; trial < 50; ++trial) {
        SessionStore store;
        const std::string id = store.create_session(basins, 0);
        store.append_turn(id, "user", {rng.normal(), -1.0 - rng.uniform()});
        Vector push{rng.normal(), 3.0 + 3.0 * rng.uniform()};
        TraceEntry e;
        do {
            e = store.append_turn(id, "assistant", push);
        } while (e.forecast.kind != TipCase::Immediate);
        CHECK(e.warning);
        CHECK(store.append_turn(id, "assistant", push).warning);
    }
}

TEST_CASE("persistence survives a restart") {
    test_support::TempDir dir;
    const auto basins = geometry::make_basin_pair(1, {0.1, 0.7}, {-0.3, 1.9});
    std::vector<TraceEntry> before;
    std::string id;
    {
        SessionStore store(dir.path());
        id = store.create_session(basins, 4, "inline");
        Rng rng(1);
        for (int k = 0; k < 7; ++k) store.append_turn(id, k % 2 ? "assistant" : "user", random_vector(rng, 2));
        before = store.trace(id);
        store.create_session(basins, 1);
    }
    CHECK(std::filesystem::exists(dir / (id + ".json")));
    CHECK_FALSE(std::filesystem::exists(dir / (id + ".json.tmp")));

    SessionStore reopened(dir.path());
    CHECK(reopened.size() == 2);
    const auto after = reopened.trace(id);
    REQUIRE(after.size() == before.size());
    for (std::size_t k = 0; k < after.size(); ++k) {
        CHECK(after[k].forecast == before[k].forecast);
        CHECK(after[k].role == before[k].role);
        CHECK(after[k].warning == before[k].warning);
    }
    CHECK(reopened.snapshot(id).basin_file == "inline");
    // numbering continues after the highest persisted id
    CHECK(reopened.create_session(basins, 1) == "session-3");
}

TEST_CASE("fixture references and role prefixes") {
    test_support::TempDir dir;
    hsf::save_hsf(basin_set(), dir / "b.hsf");
    const std::string ref = (dir / "b.hsf").string() + "#2";
    CHECK(resolve_fixture_ref(ref, 1) == Vector{0, -2, 1});
    CHECK_THROWS_AS(resolve_fixture_ref((dir / "b.hsf").string(), 1), Error);
    CHECK_THROWS_AS(resolve_fixture_ref(ref + "x", 1), Error);
    CHECK_THROWS_AS(resolve_fixture_ref((dir / "b.hsf").string() + "#9", 1), Error);

    SessionStore store;
    const std::string id = store.create_session(dir / "b.hsf", 3);
    const auto e = store.append_fixture_turn(id, "user", ref);
    CHECK(store.snapshot(id).states.front() == Vector{0, -3, 1.5});
    CHECK(e.forecast == geometry::tip_forecast(Vector{0, -3, 1.5}, Vector{3, 0, 0}, Vector{3, 3, 0}));

    CHECK(role_from_phrase("assistant: sure") == "assistant");
    CHECK(role_from_phrase("user: assistant: no") == "user");
    CHECK(role_from_phrase("Assistant: case matters") == "user");
}

TEST_CASE("JSON encoding of forecasts") {
    const auto never = geometry::tip_forecast(Vector{1, 0}, Vector{1, 0}, Vector{0, 1});
    const auto j = to_json(never);
    CHECK(j.at("case") == "Never");
    CHECK(j.at("n_star").is_null());
    CHECK(j.at("n_star_ceil").is_null());
    const auto delayed = to_json(TraceEntry{3, "user", geometry::tip_forecast(Vector{-0.5, 0}, Vector{1, 0}, Vector{2, 0}), true});
    CHECK(delayed.at("turn_index") == 3);
    CHECK(delayed.at("n_star_ceil") == 1);
    CHECK(delayed.at("warning") == true);
    CHECK(delayed.at("x") == -0.5);
}

TEST_CASE("replay of the shipped conversation matches the independent script") {
    std::ifstream in(test_support::fixture("replay_expected.json"));
    const auto expected = nlohmann::json::parse(in);
    const auto set = hsf::load_hsf(test_support::fixture("replay_conversation.hsf"));
    const std::size_t layer = hsf::penultimate_layer(set);
    CHECK(layer == expected.at("layer").get<std::size_t>());
    const auto trace = replay(set, geometry::basin_pair_at(set, layer), expected.at("warn_threshold_n").get<std::int64_t>());
    const auto& rows = expected.at("trace");
    REQUIRE(trace.size() == rows.size());
    for (std::size_t k = 0; k < trace.size(); ++k) {
        CAPTURE(k);
        CHECK(trace[k].role == rows[k].at("role").get<std::string>());
        CHECK(std::string(geometry::to_string(trace[k].forecast.kind)) == rows[k].at("case").get<std::string>());
        CHECK(trace[k].warning == rows[k].at("warning").get<bool>());
        CHECK(trace[k].forecast.x == doctest::Approx(rows[k].at("x").get<double>()).epsilon(1e-12));
        if (!rows[k].at("n_star_ceil").is_null()) {
            CHECK(*trace[k].forecast.n_star_ceil == rows[k].at("n_star_ceil").get<std::int64_t>());
        }
    }
    CHECK(warning_onset(trace) == expected.at("warning_onset").get<std::size_t>());
}

TEST_CASE("concurrent sessions stay consistent") {
    SessionStore store;
    const auto basins = geometry::make_basin_pair(0, {1, 0, 0}, {0, 1, 0});
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) ids.push_back(store.create_session(basins, 2));
    std::vector<std::thread> workers;
    for (int w = 0; w < 8; ++w) {
        workers.emplace_back([&, w] {
            Rng rng(static_cast<std::uint64_t>(w));
            for (int k = 0; k < 200; ++k) {
                // two writers per session, and everyone reads
                store.append_turn(ids[static_cast<std::size_t>((w + k) % 4)], "user", {rng.normal(), rng.normal(), rng.normal()});
                const auto t = store.trace(ids[static_cast<std::size_t>(k % 8)]);
                for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(t[i].turn_index == i);
            }
        });
    }
    for (auto& w : workers) w.join();
    std::size_t total = 0;
    for (const auto& id : ids) {
        const auto s = store.snapshot(id);
        CHECK(s.trace.size() == s.states.size());
        total += s.states.size();
        if (!s.states.empty()) CHECK(s.running_c == mean_of(s.states));
    }
    CHECK(total == 1600);
}
