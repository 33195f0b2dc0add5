#include <doctest.h>

#include <algorithm>

#include "../oracles/oracles.hpp"
#include "test_support.hpp"
#include "tipping/cohesion.hpp"
#include "tipping/error.hpp"
#include "tipping/random.hpp"

using tipping::Error;
using tipping::ErrorKind;
using tipping::Rng;
using tipping::Vector;
namespace hsf = tipping::hsf;
using tipping::cohesion::cohesion;
using tipping::cohesion::cohesion_curve;
using tipping::cohesion::LabeledVector;
using tipping::cohesion::layer_population;
using tipping::cohesion::threshold_sweep;
using hsf::Label;

namespace {

std::vector<LabeledVector> random_population(Rng& rng, std::size_t n, std::size_t dim) {
    const Label labels[] = {Label::A, Label::B, Label::D, Label::C};
    std::vector<LabeledVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        Vector v(dim);
        for (auto& x : v) x = rng.normal();
        out.push_back({labels[rng.below(4)], v});
    }
    return out;
}

std::vector<oracle::Vec> raw(const std::vector<LabeledVector>& vs) {
    std::vector<oracle::Vec> out;
    for (const auto& lv : vs) out.push_back(lv.v);
    return out;
}

}  // namespace

TEST_CASE("analytic examples") {
    const std::vector<LabeledVector> same(5, {Label::B, {0.3, -1.2, 2.0}});
    const auto all = cohesion(same, 0.9);
    CHECK(all.g == 1.0);
    CHECK(all.component_sizes == std::vector<std::size_t>{5});

    const std::vector<LabeledVector> orthogonal = {{Label::A, {1, 0, 0}}, {Label::B, {0, 1, 0}}, {Label::D, {0, 0, 1}}};
    const auto none = cohesion(orthogonal, 0.9);
    CHECK(none.g == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(none.component_sizes == std::vector<std::size_t>{1, 1, 1});

    const std::vector<LabeledVector> pair = {{Label::B, {1, 0}}, {Label::D, {1, 0.01}}, {Label::B, {0, 1}}};
    const auto two = cohesion(pair, 0.9);
    CHECK(two.g == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(two.component_sizes == std::vector<std::size_t>{2, 1});
    CHECK(two.species_fractions.at(Label::B) == 0.5);
    CHECK(two.species_fractions.at(Label::D) == 1.0);
    CHECK(two.species_fractions.count(Label::A) == 0);
}

TEST_CASE("ties at the threshold count as edges") {
    const std::vector<LabeledVector> vs = {{Label::B, {1, 0}}, {Label::D, {0, 1}}};
    CHECK(cohesion(vs, 0.0).g == 1.0);
    CHECK(cohesion(vs, 1e-12).g == 0.5);
}

TEST_CASE("zero-norm and empty inputs are rejected") {
    const std::vector<LabeledVector> vs = {{Label::B, {1, 0}}, {Label::D, {0, 0}}};
    try {
        cohesion(vs, 0.9);
        FAIL("accepted a zero vector");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ZeroNorm);
    }
    CHECK_THROWS_AS(cohesion(std::vector<LabeledVector>{}, 0.9), Error);
}

TEST_CASE("brute-force equivalence on random small graphs") {
    Rng rng(404);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(12);
        const auto vs = random_population(rng, n, 2 + rng.below(3));
        const double threshold = 0.2 + 0.75 * rng.uniform();
        const auto report = cohesion(vs, threshold);
        const auto sizes = oracle::brute_components(raw(vs), threshold);
        REQUIRE(report.component_sizes == sizes);
        CHECK(report.g == static_cast<double>(sizes.front()) / static_cast<double>(n));
        std::size_t total = 0;
        for (auto s : report.component_sizes) total += s;
        CHECK(total == n);
        CHECK((report.g == 1.0) == (sizes.size() == 1));
        if (n > 1) CHECK((report.g == 1.0 / static_cast<double>(n)) == (sizes.size() == n));
        for (const auto& [label, f] : report.species_fractions) {
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
        }
    }
}

TEST_CASE("raising the threshold never increases g") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const auto vs = random_population(rng, 2 + rng.below(20), 2 + rng.below(4));
        double previous = 2.0;
        for (double t = -1.0; t <= 1.0; t += 0.05) {
            const double g = cohesion(vs, t).g;
            CHECK(g <= previous);
            previous = g;
        }
    }
}

TEST_CASE("permuting the input leaves the report unchanged") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        auto vs = random_population(rng, 2 + rng.below(15), 3);
        const double threshold = 0.3 + 0.6 * rng.uniform();
        const auto before = cohesion(vs, threshold);
        rng.shuffle(std::span<LabeledVector>(vs));
        CHECK(cohesion(vs, threshold) == before);
    }
}

TEST_CASE("curves and sweeps over a fixture") {
    hsf::LabeledStateSet set;
    set.dim = 2;
    set.layer_count = 3;
    set.groups.push_back(test_support::constant_group(Label::B, "b", {1, 0}, 3, 1));
    set.groups.push_back(test_support::constant_group(Label::D, "d", {1, 0.01f}, 3, 1));
    set.groups.push_back(test_support::constant_group(Label::C, "c", {0, 1}, 3, 1));

    // every layer is a scaled copy of layer 0, so the curve is constant
    const auto curve = cohesion_curve(set, 0.9);
    REQUIRE(curve.size() == 3);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(curve[l].layer == l);
        CHECK(curve[l].g == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    }

    const std::vector<double> zero = {0.0};
    const auto flat = threshold_sweep(set, zero);
    for (double g : flat[0]) CHECK(g == 1.0);

    const std::vector<double> ladder = {0.0, 0.5, 0.9, 0.99995, 1.0};
    const auto sweep = threshold_sweep(set, ladder);
    for (std::size_t l = 0; l < 3; ++l) {
        for (std::size_t k = 1; k < ladder.size(); ++k) CHECK(sweep[k][l] <= sweep[k - 1][l]);
    }
}

TEST_CASE("two-threshold sweep on a hand-built set matches brute force") {
    hsf::LabeledStateSet set;
    set.dim = 2;
    set.layer_count = 1;
    set.groups.push_back({Label::B, "b", 2, {1, 0, 0.9f, 0.3f}});
    set.groups.push_back({Label::D, "d", 2, {0.2f, 1, -1, 0.1f}});
    const std::vector<double> thresholds = {0.5, 0.95};
    const auto sweep = threshold_sweep(set, thresholds);
    const auto pop = raw(layer_population(set, 0));
    for (std::size_t k = 0; k < 2; ++k) {
        const auto sizes = oracle::brute_components(pop, thresholds[k]);
        CHECK(sweep[k][0] == static_cast<double>(sizes.front()) / 4.0);
    }
}
