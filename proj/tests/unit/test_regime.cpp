#include <doctest.h>

#include <cmath>

#include "../oracles/oracles.hpp"
#include "tipping/error.hpp"
#include "tipping/random.hpp"
#include "tipping/regime.hpp"

using namespace tipping;
using namespace tipping::regime;
using doctest::Approx;

namespace {

std::string repeat(const std::string& unit, std::size_t times) {
    std::string out;
    for (std::size_t i = 0; i < times; ++i) out += unit;
    return out;
}

Regime classify_letters(const std::string& letters) {
    auto t = from_symbol_string(letters);
    return classify(t);
}

SymbolicTrajectory random_symbols(std::uint64_t seed, std::size_t alphabet, std::size_t length) {
    Rng rng(seed);
    SymbolicTrajectory t;
    for (std::size_t i = 0; i < length; ++i) t.symbols.push_back(rng.below(alphabet));
    return t;
}

}  // namespace

TEST_CASE("map examples") {
    SUBCASE("frozen limit") {
        for (double x : iterate_map({0.0, 1.0, 0.0, 0.3, 50, 0})) CHECK(x == 0.3);
    }
    SUBCASE("stable fixed point") {
        const auto xs = iterate_map({1.5, 1.0, 0.0, 0.2, 200, 0});
        CHECK(xs.size() == 201);
        CHECK(std::abs(xs.back() - 1.0) < 1e-9);
    }
    SUBCASE("fixed point is exact under zero noise") {
        for (double rho : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            for (double x : iterate_map({1.7, rho, 0.0, 1.0 / rho, 20, 0})) CHECK(x == 1.0 / rho);
        }
    }
    SUBCASE("period two at lambda 2.1") {
        const auto xs = iterate_map({2.1, 1.0, 0.0, 0.2, 400, 0});
        const std::vector<double> tail(xs.end() - 200, xs.end());
        auto t = symbolize_numeric(tail, 2);
        CHECK(classify(t) == Regime{RegimeKind::C2, 2});
        CHECK(t.symbol_string().substr(0, 6) == (t.symbols[0] == 0 ? "ABABAB" : "BABABA"));
        CHECK(std::abs(xs.back() - xs[xs.size() - 3]) < 1e-9);
        CHECK(std::abs(xs.back() - xs[xs.size() - 2]) > 0.1);
    }
    SUBCASE("zero noise matches an independent orbit exactly") {
        Rng rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            const double lambda = 2.5 * rng.uniform();
            const double rho = 0.1 + 2.0 * rng.uniform();
            const double x0 = rng.uniform() / rho;
            CHECK(iterate_map({lambda, rho, 0.0, x0, 100, 123}) == oracle::map_orbit(lambda, rho, x0, 100));
        }
    }
    SUBCASE("noise is reproducible from the seed") {
        const MapParams p{1.0, 0.25, 0.3, 4.0, 300, 17};
        CHECK(iterate_map(p) == iterate_map(p));
        MapParams q = p;
        q.seed = 18;
        CHECK(iterate_map(p) != iterate_map(q));
    }
    SUBCASE("divergence names the step") {
        try {
            iterate_map({3.5, 1.0, 0.0, -1.0, 100, 0});
            FAIL("did not diverge");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Diverged);
            CHECK(std::string(e.what()).find("step ") != std::string::npos);
        }
    }
    SUBCASE("parameter checks") {
        CHECK_THROWS_AS(iterate_map({1.0, 0.0, 0.0, 0.1, 10, 0}), Error);
        CHECK_THROWS_AS(iterate_map({1.0, 1.0, -1.0, 0.1, 10, 0}), Error);
        CHECK_THROWS_AS(iterate_map({1.0, 1.0, 0.0, 0.1, 0, 0}), Error);
    }
}

TEST_CASE("text symbolization") {
    SUBCASE("identical sentences share a symbol") {
        const std::vector<std::string> s = {"The model agrees.", "The model agrees."};
        CHECK(symbolize_text(s).symbols == std::vector<std::size_t>{0, 0});
    }
    SUBCASE("disjoint n-grams split") {
        const std::vector<std::string> s = {"aaaa", "zzzz"};
        CHECK(symbolize_text(s).symbols == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("near duplicates versus an unrelated sentence") {
        const std::vector<std::string> s = {"the cat sat on the mat", "the cat sat on the hat", "quantum flux capacitor"};
        const auto rows = tfidf_rows(s);
        CHECK(sparse_dot(rows[0], rows[1]) >= 0.45);
        CHECK(sparse_dot(rows[0], rows[2]) < 0.45);
        CHECK(symbolize_text(s).symbol_string() == "AAB");
    }
    SUBCASE("case folding applies to ASCII") {
        const std::vector<std::string> s = {"HELLO THERE", "hello there"};
        CHECK(symbolize_text(s).symbols == std::vector<std::size_t>{0, 0});
    }
    SUBCASE("rows are unit length") {
        const std::vector<std::string> s = {"abcdef", "b\xc3\xa9 c\xc3\xa9", "short", "x"};
        const auto rows = tfidf_rows(s);
        for (std::size_t i = 0; i < 3; ++i) CHECK(sparse_dot(rows[i], rows[i]) == Approx(1.0).epsilon(1e-14));
        CHECK(rows[3].empty());
    }
    SUBCASE("featureless sentences are flagged singletons") {
        const std::vector<std::string> s = {"ok", "the same words", "ok", "the same words"};
        const auto t = symbolize_text(s);
        CHECK(t.flagged == std::vector<std::size_t>{0, 2});
        CHECK(t.symbols == std::vector<std::size_t>{0, 1, 2, 1});
    }
    SUBCASE("permutation equivariance") {
        Rng rng(4);
        const std::vector<std::string> pool = {"we should test the tipping law", "we should test the tipping point",
                                               "a completely different remark", "another different remark",
                                               "numbers 1 2 3", "tipping law test", "zzz"};
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<std::size_t> order(pool.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(std::span<std::size_t>(order));
            std::vector<std::string> shuffled;
            for (auto i : order) shuffled.push_back(pool[i]);
            const auto base = symbolize_text(pool).symbols;
            const auto perm = symbolize_text(shuffled).symbols;
            // same partition: i ~ j in the original iff their images are equal
            for (std::size_t i = 0; i < order.size(); ++i) {
                for (std::size_t j = 0; j < order.size(); ++j) {
                    CHECK((perm[i] == perm[j]) == (base[order[i]] == base[order[j]]));
                }
            }
            // labels follow first appearance
            std::size_t next = 0;
            for (auto s : perm) {
                CHECK(s <= next);
                if (s == next) ++next;
            }
        }
    }
    SUBCASE("empty input") { CHECK_THROWS_AS(symbolize_text(std::vector<std::string>{}), Error); }
}

TEST_CASE("sentence splitting") {
    const auto s = split_sentences("First one. Second one!  Third?\nFourth line\n\n  e.g.x stays");
    CHECK(s == std::vector<std::string>{"First one.", "Second one!", "Third?", "Fourth line", "e.g.x stays"});
}

TEST_CASE("numeric symbolization") {
    CHECK(symbolize_numeric(std::vector<double>(20, 3.5), 4).symbols == std::vector<std::size_t>(20, 0));
    std::vector<double> alt;
    for (int i = 0; i < 10; ++i) alt.push_back(i % 2 ? -1.0 : 2.0);
    CHECK(symbolize_numeric(alt, 2).symbol_string() == "BABABABABA");
    const std::vector<double> skewed = {0, 0.1, 0.2, 0.3, 100};
    CHECK(symbolize_numeric(skewed, 2).symbol_string() == "AAAAB");
    CHECK(symbolize_numeric(skewed, 2, Binning::Quantile).symbol_string() == "AABBB");
    CHECK_THROWS_AS(symbolize_numeric(std::vector<double>{}, 2), Error);
    CHECK_THROWS_AS(symbolize_numeric(alt, 0), Error);
}

TEST_CASE("symbol letters round trip") {
    const std::string letters = "ABCzyxQ";
    CHECK(from_symbol_string(letters).symbol_string() == letters);
    CHECK(from_symbol_string(letters).alphabet_size() == 7);
    CHECK_THROWS_AS(from_symbol_string("A-B"), Error);
}

TEST_CASE("classifier examples") {
    CHECK(classify_letters(repeat("A", 100)) == Regime{RegimeKind::F, 0});
    CHECK(classify_letters(repeat("AB", 50)) == Regime{RegimeKind::C2, 2});
    CHECK(classify_letters(repeat("ABC", 40)) == Regime{RegimeKind::Cq, 3});
    CHECK(classify_letters(repeat("ABCDEFGH", 13)) == Regime{RegimeKind::Cq, 8});
    CHECK(classify_letters(repeat("A", 94) + repeat("B", 6)) == Regime{RegimeKind::S, 0});
    CHECK(to_string(Regime{RegimeKind::Cq, 5}) == "C5");
    CHECK(cascade_char(Regime{RegimeKind::Cq, 5}) == 'C');
    CHECK_THROWS_AS(classify_letters("ABABABAB"), Error);
}

TEST_CASE("random five-symbol strings are noise, diagnostics match the oracle") {
    auto t = random_symbols(5, 5, 200);
    CHECK(classify(t) == Regime{RegimeKind::N, 0});
    const auto ref = oracle::window_stats(t.symbols, 5);
    CHECK(t.diagnostics->entropy == Approx(ref.entropy).epsilon(1e-12));
    CHECK(t.diagnostics->determinism == Approx(ref.determinism).epsilon(1e-12));
    CHECK(t.diagnostics->window_length == 160);
}

TEST_CASE("diagnostics stay in range and agree with the oracle") {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t alphabet = 1 + rng.below(6);
        auto t = random_symbols(1000 + trial, alphabet, 10 + rng.below(200));
        // bias towards runs so every cascade branch gets exercised
        for (std::size_t i = 1; i < t.symbols.size(); ++i) {
            if (rng.bernoulli(0.6)) t.symbols[i] = t.symbols[i - 1];
        }
        const auto d = diagnostics(t.symbols);
        for (double v : {d.entropy, d.determinism, d.max_run_fraction, d.switch_rate, d.dominant_symbol_share}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
        }
        const auto ref = oracle::window_stats(t.symbols, alphabet);
        CHECK(d.entropy == Approx(ref.entropy).epsilon(1e-12).scale(1.0));
        CHECK(d.determinism == Approx(ref.determinism).epsilon(1e-12).scale(1.0));
        // classification is a pure function of the diagnostics
        CHECK(classify(d) == classify(diagnostics(t.symbols)));
    }
}

TEST_CASE("cascade branches from diagnostics") {
    Diagnostics d;
    d.window_length = 100;
    d.dominant_symbol_share = 0.96;
    d.max_run_fraction = 0.95;
    CHECK(classify(d).kind == RegimeKind::F);
    d.max_run_fraction = 0.5;
    d.switch_rate = 0.02;
    CHECK(classify(d).kind == RegimeKind::S);
    d = {};
    d.period = 4;
    CHECK(classify(d) == Regime{RegimeKind::Cq, 4});
    d.period = 1;  // constant windows are F or S above; a bare period 1 falls through
    d.determinism = 0.85;
    d.max_run_fraction = 0.4;
    CHECK(classify(d).kind == RegimeKind::I);
    d = {};
    d.entropy = 0.9;
    d.determinism = 0.4;
    CHECK(classify(d).kind == RegimeKind::N);
    d.determinism = 0.6;
    CHECK(classify(d).kind == RegimeKind::X);
    ClassifierThresholds strict;
    strict.noise_determinism = 0.7;
    CHECK(classify(d, strict).kind == RegimeKind::N);
}

TEST_CASE("entropy grows with map noise on average") {
    double mean[3] = {0, 0, 0};
    const double sigmas[3] = {0.0, 0.05, 0.3};
    for (int k = 0; k < 3; ++k) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto t = symbolize_numeric(iterate_map({1.5, 0.25, sigmas[k], 1.0, 1000, seed}), 32);
            classify(t);
            mean[k] += t.diagnostics->entropy / 20.0;
        }
    }
    CHECK(mean[0] <= mean[1]);
    CHECK(mean[1] <= mean[2]);
    CHECK(mean[0] < mean[2]);
}

TEST_CASE("temperature cascade") {
    SUBCASE("all frozen") {
        std::vector<std::pair<double, SymbolicTrajectory>> runs;
        for (double temp : {0.3, 0.1, 0.2}) runs.emplace_back(temp, from_symbol_string(repeat("A", 30)));
        const auto r = temperature_cascade(runs);
        CHECK(r.regimes == "FFF");
        CHECK(r.rows[0].temperature == 0.1);
        CHECK(r.rows[2].temperature == 0.3);
    }
    SUBCASE("short runs render as '?'") {
        std::vector<std::pair<double, SymbolicTrajectory>> runs;
        runs.emplace_back(1.0, from_symbol_string("ABA"));
        runs.emplace_back(0.5, from_symbol_string(repeat("AB", 10)));
        const auto r = temperature_cascade(runs);
        CHECK(r.regimes == "C?");
        CHECK_FALSE(r.rows[1].diagnostics.has_value());
    }
    SUBCASE("noisy map sweep runs from F to N") {
        for (std::uint64_t seed : {1, 2, 3}) {
            std::vector<std::pair<double, SymbolicTrajectory>> runs;
            for (int k = 0; k <= 11; ++k) {
                const double temp = 0.1 * k;
                const auto xs = iterate_map({1.0, 0.25, 0.5 * temp, 4.0, 2000, seed});
                runs.emplace_back(temp, symbolize_numeric(xs, 2, Binning::Quantile));
            }
            const auto r = temperature_cascade(runs);
            CHECK(r.regimes.front() == 'F');
            CHECK(r.regimes.back() == 'N');
        }
    }
}
