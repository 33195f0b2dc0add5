#include "tipping/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tipping/basin_geometry.hpp"
#include "tipping/cohesion.hpp"
#include "tipping/corpus_stats.hpp"
#include "tipping/error.hpp"
#include "tipping/forecast_service.hpp"
#include "tipping/http_server.hpp"
#include "tipping/regime.hpp"
#include "tipping/state_io.hpp"
#include "tipping/toy_transformer.hpp"

namespace tipping::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum class Format { Json, Csv };

struct Shared {
    Format format = Format::Json;
    int verbosity = 0;
};

// --- output helpers ------------------------------------------------------

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return json(v).dump();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted.push_back('"');
        quoted.push_back(c);
    }
    quoted.push_back('"');
    return quoted;
}

void csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_field(fields[i]);
    }
    out << '\n';
}

void print_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

json forecast_json(const geometry::TipForecast& f) { return service::to_json(f); }

std::string ceil_text(const geometry::TipForecast& f) {
    return f.n_star_ceil ? std::to_string(*f.n_star_ceil) : "inf";
}

// --- input helpers -------------------------------------------------------

void require_file(const std::string& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw Error(ErrorKind::Io, "no such file: " + path);
}

hsf::LabeledStateSet load_set(const std::string& path) {
    require_file(path);
    return hsf::load_hsf(path);
}

std::size_t layer_or_penultimate(const hsf::LabeledStateSet& set, int layer) {
    if (layer < 0) return hsf::penultimate_layer(set);
    if (static_cast<std::size_t>(layer) >= set.layer_count) {
        throw Error(ErrorKind::InvalidArgument, "layer " + std::to_string(layer) + " outside " +
                                                    std::to_string(set.layer_count) + " layers");
    }
    return static_cast<std::size_t>(layer);
}

std::vector<double> read_numbers(const std::string& path) {
    require_file(path);
    std::ifstream in(path);
    std::vector<double> values;
    std::string token;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream tokens(text);
    while (tokens >> token) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size()) {
            throw Error(ErrorKind::InvalidArgument, path + ": not a number: \"" + token + "\"");
        }
        values.push_back(v);
    }
    return values;
}

std::vector<std::string> read_sentences(const std::string& path, bool split) {
    require_file(path);
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (split) return regime::split_sentences(text);
    std::vector<std::string> lines;
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        lines.push_back(line);
    }
    return lines;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
    static const std::regex range(R"(^\s*(\d+)\s*(?:(?:\.\.|-|:)\s*(\d+))?\s*$)");
    std::smatch m;
    if (!std::regex_match(text, m, range)) {
        throw Error(ErrorKind::InvalidArgument, "seed range must look like 0..49, got \"" + text + "\"");
    }
    const std::uint64_t first = std::stoull(m[1].str());
    const std::uint64_t last = m[2].matched ? std::stoull(m[2].str()) : first;
    if (last < first) throw Error(ErrorKind::InvalidArgument, "seed range is empty: " + text);
    return {first, last};
}

json regime_json(const regime::SymbolicTrajectory& t) {
    json j;
    j["length"] = t.symbols.size();
    j["alphabet_size"] = t.alphabet_size();
    j["symbols"] = t.symbols;
    if (t.alphabet_size() <= 52 && std::all_of(t.symbols.begin(), t.symbols.end(), [](auto s) { return s < 52; })) {
        j["symbol_string"] = t.symbol_string();
    }
    j["flagged"] = t.flagged;
    if (t.regime) j["regime"] = regime::to_string(*t.regime);
    if (t.diagnostics) {
        const auto& d = *t.diagnostics;
        j["diagnostics"] = {{"window_length", d.window_length},
                            {"period", d.period ? json(*d.period) : json(nullptr)},
                            {"entropy", d.entropy},
                            {"determinism", d.determinism},
                            {"max_run_fraction", d.max_run_fraction},
                            {"switch_rate", d.switch_rate},
                            {"dominant_symbol_share", d.dominant_symbol_share}};
    }
    return j;
}

// --- subcommands -----------------------------------------------------------

struct BasinOpts {
    std::string hsf;
    int layer = -1;
    std::string label;
    std::string direction;
};

int run_basin_centroid(const BasinOpts& o, const Shared& sh, std::ostream& out) {
    const auto set = load_set(o.hsf);
    const std::size_t layer = layer_or_penultimate(set, o.layer);
    std::vector<std::pair<std::string, Vector>> rows;
    if (!o.label.empty()) {
        const auto label = hsf::parse_label(o.label);
        rows.emplace_back(std::string(hsf::to_string(label)), geometry::label_centroid(set, label, layer));
    } else {
        const auto basins = geometry::basin_pair_at(set, layer);
        rows.emplace_back("B", basins.b);
        rows.emplace_back("D", basins.d);
        rows.emplace_back("axis", basins.axis);
    }
    if (sh.format == Format::Csv) {
        csv_row(out, {"layer", "vector", "index", "value"});
        for (const auto& [name, v] : rows) {
            for (std::size_t i = 0; i < v.size(); ++i) csv_row(out, {std::to_string(layer), name, std::to_string(i), num(v[i])});
        }
        return kExitOk;
    }
    json j = {{"layer", layer}, {"dim", set.dim}};
    for (const auto& [name, v] : rows) j[name] = v;
    print_json(out, j);
    return kExitOk;
}

int run_basin_gap(const BasinOpts& o, std::ostream& out) {
    const auto set = load_set(o.hsf);
    const std::size_t layer = layer_or_penultimate(set, o.layer);
    const auto basins = geometry::basin_pair_at(set, layer);
    json gaps = json::array();
    std::size_t positive = 0;
    for (const auto* g : set.groups_with(hsf::Label::A)) {
        std::vector<Vector> tokens;
        for (std::size_t t = 0; t < g->token_count; ++t) tokens.push_back(g->token_vector(layer, t, set.dim));
        const double gap = geometry::branch_gap(geometry::centroid(tokens), basins);
        positive += gap > 0.0 ? 1 : 0;
        gaps.push_back({{"phrase", g->phrase}, {"gap", gap}});
    }
    if (gaps.empty()) throw Error(ErrorKind::MissingGroup, "no group labelled A");
    // one-sided sign test: P(at least `positive` of n positive | p = 1/2)
    const std::size_t n = gaps.size();
    double tail = 0.0;
    for (std::size_t k = positive; k <= n; ++k) {
        tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    }
    print_json(out, {{"layer", layer}, {"cases", gaps}, {"positive", positive}, {"total", n}, {"sign_test_p", tail}});
    return kExitOk;
}

int run_basin_axis_cosine(const BasinOpts& o, std::ostream& out) {
    const auto set = load_set(o.hsf);
    const std::size_t layer = layer_or_penultimate(set, o.layer);
    const auto basins = geometry::basin_pair_at(set, layer);
    const auto direction = read_numbers(o.direction);
    require_same_dim(basins.axis, direction, "axis vs external direction");
    print_json(out, {{"layer", layer}, {"cosine", geometry::axis_cosine(basins.axis, direction)}});
    return kExitOk;
}

struct ForecastOpts {
    std::string hsf;
    int layer = -1;
    std::vector<double> c, b, d;
    std::string conversation;
    std::string basins;
    std::int64_t warn = 3;
};

int run_forecast_tip(const ForecastOpts& o, std::ostream& out) {
    json j;
    geometry::TipForecast f;
    if (!o.hsf.empty()) {
        const auto set = load_set(o.hsf);
        const std::size_t layer = layer_or_penultimate(set, o.layer);
        const auto basins = geometry::basin_pair_at(set, layer);
        const auto c = geometry::conversation_state_at(set, layer);
        f = geometry::tip_forecast(c.c, basins.b, basins.d);
        j = forecast_json(f);
        j["layer"] = layer;
        j["token_count"] = c.token_count;
    } else {
        if (o.c.empty() || o.b.empty() || o.d.empty()) {
            throw Error(ErrorKind::InvalidArgument, "give --hsf, or all of --c, --b and --d");
        }
        f = geometry::tip_forecast(o.c, o.b, o.d);
        j = forecast_json(f);
    }
    print_json(out, j);
    return kExitOk;
}

int run_forecast_timing(const ForecastOpts& o, std::ostream& out) {
    const auto set = load_set(o.hsf);
    const std::size_t layer = layer_or_penultimate(set, o.layer);
    const auto basins = geometry::basin_pair_at(set, layer);
    const auto label = set.has_label(hsf::Label::C) ? hsf::Label::C : hsf::Label::A;
    const auto c1 = geometry::conversation_state_at(set, layer, label);
    const auto f = geometry::classify_timing(c1, basins);
    json j = forecast_json(f);
    j["layer"] = layer;
    j["continuation_label"] = hsf::to_string(label);
    j["n_star_pred"] = f.n_star_ceil ? json(*f.n_star_ceil) : json(nullptr);
    print_json(out, j);
    return kExitOk;
}

int run_forecast_replay(const ForecastOpts& o, const Shared& sh, std::ostream& out) {
    const auto conversation = load_set(o.conversation);
    const auto basin_set = load_set(o.basins.empty() ? o.conversation : o.basins);
    const std::size_t layer = layer_or_penultimate(basin_set, o.layer);
    const auto basins = geometry::basin_pair_at(basin_set, layer);
    const auto trace = service::replay(conversation, basins, o.warn);
    const auto onset = service::warning_onset(trace);
    if (sh.format == Format::Csv) {
        csv_row(out, {"turn_index", "role", "x", "case", "n_star_ceil", "warning"});
        for (const auto& e : trace) {
            csv_row(out, {std::to_string(e.turn_index), e.role, num(e.forecast.x),
                          std::string(geometry::to_string(e.forecast.kind)), ceil_text(e.forecast),
                          e.warning ? "1" : "0"});
        }
        return kExitOk;
    }
    json rows = json::array();
    for (const auto& e : trace) rows.push_back(service::to_json(e));
    print_json(out, {{"layer", layer},
                     {"warn_threshold_n", o.warn},
                     {"warning_onset", onset ? json(*onset) : json(nullptr)},
                     {"trace", rows}});
    return kExitOk;
}

struct LayersOpts {
    std::string hsf;
    std::size_t window_first = 1;
    std::size_t window_last = 3;
};

int run_layers_scan(const LayersOpts& o, const Shared& sh, std::ostream& out) {
    const auto set = load_set(o.hsf);
    const auto rows = geometry::layer_scan(set);
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(r.x);
    if (sh.format == Format::Csv) {
        csv_row(out, {"layer", "x", "b_drive", "axis_norm"});
        for (const auto& r : rows) csv_row(out, {std::to_string(r.layer), num(r.x), num(r.b_drive), num(r.axis_norm)});
        return kExitOk;
    }
    json j_rows = json::array();
    for (const auto& r : rows) {
        j_rows.push_back({{"layer", r.layer}, {"x", r.x}, {"b_drive", r.b_drive}, {"axis_norm", r.axis_norm}});
    }
    json j = {{"layers", j_rows}, {"early_window", {o.window_first, o.window_last}}};
    const double amp = geometry::amplification(xs, {o.window_first, o.window_last});
    j["amplification"] = std::isfinite(amp) ? json(amp) : json(nullptr);
    print_json(out, j);
    return kExitOk;
}

struct CohesionOpts {
    std::string hsf;
    double threshold = cohesion::kDefaultThreshold;
    std::vector<double> sweep;
    bool default_sweep = false;
};

int run_cohesion(const CohesionOpts& o, const Shared& sh, std::ostream& out) {
    const auto set = load_set(o.hsf);
    std::vector<double> thresholds = o.sweep;
    if (o.default_sweep) thresholds = cohesion::kDefaultSweep;
    if (thresholds.empty()) thresholds = {o.threshold};

    std::vector<cohesion::CohesionReport> reports;
    for (double t : thresholds) {
        auto curve = cohesion::cohesion_curve(set, t);
        reports.insert(reports.end(), curve.begin(), curve.end());
    }
    const std::vector<hsf::Label> labels = {hsf::Label::A, hsf::Label::B, hsf::Label::D, hsf::Label::C};
    if (sh.format == Format::Csv) {
        csv_row(out, {"layer", "threshold", "g", "frac_A", "frac_B", "frac_D", "frac_C"});
        for (const auto& r : reports) {
            std::vector<std::string> row = {std::to_string(r.layer), num(r.threshold), num(r.g)};
            for (auto l : labels) {
                const auto it = r.species_fractions.find(l);
                row.push_back(it == r.species_fractions.end() ? "" : num(it->second));
            }
            csv_row(out, row);
        }
        return kExitOk;
    }
    json rows = json::array();
    for (const auto& r : reports) {
        json fractions = json::object();
        for (const auto& [l, f] : r.species_fractions) fractions[std::string(hsf::to_string(l))] = f;
        rows.push_back({{"layer", r.layer},
                        {"threshold", r.threshold},
                        {"g", r.g},
                        {"component_sizes", r.component_sizes},
                        {"species_fractions", fractions}});
    }
    print_json(out, {{"thresholds", thresholds}, {"reports", rows}});
    return kExitOk;
}

struct ToyOpts {
    std::vector<std::string> presets = {"full"};
    std::string seeds = "0..49";
    std::string fixture;
    std::string save_fixture;
    std::size_t max_steps = 12;
};

int run_toy_sim(const ToyOpts& o, const Shared& sh, std::ostream& out) {
    toy::BaseEmbeddings embeddings;
    if (!o.fixture.empty()) {
        require_file(o.fixture);
        embeddings = toy::load_fixture(o.fixture);
    } else {
        embeddings = toy::make_case_two_fixture({});
    }
    if (!o.save_fixture.empty()) {
        toy::save_fixture(embeddings, o.save_fixture,
                          o.fixture.empty() ? std::optional<toy::CaseTwoParams>(toy::CaseTwoParams{}) : std::nullopt);
    }
    const auto [first, last] = parse_seed_range(o.seeds);
    std::vector<toy::NamedConfig> configs;
    for (const auto& name : o.presets) {
        auto cfg = toy::preset_config(toy::parse_preset(name));
        cfg.max_steps = o.max_steps;
        configs.push_back({name, cfg});
    }
    const auto stats = toy::seed_sweep(configs, embeddings, first, last);
    const auto closed = geometry::tip_forecast(embeddings.a, embeddings.b, embeddings.d);

    if (sh.format == Format::Csv) {
        csv_row(out, {"preset", "seed", "tip_step", "labels"});
        for (const auto& s : stats) {
            for (const auto& run : s.runs) {
                std::string labels;
                for (auto t : run.labels) labels.push_back(toy::to_char(t));
                csv_row(out, {s.name, std::to_string(run.seed),
                              run.tip_step ? std::to_string(*run.tip_step) : "", labels});
            }
        }
        return kExitOk;
    }
    json presets = json::array();
    for (const auto& s : stats) {
        json histogram = json::object();
        for (const auto& [step, count] : s.histogram) histogram[std::to_string(step)] = count;
        json steps = json::array();
        for (const auto& run : s.runs) steps.push_back(run.tip_step ? json(*run.tip_step) : json(nullptr));
        presets.push_back({{"preset", s.name},
                           {"runs", s.runs.size()},
                           {"tipped", s.tipped},
                           {"mean", s.mean},
                           {"std", s.std},
                           {"median", s.median},
                           {"mode", s.mode},
                           {"mode_fraction", s.mode_fraction},
                           {"histogram", histogram},
                           {"tip_steps", steps}});
    }
    print_json(out, {{"fixture", {{"a", embeddings.a}, {"b", embeddings.b}, {"d", embeddings.d}}},
                     {"closed_form", forecast_json(closed)},
                     {"seeds", {first, last}},
                     {"max_steps", o.max_steps},
                     {"presets", presets}});
    return kExitOk;
}

struct MapOpts {
    regime::MapParams params{0.0, 1.0, 0.0, 0.5, 200, 0};
    std::size_t bins = 0;
    std::string binning = "equal";
    std::size_t burn_in = 0;
};

regime::Binning parse_binning(const std::string& name) {
    if (name == "equal") return regime::Binning::EqualWidth;
    if (name == "quantile") return regime::Binning::Quantile;
    throw Error(ErrorKind::InvalidArgument, "binning must be equal or quantile");
}

int run_map_sim(const MapOpts& o, const Shared& sh, std::ostream& out) {
    const auto xs = regime::iterate_map(o.params);
    if (sh.format == Format::Csv) {
        csv_row(out, {"n", "x"});
        for (std::size_t n = 0; n < xs.size(); ++n) csv_row(out, {std::to_string(n), num(xs[n])});
        return kExitOk;
    }
    json j = {{"lambda", o.params.lambda}, {"rho", o.params.rho},   {"sigma", o.params.noise_sigma},
              {"x0", o.params.x0},         {"steps", o.params.steps}, {"seed", o.params.seed},
              {"xs", xs}};
    if (o.bins > 0) {
        if (o.burn_in >= xs.size()) throw Error(ErrorKind::InvalidArgument, "--burn-in leaves no iterates");
        const std::vector<double> kept(xs.begin() + static_cast<std::ptrdiff_t>(o.burn_in), xs.end());
        auto t = regime::symbolize_numeric(kept, o.bins, parse_binning(o.binning));
        j["burn_in"] = o.burn_in;
        regime::classify(t);
        j["trajectory"] = regime_json(t);
    }
    print_json(out, j);
    return kExitOk;
}

struct RegimeOpts {
    std::string sentences;
    std::string series;
    std::string dir;
    bool split = false;
    double threshold = regime::kTextSimilarityThreshold;
    std::size_t bins = 2;
    std::string binning = "equal";
};

int run_regimes_classify(const RegimeOpts& o, std::ostream& out) {
    if (o.sentences.empty() == o.series.empty()) {
        throw Error(ErrorKind::InvalidArgument, "give exactly one of --sentences and --series");
    }
    regime::SymbolicTrajectory t;
    if (!o.sentences.empty()) {
        t = regime::symbolize_text(read_sentences(o.sentences, o.split), o.threshold);
    } else {
        t = regime::symbolize_numeric(read_numbers(o.series), o.bins, parse_binning(o.binning));
    }
    regime::classify(t);
    print_json(out, regime_json(t));
    return kExitOk;
}

int run_regimes_cascade(const RegimeOpts& o, const Shared& sh, std::ostream& out) {
    std::error_code ec;
    if (!fs::is_directory(o.dir, ec)) throw Error(ErrorKind::Io, "no such directory: " + o.dir);
    static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
    std::vector<std::pair<double, regime::SymbolicTrajectory>> runs;
    std::vector<std::string> names;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        const std::string stem = path.stem().string();
        std::smatch m;
        if (!std::regex_search(stem, m, number)) continue;
        runs.emplace_back(std::stod(m.str()), regime::symbolize_text(read_sentences(path.string(), o.split), o.threshold));
    }
    if (runs.empty()) throw Error(ErrorKind::EmptyInput, "no transcript files with a temperature in their name in " + o.dir);
    const auto result = regime::temperature_cascade(std::move(runs));
    if (sh.format == Format::Csv) {
        csv_row(out, {"temperature", "length", "regime", "entropy", "determinism", "max_run_fraction", "switch_rate",
                      "dominant_symbol_share", "period"});
        for (const auto& r : result.rows) {
            if (!r.diagnostics) {
                csv_row(out, {num(r.temperature), std::to_string(r.length), "?", "", "", "", "", "", ""});
                continue;
            }
            const auto& d = *r.diagnostics;
            csv_row(out, {num(r.temperature), std::to_string(r.length), regime::to_string(*r.regime), num(d.entropy),
                          num(d.determinism), num(d.max_run_fraction), num(d.switch_rate),
                          num(d.dominant_symbol_share), d.period ? std::to_string(*d.period) : ""});
        }
        return kExitOk;
    }
    json rows = json::array();
    for (const auto& r : result.rows) {
        json row = {{"temperature", r.temperature}, {"length", r.length}};
        row["regime"] = r.regime ? json(regime::to_string(*r.regime)) : json(nullptr);
        if (r.diagnostics) {
            const auto& d = *r.diagnostics;
            row["entropy"] = d.entropy;
            row["determinism"] = d.determinism;
            row["max_run_fraction"] = d.max_run_fraction;
            row["switch_rate"] = d.switch_rate;
            row["dominant_symbol_share"] = d.dominant_symbol_share;
            row["period"] = d.period ? json(*d.period) : json(nullptr);
        }
        rows.push_back(row);
    }
    print_json(out, {{"regimes", result.regimes}, {"runs", rows}});
    return kExitOk;
}

struct CorpusOpts {
    std::string in;
    std::string correlation = "exchangeable";
    std::size_t shuffles = 100;
    std::uint64_t seed = 0;
    std::string role = "assistant";
};

int run_corpus_regress(const CorpusOpts& o, const Shared& sh, std::ostream& out) {
    require_file(o.in);
    const auto turns = corpus::load_turns(o.in);
    const auto rows = corpus::build_design(turns);
    const auto fit = corpus::fit_clustered_logistic(rows, corpus::parse_correlation(o.correlation));
    if (sh.format == Format::Csv) {
        csv_row(out, {"predictor", "estimate", "robust_se", "odds_ratio", "ci_low", "ci_high", "z", "p"});
        for (const auto& c : fit.coefficients) {
            csv_row(out, {c.name, num(c.estimate), num(c.robust_se), num(c.odds_ratio), num(c.ci_low), num(c.ci_high),
                          num(c.z), num(c.p_value)});
        }
        return kExitOk;
    }
    json coefficients = json::array();
    for (const auto& c : fit.coefficients) {
        coefficients.push_back({{"predictor", c.name},
                                {"estimate", c.estimate},
                                {"robust_se", c.robust_se},
                                {"odds_ratio", c.odds_ratio},
                                {"ci_95", {c.ci_low, c.ci_high}},
                                {"z", c.z},
                                {"p", c.p_value}});
    }
    print_json(out, {{"correlation", corpus::to_string(fit.correlation)},
                     {"observations", fit.observations},
                     {"clusters", fit.clusters},
                     {"iterations", fit.iterations},
                     {"alpha", fit.alpha},
                     {"alpha_clamped", fit.alpha_clamped},
                     {"scale", fit.scale},
                     {"coefficients", coefficients}});
    return kExitOk;
}

int run_corpus_null(const CorpusOpts& o, std::ostream& out) {
    require_file(o.in);
    const auto turns = corpus::load_turns(o.in);
    const auto role = corpus::parse_role(o.role);
    const auto observed = corpus::lag1_autocorr(turns, role);
    const auto r = corpus::shuffled_null(turns, role, o.shuffles, o.seed);
    print_json(out, {{"role", corpus::to_string(role)},
                     {"observed", r.observed},
                     {"conversations", observed.conversations},
                     {"zero_variance_conversations", observed.zero_variance_conversations},
                     {"pairs", observed.pairs},
                     {"null_mean", r.null_mean},
                     {"null_std", r.null_std},
                     {"z", std::isfinite(r.z) ? json(r.z) : json(nullptr)},
                     {"mc_p", r.mc_p},
                     {"shuffles", r.shuffles},
                     {"seed", o.seed}});
    return kExitOk;
}

struct ServeOpts {
    std::string state_dir = "tipping-state";
    std::string host = "127.0.0.1";
    int port = 0;
};

int run_serve(const ServeOpts& o, const Shared& sh, std::ostream& err) {
    const int port = service::resolve_port(o.port);
    service::SessionStore store(fs::path(o.state_dir));
    service::HttpServer server(store);
    if (sh.verbosity > 0) err << "serving " << store.size() << " sessions on " << o.host << ':' << port << '\n';
    if (!server.listen(o.host, port)) {
        throw Error(ErrorKind::Io, "cannot listen on " + o.host + ":" + std::to_string(port));
    }
    return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tipping forecasts, layer geometry, toy-block, regime and corpus tools", "tipping"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML/INI file with the same keys as the flags (flags win)");

    Shared shared;
    std::string format = "json";
    app.add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    app.add_flag("-v,--verbose", shared.verbosity, "Verbose diagnostics on stderr");

    std::function<int()> action;

    // basin
    BasinOpts basin;
    auto* basin_cmd = app.add_subcommand("basin", "Basin centroids, branch gaps, axis comparison");
    basin_cmd->require_subcommand(1);
    auto* centroid_cmd = basin_cmd->add_subcommand("centroid", "Phrase-isolated basin centroids at a layer");
    centroid_cmd->add_option("--hsf", basin.hsf, "Fixture file")->required();
    centroid_cmd->add_option("--layer", basin.layer, "Layer (default: penultimate)");
    centroid_cmd->add_option("--label", basin.label, "Single label A|B|D|C (default: B, D and the axis)");
    centroid_cmd->callback([&] { action = [&] { return run_basin_centroid(basin, shared, out); }; });
    auto* gap_cmd = basin_cmd->add_subcommand("gap", "Branch-selection gap A.(D - B) per A group, with sign test");
    gap_cmd->add_option("--hsf", basin.hsf, "Fixture file")->required();
    gap_cmd->add_option("--layer", basin.layer, "Layer (default: penultimate)");
    gap_cmd->callback([&] { action = [&] { return run_basin_gap(basin, out); }; });
    auto* cosine_cmd = basin_cmd->add_subcommand("axis-cosine", "Cosine of D - B with an external direction");
    cosine_cmd->add_option("--hsf", basin.hsf, "Fixture file")->required();
    cosine_cmd->add_option("--direction", basin.direction, "File of numbers (whitespace or comma separated)")->required();
    cosine_cmd->add_option("--layer", basin.layer, "Layer (default: penultimate)");
    cosine_cmd->callback([&] { action = [&] { return run_basin_axis_cosine(basin, out); }; });

    // forecast
    ForecastOpts forecast;
    auto* forecast_cmd = app.add_subcommand("forecast", "Tipping forecasts");
    forecast_cmd->require_subcommand(1);
    auto* tip_cmd = forecast_cmd->add_subcommand("tip", "Closed-form tipping index from C, B, D");
    tip_cmd->add_option("--hsf", forecast.hsf, "Fixture with A (or C), B and D groups");
    tip_cmd->add_option("--layer", forecast.layer, "Layer (default: penultimate)");
    tip_cmd->add_option("--c", forecast.c, "Conversation vector, comma separated")->delimiter(',');
    tip_cmd->add_option("--b", forecast.b, "B centroid, comma separated")->delimiter(',');
    tip_cmd->add_option("--d", forecast.d, "D centroid, comma separated")->delimiter(',');
    tip_cmd->callback([&] { action = [&] { return run_forecast_tip(forecast, out); }; });
    auto* timing_cmd = forecast_cmd->add_subcommand(
        "timing", "One-step continuation rule; the continuation state is the C group (else A)");
    timing_cmd->add_option("--hsf", forecast.hsf, "Fixture file")->required();
    timing_cmd->add_option("--layer", forecast.layer, "Layer (default: penultimate)");
    timing_cmd->callback([&] { action = [&] { return run_forecast_timing(forecast, out); }; });
    auto* replay_cmd = forecast_cmd->add_subcommand(
        "replay", "Replay per-turn C groups through a session; a phrase starting 'assistant:' marks an assistant turn");
    replay_cmd->add_option("--conversation", forecast.conversation, "Fixture with one C group per turn")->required();
    replay_cmd->add_option("--basins", forecast.basins, "Fixture with B and D groups (default: the conversation file)");
    replay_cmd->add_option("--layer", forecast.layer, "Layer (default: penultimate of the basin file)");
    replay_cmd->add_option("--warn", forecast.warn, "Warn when ceil(n*) <= this")->capture_default_str();
    replay_cmd->callback([&] { action = [&] { return run_forecast_replay(forecast, shared, out); }; });

    // layers
    LayersOpts layers;
    auto* layers_cmd = app.add_subcommand("layers", "Layerwise diagnostics");
    layers_cmd->require_subcommand(1);
    auto* scan_cmd = layers_cmd->add_subcommand("scan", "x, B.(D - B) and |D - B| at every layer");
    scan_cmd->add_option("--hsf", layers.hsf, "Fixture file")->required();
    scan_cmd->add_option("--window-first", layers.window_first, "Early window start")->capture_default_str();
    scan_cmd->add_option("--window-last", layers.window_last, "Early window end (inclusive)")->capture_default_str();
    scan_cmd->callback([&] { action = [&] { return run_layers_scan(layers, shared, out); }; });

    // cohesion
    CohesionOpts coh;
    auto* coh_cmd = app.add_subcommand("cohesion", "Largest-component fraction of the cosine graph per layer");
    coh_cmd->add_option("--hsf", coh.hsf, "Fixture file")->required();
    coh_cmd->add_option("--threshold", coh.threshold, "Cosine threshold")->capture_default_str();
    coh_cmd->add_option("--sweep", coh.sweep, "Comma-separated thresholds")->delimiter(',');
    coh_cmd->add_flag("--default-sweep", coh.default_sweep, "Sweep 0.85, 0.88, 0.90, 0.92, 0.95");
    coh_cmd->callback([&] { action = [&] { return run_cohesion(coh, shared, out); }; });

    // toy-sim
    ToyOpts toy_opts;
    auto* toy_cmd = app.add_subcommand("toy-sim", "Greedy generation through one transformer block over seeds");
    toy_cmd->add_option("--preset", toy_opts.presets, "bare, skip or full (repeatable)")
        ->check(CLI::IsMember({"bare", "skip", "full"}))
        ->capture_default_str();
    toy_cmd->add_option("--seeds", toy_opts.seeds, "Seed range, e.g. 0..49")->capture_default_str();
    toy_cmd->add_option("--fixture", toy_opts.fixture, "A/B/D fixture JSON (default: built-in Case-II generator)");
    toy_cmd->add_option("--save-fixture", toy_opts.save_fixture, "Write the fixture used to this path");
    toy_cmd->add_option("--max-steps", toy_opts.max_steps, "Generation limit")->capture_default_str();
    toy_cmd->callback([&] { action = [&] { return run_toy_sim(toy_opts, shared, out); }; });

    // map
    MapOpts map;
    auto* map_cmd = app.add_subcommand("map", "Noisy logistic-like map");
    map_cmd->require_subcommand(1);
    auto* sim_cmd = map_cmd->add_subcommand("sim", "Iterate x <- x + lambda x (1 - rho x) + eta");
    sim_cmd->add_option("--lambda", map.params.lambda, "Push coefficient")->required();
    sim_cmd->add_option("--rho", map.params.rho, "Saturation")->capture_default_str();
    sim_cmd->add_option("--sigma", map.params.noise_sigma, "Noise standard deviation")->capture_default_str();
    sim_cmd->add_option("--x0", map.params.x0, "Initial value")->capture_default_str();
    sim_cmd->add_option("--steps", map.params.steps, "Iterations")->capture_default_str();
    sim_cmd->add_option("--seed", map.params.seed, "Noise seed")->capture_default_str();
    sim_cmd->add_option("--bins", map.bins, "Also symbolize and classify with this many bins");
    sim_cmd->add_option("--binning", map.binning, "equal or quantile")->capture_default_str();
    sim_cmd->add_option("--burn-in", map.burn_in, "Iterates dropped before symbolizing")->capture_default_str();
    sim_cmd->callback([&] { action = [&] { return run_map_sim(map, shared, out); }; });

    // regimes
    RegimeOpts reg;
    auto* reg_cmd = app.add_subcommand("regimes", "Symbolic trajectory classification");
    reg_cmd->require_subcommand(1);
    auto* classify_cmd = reg_cmd->add_subcommand("classify", "Classify one sentence file or numeric series");
    classify_cmd->add_option("--sentences", reg.sentences, "One sentence per line (UTF-8)");
    classify_cmd->add_option("--series", reg.series, "Numbers separated by whitespace or commas");
    classify_cmd->add_flag("--split", reg.split, "Split raw text after . ! ? followed by whitespace");
    classify_cmd->add_option("--threshold", reg.threshold, "Sentence cosine threshold")->capture_default_str();
    classify_cmd->add_option("--bins", reg.bins, "Bins for numeric series")->capture_default_str();
    classify_cmd->add_option("--binning", reg.binning, "equal or quantile")->capture_default_str();
    classify_cmd->callback([&] { action = [&] { return run_regimes_classify(reg, out); }; });
    auto* cascade_cmd = reg_cmd->add_subcommand(
        "cascade", "Classify every transcript in a directory; the first number in each file name is its temperature");
    cascade_cmd->add_option("--dir", reg.dir, "Directory of transcripts")->required();
    cascade_cmd->add_flag("--split", reg.split, "Split raw text after . ! ? followed by whitespace");
    cascade_cmd->add_option("--threshold", reg.threshold, "Sentence cosine threshold")->capture_default_str();
    cascade_cmd->callback([&] { action = [&] { return run_regimes_cascade(reg, shared, out); }; });

    // corpus
    CorpusOpts corp;
    auto* corpus_cmd = app.add_subcommand("corpus", "Conversation corpus statistics (JSON lines input)");
    corpus_cmd->require_subcommand(1);
    auto* regress_cmd = corpus_cmd->add_subcommand("regress", "GEE logistic regression clustered by participant");
    regress_cmd->add_option("--in", corp.in, "Turn records, one JSON object per line")->required();
    regress_cmd->add_option("--correlation", corp.correlation, "exchangeable or independence")
        ->check(CLI::IsMember({"exchangeable", "independence"}))
        ->capture_default_str();
    regress_cmd->callback([&] { action = [&] { return run_corpus_regress(corp, shared, out); }; });
    auto* null_cmd = corpus_cmd->add_subcommand("null", "Lag-1 autocorrelation against a role-preserving shuffle");
    null_cmd->add_option("--in", corp.in, "Turn records, one JSON object per line")->required();
    null_cmd->add_option("--shuffles", corp.shuffles, "Number of shuffles")->capture_default_str();
    null_cmd->add_option("--seed", corp.seed, "Shuffle seed")->capture_default_str();
    null_cmd->add_option("--role", corp.role, "user or assistant")->capture_default_str();
    null_cmd->callback([&] { action = [&] { return run_corpus_null(corp, out); }; });

    // serve
    ServeOpts serve;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP forecast service");
    serve_cmd->add_option("--state-dir", serve.state_dir, "Directory for session JSON files")->capture_default_str();
    serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", serve.port, "Port (default: TIPPING_PORT, else 8080)");
    serve_cmd->callback([&] { action = [&] { return run_serve(serve, shared, err); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        // subcommand help requests surface as CallForHelp from the nested app
        err << e.what() << '\n' << "Run with --help for usage.\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }
    shared.format = format == "csv" ? Format::Csv : Format::Json;

    try {
        return action ? action() : kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }
}

}  // namespace tipping::cli
