#pragma once

// Noisy logistic-like map, symbolization of numeric and sentence
// trajectories, and the seven-regime classifier (F, S, C2, Cq, I, X, N).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tipping::regime {

struct MapParams {
    double lambda = 0.0;
    double rho = 1.0;
    double noise_sigma = 0.0;
    double x0 = 0.0;
    std::size_t steps = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// x_0 .. x_steps. Throws Diverged naming the step at which the iterate left
// the finite range.
std::vector<double> iterate_map(const MapParams& params);

struct Diagnostics {
    std::size_t window_length = 0;
    std::optional<std::size_t> period;
    double entropy = 0.0;
    double determinism = 0.0;
    double max_run_fraction = 0.0;
    double switch_rate = 0.0;
    double dominant_symbol_share = 0.0;

    bool operator==(const Diagnostics&) const = default;
};

enum class RegimeKind { F, S, C2, Cq, I, X, N };

struct Regime {
    RegimeKind kind = RegimeKind::X;
    std::size_t q = 0;  // cycle length for C2 and Cq, 0 otherwise

    bool operator==(const Regime&) const = default;
};

std::string to_string(const Regime& r);  // "F", "C2", "C5", ...
char cascade_char(const Regime& r);      // C2 and Cq both render as 'C'

struct SymbolicTrajectory {
    std::vector<std::size_t> symbols;
    // Positions whose input produced no features (empty sentences); each
    // carries its own singleton symbol.
    std::vector<std::size_t> flagged;
    std::optional<Diagnostics> diagnostics;
    std::optional<Regime> regime;

    std::size_t alphabet_size() const;
    // 'A'..'Z' then 'a'..'z'; throws when the alphabet is larger than 52.
    std::string symbol_string() const;
};

SymbolicTrajectory from_symbol_string(std::string_view letters);

// --- symbolization -------------------------------------------------------

inline constexpr double kTextSimilarityThreshold = 0.45;

// Character 3/4/5-gram TF-IDF over the sentence set, cosine graph at the
// threshold, components labelled in first-appearance order.
SymbolicTrajectory symbolize_text(std::span<const std::string> sentences,
                                  double similarity_threshold = kTextSimilarityThreshold);

// Sparse l2-normalised TF-IDF rows, sorted by feature index.
using SparseRow = std::vector<std::pair<std::size_t, double>>;
std::vector<SparseRow> tfidf_rows(std::span<const std::string> sentences);
double sparse_dot(const SparseRow& a, const SparseRow& b);

// Splits raw text after '.', '!' or '?' followed by whitespace, and at line
// breaks. Blank pieces are dropped and surrounding whitespace trimmed.
std::vector<std::string> split_sentences(std::string_view text);

enum class Binning { EqualWidth, Quantile };

// EqualWidth: `bins` equal intervals over [min, max]. Quantile: bin edges at
// the empirical k/bins quantiles, so each symbol gets a near-equal share.
// Constant input maps to a single symbol either way.
SymbolicTrajectory symbolize_numeric(std::span<const double> xs, std::size_t bins,
                                     Binning binning = Binning::EqualWidth);

// --- classification ------------------------------------------------------

struct ClassifierThresholds {
    double window_fraction = 0.8;
    std::size_t min_length = 10;
    double frozen_share = 0.95;
    double frozen_run = 0.90;
    double sparse_share = 0.90;
    double sparse_switch = 0.05;
    std::size_t max_period = 8;
    std::size_t period_repeats = 4;
    double intermittent_determinism = 0.80;
    double intermittent_run = 0.30;
    double noise_entropy = 0.85;
    double noise_determinism = 0.55;
};

// Diagnostics on the trailing window of the sequence. Throws TooShort below
// min_length.
Diagnostics diagnostics(std::span<const std::size_t> symbols, const ClassifierThresholds& t = {});

Regime classify(const Diagnostics& d, const ClassifierThresholds& t = {});

// Fills diagnostics and regime in place and returns the regime.
Regime classify(SymbolicTrajectory& trajectory, const ClassifierThresholds& t = {});

struct CascadeRow {
    double temperature = 0.0;
    std::size_t length = 0;
    std::optional<Diagnostics> diagnostics;  // empty when the run is too short
    std::optional<Regime> regime;
};

struct CascadeResult {
    // One character per run ordered by temperature; '?' marks a run too short
    // to classify.
    std::string regimes;
    std::vector<CascadeRow> rows;
};

CascadeResult temperature_cascade(std::vector<std::pair<double, SymbolicTrajectory>> runs,
                                  const ClassifierThresholds& t = {});

}  // namespace tipping::regime
