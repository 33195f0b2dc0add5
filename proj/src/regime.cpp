#include "tipping/regime.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

#include "tipping/error.hpp"
#include "tipping/random.hpp"

namespace tipping::regime {

void MapParams::validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw Error(ErrorKind::InvalidArgument, "rho must be > 0");
    if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw Error(ErrorKind::InvalidArgument, "noise_sigma must be >= 0");
    }
    if (!std::isfinite(lambda) || !std::isfinite(x0)) {
        throw Error(ErrorKind::NonFinite, "lambda and x0 must be finite");
    }
}

std::vector<double> iterate_map(const MapParams& p) {
    p.validate();
    Rng rng(p.seed);
    std::vector<double> xs;
    xs.reserve(p.steps + 1);
    xs.push_back(p.x0);
    double x = p.x0;
    for (std::size_t n = 0; n < p.steps; ++n) {
        const double eta = p.noise_sigma * rng.normal();
        x = x + p.lambda * x * (1.0 - p.rho * x) + eta;
        if (!std::isfinite(x)) {
            throw Error(ErrorKind::Diverged, "map left the finite range at step " + std::to_string(n + 1));
        }
        xs.push_back(x);
    }
    return xs;
}

std::string to_string(const Regime& r) {
    switch (r.kind) {
        case RegimeKind::F: return "F";
        case RegimeKind::S: return "S";
        case RegimeKind::C2: return "C2";
        case RegimeKind::Cq: return "C" + std::to_string(r.q);
        case RegimeKind::I: return "I";
        case RegimeKind::X: return "X";
        case RegimeKind::N: return "N";
    }
    return "?";
}

char cascade_char(const Regime& r) {
    switch (r.kind) {
        case RegimeKind::F: return 'F';
        case RegimeKind::S: return 'S';
        case RegimeKind::C2:
        case RegimeKind::Cq: return 'C';
        case RegimeKind::I: return 'I';
        case RegimeKind::X: return 'X';
        case RegimeKind::N: return 'N';
    }
    return '?';
}

std::size_t SymbolicTrajectory::alphabet_size() const {
    std::vector<std::size_t> sorted = symbols;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

std::string SymbolicTrajectory::symbol_string() const {
    std::string out;
    out.reserve(symbols.size());
    for (std::size_t s : symbols) {
        if (s < 26) {
            out.push_back(static_cast<char>('A' + s));
        } else if (s < 52) {
            out.push_back(static_cast<char>('a' + (s - 26)));
        } else {
            throw Error(ErrorKind::InvalidArgument, "symbol " + std::to_string(s) + " has no letter");
        }
    }
    return out;
}

SymbolicTrajectory from_symbol_string(std::string_view letters) {
    SymbolicTrajectory t;
    t.symbols.reserve(letters.size());
    for (char c : letters) {
        if (c >= 'A' && c <= 'Z') {
            t.symbols.push_back(static_cast<std::size_t>(c - 'A'));
        } else if (c >= 'a' && c <= 'z') {
            t.symbols.push_back(static_cast<std::size_t>(c - 'a') + 26);
        } else {
            throw Error(ErrorKind::InvalidArgument, std::string("not a symbol letter: '") + c + "'");
        }
    }
    return t;
}

// --- text ----------------------------------------------------------------

namespace {

// Decodes UTF-8 into code points. A byte that does not start a valid
// sequence becomes 0xDC00 + byte, so malformed input still yields stable
// features.
std::u32string decode_utf8_lower(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        }
        bool valid = len > 0 && i + len <= s.size();
        for (std::size_t k = 1; valid && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                valid = false;
            } else {
                cp = (cp << 6) | (b & 0x3F);
            }
        }
        if (!valid) {
            out.push_back(0xDC00 + b0);
            ++i;
            continue;
        }
        if (cp >= U'A' && cp <= U'Z') cp += U'a' - U'A';
        out.push_back(cp);
        i += len;
    }
    return out;
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<SparseRow> tfidf_rows(std::span<const std::string> sentences) {
    std::vector<std::map<std::u32string, double>> counts(sentences.size());
    std::map<std::u32string, std::size_t> document_frequency;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const std::u32string text = decode_utf8_lower(sentences[i]);
        for (std::size_t n = 3; n <= 5; ++n) {
            for (std::size_t start = 0; start + n <= text.size(); ++start) {
                counts[i][text.substr(start, n)] += 1.0;
            }
        }
        for (const auto& [gram, c] : counts[i]) document_frequency[gram] += 1;
    }

    std::map<std::u32string, std::size_t> index;
    for (const auto& [gram, df] : document_frequency) index.emplace(gram, index.size());

    const double n_docs = static_cast<double>(sentences.size());
    std::vector<SparseRow> rows(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        SparseRow& row = rows[i];
        double squared = 0.0;
        for (const auto& [gram, tf] : counts[i]) {
            const double df = static_cast<double>(document_frequency.at(gram));
            const double weight = tf * (std::log((1.0 + n_docs) / (1.0 + df)) + 1.0);
            row.emplace_back(index.at(gram), weight);
            squared += weight * weight;
        }
        const double length = std::sqrt(squared);
        for (auto& [feature, weight] : row) weight /= length;
    }
    return rows;
}

double sparse_dot(const SparseRow& a, const SparseRow& b) {
    double total = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            total += ia->second * ib->second;
            ++ia;
            ++ib;
        }
    }
    return total;
}

SymbolicTrajectory symbolize_text(std::span<const std::string> sentences, double similarity_threshold) {
    if (sentences.empty()) throw Error(ErrorKind::EmptyInput, "no sentences to symbolize");
    const auto rows = tfidf_rows(sentences);
    const std::size_t n = rows.size();

    DisjointSets sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].empty()) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!rows[j].empty() && sparse_dot(rows[i], rows[j]) >= similarity_threshold) sets.unite(i, j);
        }
    }

    SymbolicTrajectory t;
    std::map<std::size_t, std::size_t> symbol_of_root;
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].empty()) {
            t.flagged.push_back(i);
            t.symbols.push_back(symbol_of_root.size());
            symbol_of_root.emplace(n + i, symbol_of_root.size());  // reserve a fresh symbol
            continue;
        }
        const auto [it, inserted] = symbol_of_root.emplace(sets.find(i), symbol_of_root.size());
        t.symbols.push_back(it->second);
    }
    return t;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        const auto first = current.find_first_not_of(" \t\r\n\f\v");
        if (first != std::string::npos) {
            const auto last = current.find_last_not_of(" \t\r\n\f\v");
            out.push_back(current.substr(first, last - first + 1));
        }
        current.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            flush();
            continue;
        }
        current.push_back(c);
        const bool terminal = c == '.' || c == '!' || c == '?';
        if (terminal && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            flush();
        }
    }
    flush();
    return out;
}

// --- numeric ------------------------------------------------------------

SymbolicTrajectory symbolize_numeric(std::span<const double> xs, std::size_t bins, Binning binning) {
    if (xs.empty()) throw Error(ErrorKind::EmptyInput, "no values to symbolize");
    if (bins == 0) throw Error(ErrorKind::InvalidArgument, "bins must be positive");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i])) {
            throw Error(ErrorKind::NonFinite, "value at index " + std::to_string(i) + " is not finite");
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it;
    const double hi = *hi_it;

    SymbolicTrajectory t;
    t.symbols.assign(xs.size(), 0);
    if (lo == hi) return t;

    if (binning == Binning::EqualWidth) {
        const double width = (hi - lo) / static_cast<double>(bins);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const auto k = static_cast<std::size_t>(std::floor((xs[i] - lo) / width));
            t.symbols[i] = std::min(k, bins - 1);
        }
    } else {
        std::vector<double> sorted(xs.begin(), xs.end());
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> edges;
        for (std::size_t k = 1; k < bins; ++k) edges.push_back(sorted[k * sorted.size() / bins]);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            t.symbols[i] = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), xs[i]) -
                                                    edges.begin());
        }
        // bins that collapsed onto the same edge would leave gaps; renumber densely
        std::vector<std::size_t> used = t.symbols;
        std::sort(used.begin(), used.end());
        used.erase(std::unique(used.begin(), used.end()), used.end());
        for (auto& s : t.symbols) {
            s = static_cast<std::size_t>(std::lower_bound(used.begin(), used.end(), s) - used.begin());
        }
    }
    return t;
}

// --- classification -----------------------------------------------------

Diagnostics diagnostics(std::span<const std::size_t> symbols, const ClassifierThresholds& t) {
    if (symbols.size() < t.min_length) {
        throw Error(ErrorKind::TooShort, "trajectory of length " + std::to_string(symbols.size()) +
                                             " is shorter than " + std::to_string(t.min_length));
    }
    const std::size_t n = symbols.size();
    std::size_t w = static_cast<std::size_t>(std::ceil(t.window_fraction * static_cast<double>(n) - 1e-9));
    w = std::clamp<std::size_t>(w, 2, n);
    const auto window = symbols.subspan(n - w);

    Diagnostics d;
    d.window_length = w;

    std::map<std::size_t, std::size_t> freq;
    for (std::size_t s : window) freq[s] += 1;
    std::size_t dominant = 0;
    for (const auto& [s, c] : freq) dominant = std::max(dominant, c);
    d.dominant_symbol_share = static_cast<double>(dominant) / static_cast<double>(w);

    if (freq.size() > 1) {
        double h = 0.0;
        for (const auto& [s, c] : freq) {
            const double p = static_cast<double>(c) / static_cast<double>(w);
            h -= p * std::log(p);
        }
        d.entropy = h / std::log(static_cast<double>(freq.size()));
    }

    std::size_t longest = 1;
    std::size_t run = 1;
    std::size_t switches = 0;
    std::map<std::size_t, std::map<std::size_t, std::size_t>> transitions;
    for (std::size_t i = 1; i < w; ++i) {
        transitions[window[i - 1]][window[i]] += 1;
        if (window[i] == window[i - 1]) {
            longest = std::max(longest, ++run);
        } else {
            run = 1;
            ++switches;
        }
    }
    d.max_run_fraction = static_cast<double>(longest) / static_cast<double>(w);
    d.switch_rate = static_cast<double>(switches) / static_cast<double>(w - 1);

    // share of transitions that follow their source symbol's most frequent successor
    std::size_t modal = 0;
    for (const auto& [from, successors] : transitions) {
        std::size_t best = 0;
        for (const auto& [to, c] : successors) best = std::max(best, c);
        modal += best;
    }
    d.determinism = static_cast<double>(modal) / static_cast<double>(w - 1);

    for (std::size_t p = 1; p <= t.max_period && t.period_repeats * p <= w; ++p) {
        bool periodic = true;
        for (std::size_t i = 0; i + p < w && periodic; ++i) periodic = window[i] == window[i + p];
        if (periodic) {
            d.period = p;
            break;
        }
    }
    return d;
}

Regime classify(const Diagnostics& d, const ClassifierThresholds& t) {
    if (d.dominant_symbol_share >= t.frozen_share && d.max_run_fraction >= t.frozen_run) {
        return {RegimeKind::F, 0};
    }
    if (d.dominant_symbol_share >= t.sparse_share && d.switch_rate < t.sparse_switch) {
        return {RegimeKind::S, 0};
    }
    if (d.period && *d.period >= 2) {
        if (*d.period == 2) return {RegimeKind::C2, 2};
        return {RegimeKind::Cq, *d.period};
    }
    if (d.determinism >= t.intermittent_determinism && d.max_run_fraction >= t.intermittent_run) {
        return {RegimeKind::I, 0};
    }
    if (d.entropy >= t.noise_entropy && d.determinism < t.noise_determinism) {
        return {RegimeKind::N, 0};
    }
    return {RegimeKind::X, 0};
}

Regime classify(SymbolicTrajectory& trajectory, const ClassifierThresholds& t) {
    trajectory.diagnostics = diagnostics(trajectory.symbols, t);
    trajectory.regime = classify(*trajectory.diagnostics, t);
    return *trajectory.regime;
}

CascadeResult temperature_cascade(std::vector<std::pair<double, SymbolicTrajectory>> runs,
                                  const ClassifierThresholds& t) {
    std::stable_sort(runs.begin(), runs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    CascadeResult result;
    for (auto& [temperature, trajectory] : runs) {
        CascadeRow row;
        row.temperature = temperature;
        row.length = trajectory.symbols.size();
        if (trajectory.symbols.size() >= t.min_length) {
            row.diagnostics = diagnostics(trajectory.symbols, t);
            row.regime = classify(*row.diagnostics, t);
            result.regimes.push_back(cascade_char(*row.regime));
        } else {
            result.regimes.push_back('?');
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace tipping::regime
