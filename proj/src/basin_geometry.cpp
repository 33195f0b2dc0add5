#include "tipping/basin_geometry.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "tipping/error.hpp"

namespace tipping::geometry {

std::string_view to_string(TipCase c) {
    switch (c) {
        case TipCase::Immediate: return "Immediate";
        case TipCase::Delayed: return "Delayed";
        case TipCase::Never: return "Never";
    }
    return "?";
}

BasinPair make_basin_pair(std::size_t layer, Vector b, Vector d) {
    require_same_dim(b, d, "basin pair");
    require_finite(b, "basin B");
    require_finite(d, "basin D");
    BasinPair pair{layer, std::move(b), std::move(d), {}};
    pair.axis = subtract(pair.d, pair.b);
    return pair;
}

Vector centroid(std::span<const Vector> tokens) {
    if (tokens.empty()) throw Error(ErrorKind::EmptyInput, "centroid of no tokens");
    return mean_of(tokens);
}

Vector phrase_isolated_centroid(std::span<const std::vector<Vector>> phrases) {
    if (phrases.empty()) throw Error(ErrorKind::EmptyInput, "centroid of no phrases");
    std::vector<Vector> means;
    means.reserve(phrases.size());
    for (const auto& phrase : phrases) means.push_back(centroid(phrase));
    return mean_of(means);
}

double order_parameter(const ConversationState& c, const BasinPair& basins) {
    if (c.layer != basins.layer) {
        throw Error(ErrorKind::InvalidArgument, "conversation state is at layer " +
                                                    std::to_string(c.layer) + ", basins at " +
                                                    std::to_string(basins.layer));
    }
    return dot(c.c, basins.axis);
}

TipForecast tip_forecast(std::span<const double> c, std::span<const double> b,
                         std::span<const double> d) {
    require_same_dim(c, b, "forecast C vs B");
    require_same_dim(b, d, "forecast B vs D");
    const Vector axis = subtract(d, b);

    TipForecast f;
    f.x = dot(c, axis);
    f.b_drive = dot(b, axis);

    if (f.x >= 0.0) {
        f.kind = TipCase::Immediate;
        f.n_star = 0.0;
        f.n_star_ceil = 0;
        return f;
    }
    if (!(f.b_drive > 0.0)) {
        f.kind = TipCase::Never;
        f.n_star = std::numeric_limits<double>::infinity();
        f.n_star_ceil.reset();
        return f;
    }

    // B.(B - D) = -b_drive
    f.kind = TipCase::Delayed;
    const double ratio = f.x / -f.b_drive;
    const double exponent = dot(b, subtract(c, b));
    constexpr double kMax = std::numeric_limits<double>::max();
    double growth = std::exp(exponent);
    if (!std::isfinite(growth)) {
        growth = kMax;
        f.saturated = true;
    }
    double n = ratio * growth;
    if (!std::isfinite(n)) {
        n = kMax;
        f.saturated = true;
    } else if (n <= 0.0) {
        // exp underflow; keep the Delayed case strictly positive
        n = std::numeric_limits<double>::min();
        f.saturated = true;
    }
    f.n_star = n;
    const double ceiled = std::ceil(n);
    constexpr auto kIntMax = std::numeric_limits<std::int64_t>::max();
    if (ceiled >= static_cast<double>(kIntMax)) {
        f.n_star_ceil = kIntMax;
        f.saturated = true;
    } else {
        f.n_star_ceil = static_cast<std::int64_t>(ceiled);
    }
    return f;
}

TipForecast classify_timing(const ConversationState& c1, const BasinPair& basins) {
    if (c1.layer != basins.layer) {
        throw Error(ErrorKind::InvalidArgument, "continuation state and basins are at different layers");
    }
    require_same_dim(c1.c, basins.b, "timing");
    if (dot(c1.c, basins.d) >= dot(c1.c, basins.b)) {
        TipForecast f;
        f.x = dot(c1.c, basins.axis);
        f.b_drive = dot(basins.b, basins.axis);
        f.kind = TipCase::Immediate;
        f.n_star = 0.0;
        f.n_star_ceil = 0;
        return f;
    }
    return tip_forecast(c1.c, basins.b, basins.d);
}

double branch_gap(std::span<const double> a, const BasinPair& basins) {
    return dot(a, basins.axis);
}

double axis_cosine(std::span<const double> axis, std::span<const double> external_direction) {
    return cosine(axis, external_direction);
}

double amplification(std::span<const double> xs, AmplificationWindow window) {
    if (xs.empty()) throw Error(ErrorKind::EmptyInput, "amplification of an empty x sequence");
    if (window.first > window.last || window.last >= xs.size()) {
        throw Error(ErrorKind::InvalidArgument,
                    "early window [" + std::to_string(window.first) + ", " +
                        std::to_string(window.last) + "] outside " + std::to_string(xs.size()) +
                        " layers");
    }
    double reference = 0.0;
    for (std::size_t i = window.first; i <= window.last; ++i) reference += std::abs(xs[i]);
    reference /= static_cast<double>(window.last - window.first + 1);
    if (reference == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(xs.back()) / reference;
}

// --- fixture-level helpers ---------------------------------------------

namespace {

std::vector<Vector> tokens_at(const hsf::Group& g, std::size_t layer, std::size_t dim) {
    std::vector<Vector> out;
    out.reserve(g.token_count);
    for (std::size_t t = 0; t < g.token_count; ++t) out.push_back(g.token_vector(layer, t, dim));
    return out;
}

void require_layer(const hsf::LabeledStateSet& set, std::size_t layer) {
    if (layer >= set.layer_count) {
        throw Error(ErrorKind::InvalidArgument, "layer " + std::to_string(layer) + " outside " +
                                                    std::to_string(set.layer_count) + " layers");
    }
}

}  // namespace

Vector label_centroid(const hsf::LabeledStateSet& set, hsf::Label label, std::size_t layer) {
    require_layer(set, layer);
    const auto groups = set.groups_with(label);
    if (groups.empty()) {
        throw Error(ErrorKind::MissingGroup, "no group labelled " + std::string(hsf::to_string(label)));
    }
    std::vector<std::vector<Vector>> phrases;
    phrases.reserve(groups.size());
    for (const auto* g : groups) phrases.push_back(tokens_at(*g, layer, set.dim));
    return phrase_isolated_centroid(phrases);
}

BasinPair basin_pair_at(const hsf::LabeledStateSet& set, std::size_t layer) {
    return make_basin_pair(layer, label_centroid(set, hsf::Label::B, layer),
                           label_centroid(set, hsf::Label::D, layer));
}

ConversationState conversation_state_at(const hsf::LabeledStateSet& set, std::size_t layer,
                                        hsf::Label label) {
    require_layer(set, layer);
    const auto groups = set.groups_with(label);
    if (groups.empty()) {
        throw Error(ErrorKind::MissingGroup, "no group labelled " + std::string(hsf::to_string(label)));
    }
    std::vector<Vector> tokens;
    for (const auto* g : groups) {
        for (std::size_t t = 0; t < g->token_count; ++t) tokens.push_back(g->token_vector(layer, t, set.dim));
    }
    const std::size_t count = tokens.size();
    return {layer, centroid(tokens), count};
}

ConversationState conversation_state_at(const hsf::LabeledStateSet& set, std::size_t layer) {
    if (set.has_label(hsf::Label::A)) return conversation_state_at(set, layer, hsf::Label::A);
    if (set.has_label(hsf::Label::C)) return conversation_state_at(set, layer, hsf::Label::C);
    throw Error(ErrorKind::MissingGroup, "no conversation group (A or C)");
}

std::vector<LayerScanRow> layer_scan(const hsf::LabeledStateSet& set) {
    for (auto label : {hsf::Label::B, hsf::Label::D}) {
        if (!set.has_label(label)) {
            throw Error(ErrorKind::MissingGroup, "layer scan needs a " +
                                                     std::string(hsf::to_string(label)) + " group");
        }
    }
    std::vector<LayerScanRow> rows;
    rows.reserve(set.layer_count);
    for (std::size_t layer = 0; layer < set.layer_count; ++layer) {
        const BasinPair basins = basin_pair_at(set, layer);
        const ConversationState c = conversation_state_at(set, layer);
        rows.push_back({layer, order_parameter(c, basins), dot(basins.b, basins.axis), norm(basins.axis)});
    }
    return rows;
}

}  // namespace tipping::geometry
