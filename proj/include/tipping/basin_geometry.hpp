#pragma once

// Basin centroids, the order parameter x = C.(D - B) and the closed-form
// tipping index
//
//     n* = [C.(D - B) / B.(B - D)] * exp(B.(C - B))
//
// with its three cases: x >= 0 tips immediately (n* = 0); x < 0 with
// B.(D - B) > 0 tips after a finite n* > 0; otherwise B is an attractor and
// n* is infinite.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "tipping/state_io.hpp"
#include "tipping/vector_ops.hpp"

namespace tipping::geometry {

struct BasinPair {
    std::size_t layer = 0;
    Vector b;
    Vector d;
    Vector axis;  // d - b
};

BasinPair make_basin_pair(std::size_t layer, Vector b, Vector d);

struct ConversationState {
    std::size_t layer = 0;
    Vector c;
    std::size_t token_count = 0;
};

enum class TipCase { Immediate, Delayed, Never };
std::string_view to_string(TipCase c);

struct TipForecast {
    double x = 0.0;        // C.(D - B)
    double b_drive = 0.0;  // B.(D - B)
    TipCase kind = TipCase::Immediate;
    double n_star = 0.0;                     // +inf for Never
    std::optional<std::int64_t> n_star_ceil;  // nullopt means +inf
    bool saturated = false;                  // exp() overflowed and was clamped

    bool operator==(const TipForecast&) const = default;
};

// Plain token mean.
Vector centroid(std::span<const Vector> tokens);
// Mean of per-phrase means, so long phrases do not dominate.
Vector phrase_isolated_centroid(std::span<const std::vector<Vector>> phrases);

double order_parameter(const ConversationState& c, const BasinPair& basins);

TipForecast tip_forecast(std::span<const double> c, std::span<const double> b,
                         std::span<const double> d);

// One-step continuation rule: A1.D >= A1.B reports n* = 0, otherwise the
// closed form evaluated on A1.
TipForecast classify_timing(const ConversationState& c1, const BasinPair& basins);

double branch_gap(std::span<const double> a, const BasinPair& basins);

// Throws ZeroNorm when either vector is zero.
double axis_cosine(std::span<const double> axis, std::span<const double> external_direction);

struct AmplificationWindow {
    std::size_t first = 1;
    std::size_t last = 3;  // inclusive
};

// |x_final| over the mean |x| in the early window; +inf when that mean is 0.
double amplification(std::span<const double> xs, AmplificationWindow window = {});

// --- fixture-level helpers ---------------------------------------------

// Phrase-isolated centroid of every group carrying `label` at `layer`.
// Throws MissingGroup when no group has the label.
Vector label_centroid(const hsf::LabeledStateSet& set, hsf::Label label, std::size_t layer);

BasinPair basin_pair_at(const hsf::LabeledStateSet& set, std::size_t layer);

// Token mean over all conversation tokens (groups labelled A, else C).
ConversationState conversation_state_at(const hsf::LabeledStateSet& set, std::size_t layer);
// Same, but only over groups with the given label.
ConversationState conversation_state_at(const hsf::LabeledStateSet& set, std::size_t layer,
                                        hsf::Label label);

struct LayerScanRow {
    std::size_t layer = 0;
    double x = 0.0;
    double b_drive = 0.0;
    double axis_norm = 0.0;
};

std::vector<LayerScanRow> layer_scan(const hsf::LabeledStateSet& set);

}  // namespace tipping::geometry
