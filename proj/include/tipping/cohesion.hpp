#pragma once

// Cluster cohesion G_L: the largest-connected-component fraction of the
// mixed-species cosine-similarity graph (edge wherever cos >= threshold).

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "tipping/state_io.hpp"
#include "tipping/vector_ops.hpp"

namespace tipping::cohesion {

inline constexpr double kDefaultThreshold = 0.90;
inline const std::vector<double> kDefaultSweep = {0.85, 0.88, 0.90, 0.92, 0.95};

struct LabeledVector {
    hsf::Label label;
    Vector v;
};

struct CohesionReport {
    std::size_t layer = 0;
    double threshold = kDefaultThreshold;
    double g = 0.0;
    std::vector<std::size_t> component_sizes;  // descending
    // Share of each label's tokens that sit in the largest component.
    std::map<hsf::Label, double> species_fractions;

    bool operator==(const CohesionReport&) const = default;
};

CohesionReport cohesion(std::span<const LabeledVector> vectors, double threshold,
                        std::size_t layer = 0);

std::vector<CohesionReport> cohesion_curve(const hsf::LabeledStateSet& set, double threshold);

// g[threshold index][layer]
std::vector<std::vector<double>> threshold_sweep(const hsf::LabeledStateSet& set,
                                                 std::span<const double> thresholds);

// Every token of every group at one layer.
std::vector<LabeledVector> layer_population(const hsf::LabeledStateSet& set, std::size_t layer);

}  // namespace tipping::cohesion
