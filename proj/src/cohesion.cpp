#include "tipping/cohesion.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

#include "tipping/error.hpp"

namespace tipping::cohesion {

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
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
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

constexpr std::array<hsf::Label, 4> kLabels = {hsf::Label::A, hsf::Label::B, hsf::Label::D,
                                               hsf::Label::C};

std::size_t label_slot(hsf::Label l) { return static_cast<std::size_t>(l); }

// Upper-triangular cosine matrix, row-major over i < j.
std::vector<double> pairwise_cosines(std::span<const LabeledVector> vectors) {
    const std::size_t n = vectors.size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        require_finite(vectors[i].v, "cohesion vector");
        if (i > 0) require_same_dim(vectors[0].v, vectors[i].v, "cohesion");
        norms[i] = norm(vectors[i].v);
        if (norms[i] == 0.0) {
            throw Error(ErrorKind::ZeroNorm, "vector " + std::to_string(i) + " has zero norm");
        }
    }
    std::vector<double> cos(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            cos[i * n + j] = dot(vectors[i].v, vectors[j].v) / (norms[i] * norms[j]);
        }
    }
    return cos;
}

CohesionReport report_from(std::span<const LabeledVector> vectors, const std::vector<double>& cos,
                           double threshold, std::size_t layer) {
    const std::size_t n = vectors.size();
    DisjointSets sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (cos[i * n + j] >= threshold) sets.unite(i, j);
        }
    }

    // per component: size and per-label counts
    std::vector<std::size_t> root_of(n);
    std::map<std::size_t, std::array<std::size_t, 4>> counts;
    std::array<std::size_t, 4> label_totals{};
    for (std::size_t i = 0; i < n; ++i) {
        root_of[i] = sets.find(i);
        counts[root_of[i]][label_slot(vectors[i].label)] += 1;
        label_totals[label_slot(vectors[i].label)] += 1;
    }

    CohesionReport report;
    report.layer = layer;
    report.threshold = threshold;
    std::array<std::size_t, 4> best{};
    std::size_t best_size = 0;
    for (const auto& [root, c] : counts) {
        const std::size_t size = c[0] + c[1] + c[2] + c[3];
        report.component_sizes.push_back(size);
        // Ties on size are broken on the label-count tuple, which does not
        // depend on input order.
        if (size > best_size || (size == best_size && c > best)) {
            best_size = size;
            best = c;
        }
    }
    std::sort(report.component_sizes.rbegin(), report.component_sizes.rend());
    report.g = static_cast<double>(best_size) / static_cast<double>(n);
    for (auto label : kLabels) {
        const std::size_t total = label_totals[label_slot(label)];
        if (total == 0) continue;
        report.species_fractions[label] =
            static_cast<double>(best[label_slot(label)]) / static_cast<double>(total);
    }
    return report;
}

}  // namespace

CohesionReport cohesion(std::span<const LabeledVector> vectors, double threshold, std::size_t layer) {
    if (vectors.empty()) throw Error(ErrorKind::EmptyInput, "cohesion needs at least one vector");
    return report_from(vectors, pairwise_cosines(vectors), threshold, layer);
}

std::vector<LabeledVector> layer_population(const hsf::LabeledStateSet& set, std::size_t layer) {
    std::vector<LabeledVector> out;
    for (const auto& g : set.groups) {
        for (std::size_t t = 0; t < g.token_count; ++t) {
            out.push_back({g.label, g.token_vector(layer, t, set.dim)});
        }
    }
    return out;
}

std::vector<CohesionReport> cohesion_curve(const hsf::LabeledStateSet& set, double threshold) {
    std::vector<CohesionReport> curve;
    curve.reserve(set.layer_count);
    for (std::size_t layer = 0; layer < set.layer_count; ++layer) {
        curve.push_back(cohesion(layer_population(set, layer), threshold, layer));
    }
    return curve;
}

std::vector<std::vector<double>> threshold_sweep(const hsf::LabeledStateSet& set,
                                                 std::span<const double> thresholds) {
    std::vector<std::vector<double>> g(thresholds.size(), std::vector<double>(set.layer_count));
    for (std::size_t layer = 0; layer < set.layer_count; ++layer) {
        const auto population = layer_population(set, layer);
        if (population.empty()) throw Error(ErrorKind::EmptyInput, "no tokens in fixture");
        const auto cos = pairwise_cosines(population);
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            g[k][layer] = report_from(population, cos, thresholds[k], layer).g;
        }
    }
    return g;
}

}  // namespace tipping::cohesion
