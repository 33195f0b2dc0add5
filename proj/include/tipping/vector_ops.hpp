#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tipping {

using Vector = std::vector<double>;

// All reductions run in double precision whatever the storage width.
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// Throws ZeroNorm when either side has zero length.
double cosine(std::span<const double> a, std::span<const double> b);

Vector subtract(std::span<const double> a, std::span<const double> b);
Vector scaled(std::span<const double> a, double factor);

// Arithmetic mean of equal-length rows. Each coordinate is summed in sorted
// order, so the result depends only on the multiset of rows and is bit-exact
// under any permutation of the input.
Vector mean_of(std::span<const Vector> rows);

void require_same_dim(std::span<const double> a, std::span<const double> b, const char* what);
void require_finite(std::span<const double> a, const char* what);

}  // namespace tipping
