#include "tipping/vector_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tipping/error.hpp"

namespace tipping {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::DimMismatch: return "dimension mismatch";
        case ErrorKind::EmptyInput: return "empty input";
        case ErrorKind::NonFinite: return "non-finite value";
        case ErrorKind::ZeroNorm: return "zero-norm vector";
        case ErrorKind::BadMagic: return "bad magic";
        case ErrorKind::Truncated: return "truncated";
        case ErrorKind::ShapeMismatch: return "shape mismatch";
        case ErrorKind::BadLabel: return "bad label";
        case ErrorKind::BadHeader: return "bad header";
        case ErrorKind::Io: return "i/o error";
        case ErrorKind::MissingGroup: return "missing group";
        case ErrorKind::Diverged: return "diverged";
        case ErrorKind::TooShort: return "too short";
        case ErrorKind::NotConverged: return "not converged";
        case ErrorKind::Singular: return "singular";
        case ErrorKind::Duplicate: return "duplicate";
        case ErrorKind::UnknownRole: return "unknown role";
        case ErrorKind::UnknownSession: return "unknown session";
    }
    return "error";
}

void require_same_dim(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::DimMismatch, std::string(what) + ": " + std::to_string(a.size()) +
                                                " vs " + std::to_string(b.size()));
    }
}

void require_finite(std::span<const double> a, const char* what) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) {
            throw Error(ErrorKind::NonFinite, std::string(what) + " at index " + std::to_string(i));
        }
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a, b, "dot");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double norm(std::span<const double> a) {
    double sum = 0.0;
    for (double v : a) sum += v * v;
    return std::sqrt(sum);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a, b, "cosine");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::ZeroNorm, "cosine of a zero vector is undefined");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a, b, "subtract");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector scaled(std::span<const double> a, double factor) {
    Vector out(a.begin(), a.end());
    for (double& v : out) v *= factor;
    return out;
}

Vector mean_of(std::span<const Vector> rows) {
    if (rows.empty()) throw Error(ErrorKind::EmptyInput, "mean of an empty list");
    const std::size_t dim = rows.front().size();
    for (const auto& r : rows) require_same_dim(rows.front(), r, "mean");

    Vector out(dim);
    std::vector<double> column(rows.size());
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][j];
        std::sort(column.begin(), column.end());
        double sum = 0.0;
        for (double v : column) sum += v;
        out[j] = sum / static_cast<double>(rows.size());
    }
    return out;
}

}  // namespace tipping
