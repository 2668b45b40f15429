#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace saop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline constexpr const char* kVersion = "0.1.0";

/// Axis-aligned box [lower, upper] in R^d. Used both for the input set U and
/// for the compact support W of the weight distribution.
struct Box {
    Vector lower;
    Vector upper;

    static Box uniform(Eigen::Index dim, double lo, double hi) {
        return Box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
    }

    static Box unbounded(Eigen::Index dim) {
        const double inf = std::numeric_limits<double>::infinity();
        return uniform(dim, -inf, inf);
    }

    Eigen::Index dim() const { return lower.size(); }

    void validate(const std::string& what) const {
        if (lower.size() != upper.size()) {
            throw std::invalid_argument(what + ": lower/upper size mismatch");
        }
        for (Eigen::Index i = 0; i < lower.size(); ++i) {
            if (!(lower[i] <= upper[i])) {
                throw std::invalid_argument(what + ": lower > upper at index " + std::to_string(i));
            }
        }
    }

    bool contains(const Vector& x) const {
        return x.size() == lower.size() && (x.array() >= lower.array()).all() &&
               (x.array() <= upper.array()).all();
    }

    Vector clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

}  // namespace saop
