#pragma once

// Basis-function families and saturated linear-in-weights feedback policies
//   u_j(x) = clip(<w_j, phi(x)>, lower_j, upper_j).

#include "saop/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace saop {

struct BasisFunction {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;  // optional, d phi / dx
    std::string descriptor;
};

class BasisSet {
public:
    BasisSet() = default;

    void add(BasisFunction f) {
        if (!f.value) throw std::invalid_argument("BasisSet: basis function without value");
        functions_.push_back(std::move(f));
    }

    BasisSet& append(const BasisSet& other) {
        functions_.insert(functions_.end(), other.functions_.begin(), other.functions_.end());
        return *this;
    }

    Eigen::Index size() const { return static_cast<Eigen::Index>(functions_.size()); }
    bool empty() const { return functions_.empty(); }
    const BasisFunction& operator[](std::size_t i) const { return functions_[i]; }

    /// [phi_1(x), ..., phi_N(x)]
    Vector eval(const Vector& x) const {
        Vector phi(size());
        for (Eigen::Index i = 0; i < size(); ++i) phi[i] = functions_[static_cast<std::size_t>(i)].value(x);
        return phi;
    }

    bool has_gradients() const {
        return !functions_.empty() &&
               std::all_of(functions_.begin(), functions_.end(), [](const auto& f) { return static_cast<bool>(f.gradient); });
    }

    /// N x n matrix of basis gradients. Requires has_gradients().
    Matrix jacobian(const Vector& x) const {
        Matrix d(size(), x.size());
        for (Eigen::Index i = 0; i < size(); ++i) d.row(i) = functions_[static_cast<std::size_t>(i)].gradient(x).transpose();
        return d;
    }

    std::vector<std::string> descriptors() const {
        std::vector<std::string> out;
        out.reserve(functions_.size());
        for (const auto& f : functions_) out.push_back(f.descriptor);
        return out;
    }

    nlohmann::json to_json() const { return nlohmann::json{{"size", size()}, {"functions", descriptors()}}; }

private:
    std::vector<BasisFunction> functions_;
};

inline Vector eval_basis(const BasisSet& basis, const Vector& x) { return basis.eval(x); }

namespace detail {

inline std::string format_point(const Vector& c) {
    std::ostringstream os;
    os << '(';
    for (Eigen::Index i = 0; i < c.size(); ++i) os << (i ? "," : "") << c[i];
    os << ')';
    return os.str();
}

}  // namespace detail

/// Gaussian RBFs phi_i(x) = exp(-|x_S - c_i|^2 / (2 sigma^2)), where x_S are
/// the state coordinates listed in `coords` (all of them when empty). Each
/// row of `centers` is one center.
inline BasisSet make_rbf(const Matrix& centers, double sigma, std::vector<int> coords = {}) {
    if (!(sigma > 0.0)) throw std::invalid_argument("make_rbf: sigma must be positive");
    if (centers.rows() < 1) throw std::invalid_argument("make_rbf: need at least one center");
    if (coords.empty()) {
        for (int i = 0; i < centers.cols(); ++i) coords.push_back(i);
    }
    if (static_cast<Eigen::Index>(coords.size()) != centers.cols()) {
        throw std::invalid_argument("make_rbf: center width does not match coordinate list");
    }
    for (int c : coords) {
        if (c < 0) throw std::invalid_argument("make_rbf: negative coordinate index");
    }
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    BasisSet basis;
    for (Eigen::Index r = 0; r < centers.rows(); ++r) {
        Vector c = centers.row(r).transpose();
        auto value = [c, coords, inv_two_var](const Vector& x) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < coords.size(); ++i) {
                const double d = x[coords[i]] - c[static_cast<Eigen::Index>(i)];
                d2 += d * d;
            }
            return std::exp(-d2 * inv_two_var);
        };
        auto gradient = [c, coords, inv_two_var, value](const Vector& x) {
            Vector g = Vector::Zero(x.size());
            const double v = value(x);
            for (std::size_t i = 0; i < coords.size(); ++i) {
                g[coords[i]] = -2.0 * inv_two_var * (x[coords[i]] - c[static_cast<Eigen::Index>(i)]) * v;
            }
            return g;
        };
        std::ostringstream desc;
        desc << "rbf center=" << detail::format_point(c) << " sigma=" << sigma;
        basis.add({value, gradient, desc.str()});
    }
    return basis;
}

/// A monomial is a list of (0-based) state indices with repetition:
/// {0, 0} is x1^2, {0, 1} is x1*x2 and {} is the constant 1.
using Monomial = std::vector<int>;

inline BasisSet make_polynomial(const std::vector<Monomial>& terms, int state_dim) {
    if (terms.empty()) throw std::invalid_argument("make_polynomial: no terms");
    BasisSet basis;
    for (const auto& term : terms) {
        std::vector<int> power(static_cast<std::size_t>(state_dim), 0);
        for (int idx : term) {
            if (idx < 0 || idx >= state_dim) {
                throw std::invalid_argument("make_polynomial: index " + std::to_string(idx) + " out of range");
            }
            ++power[static_cast<std::size_t>(idx)];
        }
        auto value = [power](const Vector& x) {
            double v = 1.0;
            for (std::size_t i = 0; i < power.size(); ++i) {
                for (int p = 0; p < power[i]; ++p) v *= x[static_cast<Eigen::Index>(i)];
            }
            return v;
        };
        auto gradient = [power](const Vector& x) {
            Vector g = Vector::Zero(x.size());
            for (std::size_t i = 0; i < power.size(); ++i) {
                if (power[i] == 0) continue;
                double d = power[i] * std::pow(x[static_cast<Eigen::Index>(i)], power[i] - 1);
                for (std::size_t j = 0; j < power.size(); ++j) {
                    if (j != i) d *= std::pow(x[static_cast<Eigen::Index>(j)], power[j]);
                }
                g[static_cast<Eigen::Index>(i)] = d;
            }
            return g;
        };
        std::string desc;
        for (std::size_t i = 0; i < power.size(); ++i) {
            if (power[i] == 0) continue;
            if (!desc.empty()) desc += "*";
            desc += "x" + std::to_string(i + 1);
            if (power[i] > 1) desc += "^" + std::to_string(power[i]);
        }
        basis.add({value, gradient, desc.empty() ? "1" : desc});
    }
    return basis;
}

/// Shifted coordinates phi_i(x) = x[coords[i]] - offset[i].
inline BasisSet make_linear(const std::vector<int>& coords, const Vector& offset) {
    if (coords.empty() || static_cast<Eigen::Index>(coords.size()) != offset.size()) {
        throw std::invalid_argument("make_linear: coordinate/offset mismatch");
    }
    BasisSet basis;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const int c = coords[i];
        const double o = offset[static_cast<Eigen::Index>(i)];
        std::string desc = "linear x" + std::to_string(c + 1);
        if (o != 0.0) {
            std::ostringstream os;
            os << (o > 0 ? "-" : "+") << std::abs(o);
            desc += os.str();
        }
        basis.add({[c, o](const Vector& x) { return x[c] - o; },
                   [c](const Vector& x) {
                       Vector g = Vector::Zero(x.size());
                       g[c] = 1.0;
                       return g;
                   },
                   desc});
    }
    return basis;
}

/// Flat weight vector of length m * N; channel j owns entries [j N, (j + 1) N).
struct WeightVector {
    Vector values;
    Box support;

    bool within_support() const { return support.contains(values); }
};

/// Saturated feedback policy built from a basis and a flat weight vector.
class Policy {
public:
    Policy(const BasisSet& basis, const Vector& flat_weights, Box inputs)
        : basis_(&basis), inputs_(std::move(inputs)) {
        const Eigen::Index n = basis.size();
        const Eigen::Index m = inputs_.dim();
        if (n < 1 || m < 1 || flat_weights.size() != n * m) {
            throw std::invalid_argument("Policy: weight dimension " + std::to_string(flat_weights.size()) +
                                        " does not match " + std::to_string(m) + " x " + std::to_string(n));
        }
        weights_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat_weights.data(), m, n);
    }

    Vector raw(const Vector& x) const { return weights_ * basis_->eval(x); }

    Vector operator()(const Vector& x) const { return inputs_.clamp(raw(x)); }

    /// d u / d x (m x n). Saturated channels have zero rows.
    Matrix gradient(const Vector& x) const {
        const Vector r = raw(x);
        Matrix g = weights_ * basis_->jacobian(x);
        for (Eigen::Index j = 0; j < r.size(); ++j) {
            if (r[j] < inputs_.lower[j] || r[j] > inputs_.upper[j]) g.row(j).setZero();
        }
        return g;
    }

    const Matrix& weights() const { return weights_; }
    const BasisSet& basis() const { return *basis_; }
    const Box& inputs() const { return inputs_; }

private:
    const BasisSet* basis_;
    Matrix weights_;  // m x N
    Box inputs_;
};

inline Vector policy_eval(const Vector& flat_weights, const BasisSet& basis, const Vector& x, const Box& inputs) {
    return Policy(basis, flat_weights, inputs)(x);
}

}  // namespace saop
