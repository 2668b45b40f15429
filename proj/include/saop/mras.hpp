#pragma once

// Model-reference adaptive search over policy weight vectors.
//
// Each iteration draws N_k weight vectors from N(mu_k, Sigma_k), scores them
// by closed-loop simulation, moves the threshold gamma using the
// (1 - rho)-quantile of the scores, and refits (mu, Sigma) to the elite
// samples (J <= gamma) with importance weights S(J)^k / p(w; theta_k). The
// refit is blended with the previous parameters and the loop stops once the
// covariance has (nearly) collapsed.

#include "saop/gaussian.hpp"
#include "saop/problem.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace saop {

enum class SShape { ExpNeg, Reciprocal };

/// Strictly decreasing positive S; only log S is ever needed.
struct ScoreFunction {
    SShape shape = SShape::ExpNeg;
    double scale = 1.0;  // c in S(J) = exp(-J / c)

    double log_value(double cost) const {
        if (shape == SShape::ExpNeg) return -cost / scale;
        return -std::log(std::max(cost, std::numeric_limits<double>::min()));
    }
};

struct SaopConfig {
    double rho = 0.1;
    double epsilon = 0.1;
    double alpha = 0.1;
    double lambda = 0.5;
    int n_initial = 50;
    SShape s_shape = SShape::ExpNeg;
    std::optional<double> s_scale;  // median of the first scored batch when unset
    double sigma_stop = 1e-3;
    int max_iterations = 100;
    long max_samples = 1'000'000;
    std::uint64_t seed = 0;
    double initial_variance = 1.0;  // Sigma_0 = c0 I
    std::optional<Vector> initial_mean;
    int threads = 1;

    void validate() const {
        if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("SaopConfig: rho must lie in (0, 1]");
        if (!(epsilon > 0.0)) throw std::invalid_argument("SaopConfig: epsilon must be positive");
        if (!(alpha > 0.0)) throw std::invalid_argument("SaopConfig: alpha must be positive");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("SaopConfig: lambda must lie in [0, 1]");
        if (n_initial < 1) throw std::invalid_argument("SaopConfig: n_initial must be positive");
        if (!(sigma_stop > 0.0)) throw std::invalid_argument("SaopConfig: sigma_stop must be positive");
        if (max_iterations < 1) throw std::invalid_argument("SaopConfig: max_iterations must be >= 1");
        if (max_samples < 1) throw std::invalid_argument("SaopConfig: max_samples must be positive");
        if (!(initial_variance > 0.0)) throw std::invalid_argument("SaopConfig: initial_variance must be positive");
        if (s_scale && !(*s_scale > 0.0)) throw std::invalid_argument("SaopConfig: s_scale must be positive");
        if (threads < 1) throw std::invalid_argument("SaopConfig: threads must be >= 1");
    }
};

enum class ThresholdBranch { Initialize, Improved, Relaxed, Skip };

inline const char* to_string(ThresholdBranch b) {
    switch (b) {
        case ThresholdBranch::Initialize: return "initialize";
        case ThresholdBranch::Improved: return "improved";
        case ThresholdBranch::Relaxed: return "relaxed";
        case ThresholdBranch::Skip: return "skip";
    }
    return "unknown";
}

struct IterationRecord {
    int k = 0;
    int n_k = 0;
    double kappa = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double rho = 0.0;
    double best_j = std::numeric_limits<double>::quiet_NaN();
    double mean_j = std::numeric_limits<double>::quiet_NaN();  // J at the updated mean
    double sigma_norm = 0.0;
    int elites = 0;
    int rejected_robust = 0;
    int verified = 0;
    ThresholdBranch branch = ThresholdBranch::Skip;
    bool sigma_psd = true;
    bool weight_fallback = false;
    StopReason mean_stop = StopReason::Horizon;
    StopReason best_stop = StopReason::Horizon;  // rollout of the best sample this iteration
    Vector mu;
};

struct SaopState {
    int k = 1;
    GaussianParams theta;
    std::optional<double> gamma;  // unset until the first scored batch
    double rho = 0.1;
    int n_k = 0;
    std::vector<IterationRecord> history;
};

struct EliteSet {
    Matrix members;  // one weight vector per row
    Vector costs;
    int rejected_robust = 0;

    Eigen::Index size() const { return members.rows(); }
};

/// Entry ceil((1 - rho) N) (1-based, clamped to >= 1) of the costs sorted
/// worst first; ties keep sample order.
inline double quantile_cost(std::span<const double> costs, double rho) {
    if (costs.empty()) throw std::invalid_argument("quantile_cost: empty cost list");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("quantile_cost: rho must lie in (0, 1]");
    std::vector<double> sorted(costs.begin(), costs.end());
    std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto n = static_cast<double>(sorted.size());
    auto index = static_cast<long>(std::ceil((1.0 - rho) * n - 1e-9));
    index = std::clamp(index, 1L, static_cast<long>(sorted.size()));
    return sorted[static_cast<std::size_t>(index - 1)];
}

struct ThresholdDecision {
    ThresholdBranch branch = ThresholdBranch::Skip;
    double gamma = 0.0;
    double rho = 0.0;
    int next_sample_size = 0;

    bool update() const { return branch != ThresholdBranch::Skip; }
};

/// Threshold logic. The first scored batch sets gamma = kappa. Later a
/// quantile that improves on gamma by epsilon is accepted directly. Otherwise
/// the threshold falls back to the h best samples that do improve by
/// epsilon, gamma = worst of them and rho = h / N. With no such sample the
/// parameters are kept and the next batch grows to ceil((1 + alpha) N_k).
inline ThresholdDecision threshold_update(double kappa, const SaopState& state, std::span<const double> costs,
                                          double epsilon, double alpha) {
    if (costs.empty()) throw std::invalid_argument("threshold_update: empty cost list");
    ThresholdDecision d{ThresholdBranch::Skip, state.gamma.value_or(kappa), state.rho, state.n_k};
    if (!state.gamma) {
        d.branch = ThresholdBranch::Initialize;
        d.gamma = kappa;
        return d;
    }
    const double target = *state.gamma - epsilon;
    if (kappa <= target) {
        d.branch = ThresholdBranch::Improved;
        d.gamma = kappa;
        return d;
    }
    long h = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (double c : costs) {
        if (c <= target) {
            ++h;
            worst = std::max(worst, c);
        }
    }
    if (h > 0) {
        d.branch = ThresholdBranch::Relaxed;
        d.gamma = worst;
        d.rho = std::min(state.rho, static_cast<double>(h) / static_cast<double>(costs.size()));
        return d;
    }
    d.next_sample_size = static_cast<int>(std::ceil((1.0 + alpha) * static_cast<double>(state.n_k) - 1e-9));
    return d;
}

/// Log importance weights k log S(J_i) - log p(w_i; theta_k), shifted so the
/// largest is zero. Non-finite entries become -inf.
inline Vector elite_log_weights(const EliteSet& elites, const GaussianParams& theta_k, const GaussianFactor& factor,
                                int k, const ScoreFunction& s) {
    Vector lw(elites.size());
    for (Eigen::Index i = 0; i < elites.size(); ++i) {
        const double v = static_cast<double>(k) * s.log_value(elites.costs[i]) -
                         log_density(theta_k, factor, elites.members.row(i).transpose());
        lw[i] = std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    }
    const double top = lw.maxCoeff();
    if (std::isfinite(top)) lw.array() -= top;
    return lw;
}

/// Weighted mean and covariance of the elites with weights S(J)^k / p(w).
/// Falls back to uniform weights when no weight survives.
inline GaussianParams em_update(const EliteSet& elites, const GaussianParams& theta_k, const GaussianFactor& factor,
                                int k, const ScoreFunction& s, bool* used_fallback = nullptr) {
    if (elites.size() < 1) throw std::invalid_argument("em_update: empty elite set");
    if (elites.members.cols() != theta_k.dim()) throw std::invalid_argument("em_update: dimension mismatch");
    const Vector log_weights = elite_log_weights(elites, theta_k, factor, k, s);
    const bool fallback = !std::isfinite(log_weights.maxCoeff());
    Vector weights = Vector::Ones(elites.size());
    if (!fallback) {
        for (Eigen::Index i = 0; i < weights.size(); ++i) weights[i] = std::exp(log_weights[i]);
    }
    const double total = weights.sum();
    if (used_fallback != nullptr) *used_fallback = fallback;
    weights /= total;

    GaussianParams out;
    out.mean = elites.members.transpose() * weights;
    const Matrix centered = elites.members.rowwise() - out.mean.transpose();
    out.covariance = centered.transpose() * weights.asDiagonal() * centered;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    return out;
}

inline GaussianParams em_update(const EliteSet& elites, const GaussianParams& theta_k, int k, const ScoreFunction& s,
                                bool* used_fallback = nullptr) {
    return em_update(elites, theta_k, factorize(theta_k), k, s, used_fallback);
}

/// theta_{k+1} = lambda theta_k + (1 - lambda) theta*.
inline GaussianParams smooth(const GaussianParams& theta_k, const GaussianParams& theta_star, double lambda) {
    if (theta_k.dim() != theta_star.dim()) throw std::invalid_argument("smooth: dimension mismatch");
    GaussianParams out{lambda * theta_k.mean + (1.0 - lambda) * theta_star.mean,
                       lambda * theta_k.covariance + (1.0 - lambda) * theta_star.covariance};
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    return out;
}

enum class SaopStatus { Converged, Degenerate, IterationBudget, SampleBudget };

inline const char* to_string(SaopStatus s) {
    switch (s) {
        case SaopStatus::Converged: return "converged";
        case SaopStatus::Degenerate: return "degenerate";
        case SaopStatus::IterationBudget: return "iteration_budget";
        case SaopStatus::SampleBudget: return "sample_budget";
    }
    return "unknown";
}

struct SaopResult {
    SaopStatus status = SaopStatus::IterationBudget;
    Vector w_star;  // final mean
    double j_star = std::numeric_limits<double>::quiet_NaN();
    Vector best_w;  // best scored sample
    double best_j = std::numeric_limits<double>::infinity();
    int iterations = 0;
    long total_samples = 0;
    std::uint64_t seed = 0;
    double s_scale = 1.0;
    GaussianParams theta;
    std::vector<IterationRecord> history;

    bool converged() const { return status == SaopStatus::Converged || status == SaopStatus::Degenerate; }
};

/// Runs fn(i) for i in [0, count) on up to `threads` threads.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(threads, static_cast<int>(count))));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count && !failed; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty list");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

/// Scale for S(J) = exp(-J / c): median of the finite, non-penalized costs
/// of the first scored batch.
inline double default_score_scale(std::span<const double> costs) {
    std::vector<double> usable;
    for (double c : costs) {
        if (std::isfinite(c) && c < kPenaltyDiverged) usable.push_back(c);
    }
    if (usable.empty()) usable.assign(costs.begin(), costs.end());
    const double m = median(std::move(usable));
    return (std::isfinite(m) && m > 0.0) ? m : 1.0;
}

/// Called once per iteration with the finished record and, when the
/// parameters were updated, the elite set that drove the update.
using IterationObserver = std::function<void(const IterationRecord&, const EliteSet*)>;

/// Full search. With `robust` set, samples whose nominal trajectory fails
/// the tube check are dropped before the quantile and elite steps.
inline SaopResult run(const PlanningProblem& problem, const SaopConfig& config,
                      const std::optional<ContractionSpec>& robust = std::nullopt,
                      const IterationObserver& observer = {}) {
    problem.validate();
    config.validate();
    if (robust) {
        robust->validate();
        if (problem.is_static()) throw std::invalid_argument("run: contraction filter needs a dynamic problem");
    }
    const Eigen::Index dim = problem.weight_dim();

    SaopState state;
    state.rho = config.rho;
    state.n_k = config.n_initial;
    state.theta.mean = config.initial_mean.value_or(Vector::Zero(dim));
    if (state.theta.mean.size() != dim) throw std::invalid_argument("run: initial mean dimension mismatch");
    state.theta.covariance = config.initial_variance * Matrix::Identity(dim, dim);

    SaopResult result;
    result.seed = config.seed;
    Rng rng(config.seed);
    std::optional<ScoreFunction> score;
    if (config.s_scale) score = ScoreFunction{config.s_shape, *config.s_scale};

    const ContractionSpec* filter = robust ? &*robust : nullptr;
    result.status = SaopStatus::IterationBudget;

    if (spectral_norm(state.theta.covariance) < config.sigma_stop) result.status = SaopStatus::Converged;

    while (result.status == SaopStatus::IterationBudget && state.k <= config.max_iterations) {
        if (result.total_samples + state.n_k > config.max_samples) {
            result.status = SaopStatus::SampleBudget;
            break;
        }
        GaussianFactor factor;
        try {
            factor = factorize(state.theta);
        } catch (const DegenerateDistribution&) {
            result.status = SaopStatus::Degenerate;
            break;
        }

        const Matrix samples = sample(state.theta, factor, state.n_k, problem.weight_support, rng);
        std::vector<Evaluation> evals(static_cast<std::size_t>(state.n_k));
        parallel_for(evals.size(), config.threads, [&](std::size_t i) {
            evals[i] = evaluate(problem, samples.row(static_cast<Eigen::Index>(i)).transpose(), filter);
        });
        result.total_samples += state.n_k;

        IterationRecord rec;
        rec.k = state.k;
        rec.n_k = state.n_k;

        std::vector<Eigen::Index> candidates;
        std::vector<double> candidate_costs;
        for (std::size_t i = 0; i < evals.size(); ++i) {
            if (evals[i].verified) {
                candidates.push_back(static_cast<Eigen::Index>(i));
                candidate_costs.push_back(evals[i].cost);
            }
        }
        rec.verified = static_cast<int>(candidates.size());

        ThresholdDecision decision{ThresholdBranch::Skip, state.gamma.value_or(std::numeric_limits<double>::quiet_NaN()),
                                   state.rho,
                                   static_cast<int>(std::ceil((1.0 + config.alpha) * state.n_k - 1e-9))};
        if (!candidates.empty()) {
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                if (candidate_costs[c] < result.best_j) {
                    result.best_j = candidate_costs[c];
                    result.best_w = samples.row(candidates[c]).transpose();
                }
            }
            const auto best = std::min_element(candidate_costs.begin(), candidate_costs.end());
            rec.best_j = *best;
            const auto best_index = candidates[static_cast<std::size_t>(best - candidate_costs.begin())];
            rec.best_stop = evals[static_cast<std::size_t>(best_index)].stop;
            if (!score) score = ScoreFunction{config.s_shape, default_score_scale(candidate_costs)};
            rec.kappa = quantile_cost(candidate_costs, state.rho);
            decision = threshold_update(rec.kappa, state, candidate_costs, config.epsilon, config.alpha);
        }
        rec.branch = decision.branch;

        EliteSet elites;
        if (decision.update()) {
            state.gamma = decision.gamma;
            state.rho = decision.rho;
            std::vector<Eigen::Index> members;
            for (std::size_t i = 0; i < evals.size(); ++i) {
                if (evals[i].cost > *state.gamma) continue;
                if (evals[i].verified) {
                    members.push_back(static_cast<Eigen::Index>(i));
                } else {
                    ++elites.rejected_robust;
                }
            }
            elites.members.resize(static_cast<Eigen::Index>(members.size()), dim);
            elites.costs.resize(static_cast<Eigen::Index>(members.size()));
            for (std::size_t e = 0; e < members.size(); ++e) {
                elites.members.row(static_cast<Eigen::Index>(e)) = samples.row(members[e]);
                elites.costs[static_cast<Eigen::Index>(e)] = evals[static_cast<std::size_t>(members[e])].cost;
            }
            rec.elites = static_cast<int>(elites.size());
            rec.rejected_robust = elites.rejected_robust;
            bool fallback = false;
            const GaussianParams refit = em_update(elites, state.theta, factor, state.k, *score, &fallback);
            rec.weight_fallback = fallback;
            state.theta = smooth(state.theta, refit, config.lambda);
        } else {
            state.n_k = decision.next_sample_size;
        }
        rec.gamma = state.gamma.value_or(std::numeric_limits<double>::quiet_NaN());
        rec.rho = state.rho;
        rec.sigma_norm = spectral_norm(state.theta.covariance);
        rec.sigma_psd = is_symmetric_psd(state.theta.covariance);
        rec.mu = state.theta.mean;
        const Evaluation at_mean = evaluate(problem, state.theta.mean);
        rec.mean_j = at_mean.cost;
        rec.mean_stop = at_mean.stop;
        if (observer) observer(rec, decision.update() ? &elites : nullptr);
        state.history.push_back(std::move(rec));
        ++state.k;

        if (state.history.back().sigma_norm < config.sigma_stop) result.status = SaopStatus::Converged;
    }

    result.iterations = static_cast<int>(state.history.size());
    result.theta = state.theta;
    result.w_star = state.theta.mean;
    result.j_star = state.history.empty() ? evaluate(problem, result.w_star).cost : state.history.back().mean_j;
    result.s_scale = score ? score->scale : 1.0;
    if (result.best_w.size() == 0) {
        result.best_w = result.w_star;
        result.best_j = result.j_star;
    }
    result.history = std::move(state.history);
    return result;
}

}  // namespace saop
