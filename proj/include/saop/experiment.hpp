#pragma once

// Batch front end: strict JSON configs, single and repeated runs, tube
// verification of a given weight vector, and the files each command writes.

#include "saop/bench.hpp"
#include "saop/io.hpp"
#include "saop/mras.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace saop::experiment {

using nlohmann::json;

/// Invalid configuration; `key` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message)
        : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

enum ExitCode : int { kOk = 0, kFailed = 1, kInvalidConfig = 2, kNotConverged = 3 };

struct VerifySettings {
    int disturbance_runs = 20;
    double hold = 0.1;  // seconds each disturbance value is held
};

struct ExperimentConfig {
    std::string problem = "lti_nonquadratic";
    json overrides = json::object();
    SaopConfig saop;
    std::optional<ContractionSpec> robust;
    int runs = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "saop_out";
    VerifySettings verify;
    json echo;  // fully resolved config, defaults applied
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
    }
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + key, std::string("wrong type (") + e.what() + ")");
    }
}

inline Vector get_vector(const json& obj, const std::string& key, const std::string& path, const Vector& fallback,
                         std::optional<Eigen::Index> expected = std::nullopt) {
    if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
    std::vector<double> v;
    try {
        v = obj.at(key).get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ConfigError(path + key, "expected an array of numbers");
    }
    if (expected && static_cast<Eigen::Index>(v.size()) != *expected) {
        throw ConfigError(path + key, "expected " + std::to_string(*expected) + " entries");
    }
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
    return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& path) {
    try {
        const auto rows = j.get<std::vector<std::vector<double>>>();
        if (rows.empty()) throw ConfigError(path, "empty matrix");
        Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows[0].size()) throw ConfigError(path, "ragged matrix");
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
        }
        return m;
    } catch (const json::exception&) {
        throw ConfigError(path, "expected an array of rows");
    }
}

}  // namespace detail

/// Builds the named benchmark with its override block applied. Returns the
/// problem and writes the resolved overrides into `resolved`.
inline PlanningProblem build_problem(const std::string& name, const json& overrides, json& resolved) {
    using detail::get;
    using detail::get_vector;
    const std::string path = "problem.overrides.";
    if (name == "lti_nonquadratic") {
        detail::reject_unknown(overrides, {"horizon", "dt", "x0", "weight_bound", "basis"}, "problem.overrides");
        bench::LtiOptions o;
        o.horizon = get(overrides, "horizon", path, o.horizon);
        o.dt = get(overrides, "dt", path, o.dt);
        o.x0 = get_vector(overrides, "x0", path, o.x0, 2);
        o.weight_bound = get(overrides, "weight_bound", path, o.weight_bound);
        const auto basis = get<std::string>(overrides, "basis", path, "cubic");
        if (basis != "cubic" && basis != "linear") throw ConfigError(path + "basis", "expected \"cubic\" or \"linear\"");
        o.linear_only = basis == "linear";
        resolved = {{"horizon", o.horizon}, {"dt", o.dt}, {"x0", detail::to_json(o.x0)},
                    {"weight_bound", o.weight_bound}, {"basis", basis}};
        return bench::lti_nonquadratic(o);
    }
    if (name == "dubins_car") {
        detail::reject_unknown(overrides,
                               {"horizon", "dt", "goal", "goal_tolerance", "early_stop", "speed_bound", "turn_bound",
                                "sigma", "grid_min", "grid_max", "grid_step", "obstacle", "obstacle_centers",
                                "collision_penalty", "weight_bound"},
                               "problem.overrides");
        bench::DubinsOptions o;
        o.horizon = get(overrides, "horizon", path, o.horizon);
        o.dt = get(overrides, "dt", path, o.dt);
        const Vector goal = get_vector(overrides, "goal", path, (Vector(2) << o.goal_x, o.goal_y).finished(), 2);
        o.goal_x = goal[0];
        o.goal_y = goal[1];
        o.goal_tolerance = get(overrides, "goal_tolerance", path, o.goal_tolerance);
        o.early_stop = get(overrides, "early_stop", path, o.early_stop);
        o.speed_bound = get(overrides, "speed_bound", path, o.speed_bound);
        o.turn_bound = get(overrides, "turn_bound", path, o.turn_bound);
        o.sigma = get(overrides, "sigma", path, o.sigma);
        o.grid_min = get(overrides, "grid_min", path, o.grid_min);
        o.grid_max = get(overrides, "grid_max", path, o.grid_max);
        o.grid_step = get(overrides, "grid_step", path, o.grid_step);
        const Vector obs = get_vector(
            overrides, "obstacle", path,
            (Vector(4) << o.obstacle.x_min, o.obstacle.y_min, o.obstacle.x_max, o.obstacle.y_max).finished(), 4);
        o.obstacle = bench::Rect{obs[0], obs[1], obs[2], obs[3]};
        o.obstacle_centers = get(overrides, "obstacle_centers", path, o.obstacle_centers);
        o.collision_penalty = get(overrides, "collision_penalty", path, o.collision_penalty);
        o.weight_bound = get(overrides, "weight_bound", path, o.weight_bound);
        if (!(o.sigma > 0.0)) throw ConfigError(path + "sigma", "must be positive");
        if (!(o.grid_step > 0.0)) throw ConfigError(path + "grid_step", "must be positive");
        if (o.obstacle_centers < 0) throw ConfigError(path + "obstacle_centers", "must be nonnegative");
        resolved = {{"horizon", o.horizon},
                    {"dt", o.dt},
                    {"goal", {o.goal_x, o.goal_y}},
                    {"goal_tolerance", o.goal_tolerance},
                    {"early_stop", o.early_stop},
                    {"speed_bound", o.speed_bound},
                    {"turn_bound", o.turn_bound},
                    {"sigma", o.sigma},
                    {"grid_min", o.grid_min},
                    {"grid_max", o.grid_max},
                    {"grid_step", o.grid_step},
                    {"obstacle", detail::to_json(obs)},
                    {"obstacle_centers", o.obstacle_centers},
                    {"collision_penalty", o.collision_penalty},
                    {"weight_bound", o.weight_bound}};
        return bench::dubins_car(o);
    }
    if (name == "static_quadratic") {
        detail::reject_unknown(overrides, {"w_star", "weight_bound"}, "problem.overrides");
        const Vector w_star =
            get_vector(overrides, "w_star", path, (Vector(6) << 1.0, -2.0, 0.5, 0.0, -1.0, 1.5).finished());
        if (w_star.size() < 1) throw ConfigError(path + "w_star", "needs at least one entry");
        const double bound = get(overrides, "weight_bound", path, 10.0);
        resolved = {{"w_star", detail::to_json(w_star)}, {"weight_bound", bound}};
        return bench::static_quadratic(w_star, bound);
    }
    throw ConfigError("problem.name", "unknown problem '" + name + "'");
}

inline SaopConfig parse_saop(const json& j, json& resolved) {
    using detail::get;
    detail::reject_unknown(j,
                           {"rho", "epsilon", "alpha", "lambda", "n_initial", "s_shape", "s_scale", "sigma_stop",
                            "max_iterations", "max_samples", "initial_variance", "initial_mean", "threads"},
                           "saop");
    const std::string p = "saop.";
    SaopConfig c;
    c.rho = get(j, "rho", p, c.rho);
    c.epsilon = get(j, "epsilon", p, c.epsilon);
    c.alpha = get(j, "alpha", p, c.alpha);
    c.lambda = get(j, "lambda", p, c.lambda);
    c.n_initial = get(j, "n_initial", p, c.n_initial);
    const auto shape = get<std::string>(j, "s_shape", p, "exp_neg");
    if (shape == "exp_neg") {
        c.s_shape = SShape::ExpNeg;
    } else if (shape == "reciprocal") {
        c.s_shape = SShape::Reciprocal;
    } else {
        throw ConfigError(p + "s_shape", "expected \"exp_neg\" or \"reciprocal\"");
    }
    if (j.contains("s_scale") && !j.at("s_scale").is_null()) c.s_scale = get(j, "s_scale", p, 1.0);
    c.sigma_stop = get(j, "sigma_stop", p, c.sigma_stop);
    c.max_iterations = get(j, "max_iterations", p, c.max_iterations);
    c.max_samples = get(j, "max_samples", p, c.max_samples);
    c.initial_variance = get(j, "initial_variance", p, c.initial_variance);
    if (j.contains("initial_mean") && !j.at("initial_mean").is_null()) {
        c.initial_mean = detail::get_vector(j, "initial_mean", p, Vector());
    }
    c.threads = get(j, "threads", p, c.threads);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("saop", e.what());
    }
    resolved = {{"rho", c.rho},
                {"epsilon", c.epsilon},
                {"alpha", c.alpha},
                {"lambda", c.lambda},
                {"n_initial", c.n_initial},
                {"s_shape", shape},
                {"s_scale", c.s_scale ? json(*c.s_scale) : json(nullptr)},
                {"sigma_stop", c.sigma_stop},
                {"max_iterations", c.max_iterations},
                {"max_samples", c.max_samples},
                {"initial_variance", c.initial_variance},
                {"initial_mean", c.initial_mean ? detail::to_json(*c.initial_mean) : json(nullptr)},
                {"threads", c.threads}};
    return c;
}

inline ContractionSpec parse_robust(const json& j, const PlanningProblem& problem, json& resolved) {
    using detail::get;
    detail::reject_unknown(j,
                           {"metric", "beta", "tube_radius", "rho_max", "ball_samples", "check_stride", "mode",
                            "tolerance"},
                           "robust");
    const std::string p = "robust.";
    ContractionSpec s;
    if (problem.contraction) {
        s = *problem.contraction;
    } else {
        s.metric = Matrix::Identity(problem.model.state_dim, problem.model.state_dim);
        s.disturbance_bound = problem.disturbance_bound.value_or(0.0);
    }
    if (j.contains("metric") && !j.at("metric").is_null()) s.metric = detail::matrix_from_json(j.at("metric"), p + "metric");
    s.beta = get(j, "beta", p, s.beta);
    s.tube_radius = get(j, "tube_radius", p, s.tube_radius);
    s.disturbance_bound = get(j, "rho_max", p, s.disturbance_bound);
    s.ball_samples = get(j, "ball_samples", p, s.ball_samples);
    s.check_stride = get(j, "check_stride", p, s.check_stride);
    s.tolerance = get(j, "tolerance", p, s.tolerance);
    const auto mode = get<std::string>(j, "mode", p, s.mode == ContractionCheck::Entrywise ? "entrywise" : "loewner");
    if (mode == "entrywise") {
        s.mode = ContractionCheck::Entrywise;
    } else if (mode == "loewner") {
        s.mode = ContractionCheck::Loewner;
    } else {
        throw ConfigError(p + "mode", "expected \"entrywise\" or \"loewner\"");
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("robust", e.what());
    }
    if (s.metric.rows() != problem.model.state_dim) throw ConfigError(p + "metric", "dimension mismatch");
    resolved = {{"metric", detail::to_json(s.metric)},
                {"beta", s.beta},
                {"tube_radius", s.tube_radius},
                {"rho_max", s.disturbance_bound},
                {"ball_samples", s.ball_samples},
                {"check_stride", s.check_stride},
                {"mode", mode},
                {"tolerance", s.tolerance}};
    return s;
}

/// Strict parse: unknown keys anywhere are rejected by name.
inline ExperimentConfig parse_config(const json& root) {
    using detail::get;
    detail::reject_unknown(root, {"problem", "saop", "robust", "runs", "seed", "output_dir", "verify"}, "");
    ExperimentConfig cfg;
    json echo;

    const json problem = root.value("problem", json::object());
    detail::reject_unknown(problem, {"name", "overrides"}, "problem");
    cfg.problem = get<std::string>(problem, "name", "problem.", cfg.problem);
    cfg.overrides = problem.value("overrides", json::object());
    if (cfg.overrides.is_null()) cfg.overrides = json::object();
    json resolved_overrides;
    const PlanningProblem built = build_problem(cfg.problem, cfg.overrides, resolved_overrides);
    echo["problem"] = {{"name", cfg.problem}, {"overrides", resolved_overrides}};

    json resolved_saop;
    cfg.seed = get<std::uint64_t>(root, "seed", "", cfg.seed);
    cfg.saop = parse_saop(root.contains("saop") && !root.at("saop").is_null() ? root.at("saop") : json::object(),
                          resolved_saop);
    cfg.saop.seed = cfg.seed;
    if (cfg.saop.initial_mean && cfg.saop.initial_mean->size() != built.weight_dim()) {
        throw ConfigError("saop.initial_mean", "expected " + std::to_string(built.weight_dim()) + " entries");
    }
    echo["saop"] = resolved_saop;

    if (root.contains("robust") && !root.at("robust").is_null()) {
        if (built.is_static()) throw ConfigError("robust", "not available for a static problem");
        json resolved_robust;
        cfg.robust = parse_robust(root.at("robust"), built, resolved_robust);
        echo["robust"] = resolved_robust;
    } else {
        echo["robust"] = nullptr;
    }

    cfg.runs = get(root, "runs", "", cfg.runs);
    if (cfg.runs < 1) throw ConfigError("runs", "must be >= 1");
    cfg.output_dir = get<std::string>(root, "output_dir", "", cfg.output_dir);

    const json verify = root.value("verify", json::object());
    detail::reject_unknown(verify, {"disturbance_runs", "hold"}, "verify");
    cfg.verify.disturbance_runs = get(verify, "disturbance_runs", "verify.", cfg.verify.disturbance_runs);
    cfg.verify.hold = get(verify, "hold", "verify.", cfg.verify.hold);
    if (cfg.verify.disturbance_runs < 0) throw ConfigError("verify.disturbance_runs", "must be nonnegative");
    if (!(cfg.verify.hold > 0.0)) throw ConfigError("verify.hold", "must be positive");

    echo["runs"] = cfg.runs;
    echo["seed"] = cfg.seed;
    echo["output_dir"] = cfg.output_dir;
    echo["verify"] = {{"disturbance_runs", cfg.verify.disturbance_runs}, {"hold", cfg.verify.hold}};
    cfg.echo = std::move(echo);
    return cfg;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", "malformed JSON in " + path + ": " + e.what());
    }
}

/// SAOP_SEED, when set, replaces the configured seed.
inline void apply_env_overrides(json& root) {
    if (const char* env = std::getenv("SAOP_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
            root["seed"] = v;
        } catch (const std::exception&) {
            throw ConfigError("SAOP_SEED", "not an unsigned integer");
        }
    }
}

inline ExperimentConfig load_config(const std::string& path, std::optional<int> runs_override = std::nullopt) {
    json root = read_json_file(path);
    apply_env_overrides(root);
    if (runs_override) root["runs"] = *runs_override;
    return parse_config(root);
}

inline PlanningProblem make_problem(const ExperimentConfig& cfg) {
    json ignored;
    return build_problem(cfg.problem, cfg.overrides, ignored);
}

inline json error_json(const std::string& kind, const std::string& message, const std::string& key = {}) {
    json j{{"error", kind}, {"message", message}};
    if (!key.empty()) j["key"] = key;
    return j;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    auto out = io::open_for_write(path.string());
    out << j.dump(2) << '\n';
}

inline void write_convergence_csv(std::ostream& out, const SaopResult& r) {
    io::write_row(out, {"k", "N_k", "kappa", "gamma", "best_J", "mean_J", "sigma_norm", "elites", "rejected_robust"});
    for (const auto& h : r.history) {
        io::write_row(out, {std::to_string(h.k), std::to_string(h.n_k), io::format_double(h.kappa),
                            io::format_double(h.gamma), io::format_double(h.best_j), io::format_double(h.mean_j),
                            io::format_double(h.sigma_norm), std::to_string(h.elites),
                            std::to_string(h.rejected_robust)});
    }
}

inline void write_mu_trace_csv(std::ostream& out, const SaopResult& r) {
    std::vector<std::string> header{"k"};
    for (Eigen::Index i = 0; i < r.w_star.size(); ++i) header.push_back("mu" + std::to_string(i + 1));
    io::write_row(out, header);
    for (const auto& h : r.history) {
        std::vector<std::string> row{std::to_string(h.k)};
        for (Eigen::Index i = 0; i < h.mu.size(); ++i) row.push_back(io::format_double(h.mu[i]));
        io::write_row(out, row);
    }
}

inline json result_json(const SaopResult& r, const ExperimentConfig& cfg, double wall_time) {
    json rejected = json::array();
    json branches = json::array();
    for (const auto& h : r.history) {
        rejected.push_back(h.rejected_robust);
        branches.push_back(to_string(h.branch));
    }
    return {{"w_star", detail::to_json(r.w_star)},
            {"J_star", r.j_star},
            {"best_w", detail::to_json(r.best_w)},
            {"best_J", r.best_j},
            {"iterations", r.iterations},
            {"total_samples", r.total_samples},
            {"seed", r.seed},
            {"status", to_string(r.status)},
            {"converged", r.converged()},
            {"final_sigma_norm", r.history.empty() ? 0.0 : r.history.back().sigma_norm},
            {"s_scale", r.s_scale},
            {"rejected_robust", rejected},
            {"threshold_branches", branches},
            {"wall_time_s", wall_time},
            {"version", kVersion},
            {"config", cfg.echo}};
}

struct RunOutcome {
    SaopResult result;
    double wall_time = 0.0;
};

/// Executes one search and writes its artifacts into `dir`.
inline RunOutcome execute_run(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const PlanningProblem problem = make_problem(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome out{run(problem, cfg.saop, cfg.robust), 0.0};
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::filesystem::create_directories(dir);
    {
        auto f = io::open_for_write((dir / "convergence.csv").string());
        write_convergence_csv(f, out.result);
    }
    {
        auto f = io::open_for_write((dir / "mu_trace.csv").string());
        write_mu_trace_csv(f, out.result);
    }
    if (!problem.is_static()) {
        auto f = io::open_for_write((dir / "trajectory.csv").string());
        write_trajectory_csv(f, problem.rollout(out.result.w_star).trajectory);
    }
    write_json(dir / "result.json", result_json(out.result, cfg, out.wall_time));
    write_json(dir / "manifest.json", {{"version", kVersion}, {"seed", cfg.seed}, {"config", cfg.echo}});
    return out;
}

inline int fail(const std::filesystem::path& dir, const json& err, std::ostream& errs) {
    errs << err.dump() << '\n';
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (!ec) {
        try {
            write_json(dir / "error.json", err);
        } catch (const std::exception&) {
        }
    }
    return err.value("error", "") == "invalid_config" ? kInvalidConfig : kNotConverged;
}

inline int cmd_run(const ExperimentConfig& cfg, std::ostream& out = std::cout, std::ostream& errs = std::cerr) {
    const std::filesystem::path dir(cfg.output_dir);
    const RunOutcome r = execute_run(cfg, dir);
    out << "status=" << to_string(r.result.status) << " iterations=" << r.result.iterations
        << " samples=" << r.result.total_samples << " J*=" << io::format_double(r.result.j_star) << '\n';
    if (!r.result.converged()) {
        return fail(dir,
                    error_json("not_converged", std::string("search stopped on ") + to_string(r.result.status) +
                                                    " before the covariance collapsed"),
                    errs);
    }
    return kOk;
}

struct Summary {
    std::vector<double> final_costs;
    int failures = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Mean, sample standard deviation, min and max of the successful runs.
inline Summary summarize(const std::vector<double>& costs, int failures) {
    Summary s{costs, failures};
    if (costs.empty()) return s;
    double sum = 0.0;
    for (double c : costs) sum += c;
    s.mean = sum / static_cast<double>(costs.size());
    double ss = 0.0;
    for (double c : costs) ss += (c - s.mean) * (c - s.mean);
    s.stddev = costs.size() > 1 ? std::sqrt(ss / static_cast<double>(costs.size() - 1)) : 0.0;
    s.min = *std::min_element(costs.begin(), costs.end());
    s.max = *std::max_element(costs.begin(), costs.end());
    return s;
}

/// Equal-width histogram with ceil(log2 n) + 1 bins (Sturges).
inline void write_histogram_csv(std::ostream& out, const std::vector<double>& costs) {
    io::write_row(out, {"bin_lower", "bin_upper", "count"});
    if (costs.empty()) return;
    const double lo = *std::min_element(costs.begin(), costs.end());
    const double hi = *std::max_element(costs.begin(), costs.end());
    const auto bins = static_cast<int>(std::ceil(std::log2(static_cast<double>(costs.size())))) + 1;
    const double width = hi > lo ? (hi - lo) / bins : 1.0;
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double c : costs) {
        auto b = static_cast<int>((c - lo) / width);
        ++counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
    }
    for (int b = 0; b < bins; ++b) {
        io::write_row(out, {io::format_double(lo + b * width), io::format_double(lo + (b + 1) * width),
                            std::to_string(counts[static_cast<std::size_t>(b)])});
    }
}

/// Runs use seeds seed + i, or the configured seed for every run when
/// `same_seed` is set (determinism audit).
inline int cmd_multirun(const ExperimentConfig& cfg, int jobs = 1, bool same_seed = false,
                        std::ostream& out = std::cout, std::ostream& errs = std::cerr) {
    const std::filesystem::path dir(cfg.output_dir);
    if (cfg.runs < 2) {
        return fail(dir, error_json("invalid_config", "multirun needs runs >= 2", "runs"), errs);
    }
    std::vector<std::optional<RunOutcome>> outcomes(static_cast<std::size_t>(cfg.runs));
    std::vector<std::string> errors(static_cast<std::size_t>(cfg.runs));
    parallel_for(outcomes.size(), std::max(1, jobs), [&](std::size_t i) {
        ExperimentConfig c = cfg;
        c.seed = same_seed ? cfg.seed : cfg.seed + i;
        c.saop.seed = c.seed;
        c.echo["seed"] = c.seed;
        char name[32];
        std::snprintf(name, sizeof(name), "run_%03zu", i);
        try {
            outcomes[i] = execute_run(c, dir / name);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    std::vector<double> costs;
    json runs = json::array();
    int failures = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        json entry{{"run", i}, {"seed", same_seed ? cfg.seed : cfg.seed + i}};
        if (outcomes[i] && outcomes[i]->result.converged()) {
            costs.push_back(outcomes[i]->result.j_star);
            entry["J_star"] = outcomes[i]->result.j_star;
            entry["status"] = to_string(outcomes[i]->result.status);
        } else {
            ++failures;
            entry["status"] = outcomes[i] ? to_string(outcomes[i]->result.status) : "error";
            if (outcomes[i]) entry["J_star"] = outcomes[i]->result.j_star;
            if (!errors[i].empty()) entry["error"] = errors[i];
        }
        runs.push_back(entry);
    }
    const Summary s = summarize(costs, failures);
    std::filesystem::create_directories(dir);
    write_json(dir / "summary.json", {{"runs", cfg.runs},
                                      {"successes", costs.size()},
                                      {"failures", failures},
                                      {"final_costs", costs},
                                      {"mean", s.mean},
                                      {"std", s.stddev},
                                      {"min", s.min},
                                      {"max", s.max},
                                      {"same_seed", same_seed},
                                      {"per_run", runs},
                                      {"version", kVersion},
                                      {"config", cfg.echo}});
    {
        auto f = io::open_for_write((dir / "histogram.csv").string());
        write_histogram_csv(f, costs);
    }
    out << "successes=" << costs.size() << "/" << cfg.runs << " mean=" << io::format_double(s.mean)
        << " std=" << io::format_double(s.stddev) << '\n';
    if (failures > 0) {
        return fail(dir, error_json("runs_failed", std::to_string(failures) + " run(s) did not converge"), errs);
    }
    return kOk;
}

inline Vector read_weights(const std::string& path) {
    const json j = read_json_file(path);
    const json& arr = j.is_object() ? j.at("weights") : j;
    try {
        const auto v = arr.get<std::vector<double>>();
        return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    } catch (const json::exception&) {
        throw ConfigError("weights", "expected an array of numbers");
    }
}

struct DisturbanceCheck {
    double max_deviation = 0.0;  // max over runs and grid of |x - xbar|_M^2
    double max_ratio = 0.0;      // max of deviation / envelope where envelope > 0
    bool within_envelope = true;
};

/// Disturbed rollouts from the nominal initial state compared against the
/// transient envelope, with `slack` relative tolerance.
inline DisturbanceCheck check_disturbed(const PlanningProblem& problem, const Vector& w, const ContractionSpec& spec,
                                        const Trajectory& nominal, int runs, double hold, std::uint64_t seed,
                                        double slack = 0.05) {
    DisturbanceCheck out;
    for (int r = 0; r < runs; ++r) {
        const Disturbance d = random_disturbance(problem.model.state_dim, spec.disturbance_bound, hold,
                                                 problem.cost.horizon, seed + static_cast<std::uint64_t>(r));
        const Rollout disturbed = problem.rollout(w, &d);
        const std::size_t n = std::min(nominal.size(), disturbed.trajectory.size());
        for (std::size_t k = 0; k < n; ++k) {
            const Vector e = disturbed.trajectory.state(k) - nominal.state(k);
            const double dev = e.dot(spec.metric * e);
            const double env = bound_envelope(spec, nominal.times[k]);
            out.max_deviation = std::max(out.max_deviation, dev);
            if (env > 0.0) out.max_ratio = std::max(out.max_ratio, dev / env);
            if (dev > env * (1.0 + slack) + 1e-15) out.within_envelope = false;
        }
    }
    return out;
}

inline int cmd_verify(const ExperimentConfig& cfg, const std::string& weights_path, std::ostream& out = std::cout,
                      std::ostream& errs = std::cerr) {
    const std::filesystem::path dir(cfg.output_dir);
    const PlanningProblem problem = make_problem(cfg);
    if (problem.is_static()) {
        return fail(dir, error_json("invalid_config", "verify needs a dynamic problem", "problem.name"), errs);
    }
    const Vector w = read_weights(weights_path);
    if (w.size() != problem.weight_dim()) {
        return fail(dir,
                    error_json("invalid_config",
                               "weights have " + std::to_string(w.size()) + " entries, problem needs " +
                                   std::to_string(problem.weight_dim()),
                               "weights"),
                    errs);
    }
    ContractionSpec spec;
    if (cfg.robust) {
        spec = *cfg.robust;
    } else if (problem.contraction) {
        spec = *problem.contraction;
    } else {
        return fail(dir, error_json("invalid_config", "no contraction settings for this problem", "robust"), errs);
    }

    const Rollout nominal = problem.rollout(w);
    const TubeReport report = verify_tube(problem.model, problem.basis, w, nominal.trajectory, spec);
    const DisturbanceCheck dist =
        check_disturbed(problem, w, spec, nominal.trajectory, cfg.verify.disturbance_runs, cfg.verify.hold, cfg.seed);

    out << "tube: " << (report.pass ? "PASS" : "FAIL") << '\n';
    for (const auto& c : report.checkpoints) {
        out << "  t=" << io::format_double(c.time) << " worst_margin=" << io::format_double(c.worst_margin) << '\n';
    }
    out << "disturbed rollouts: " << cfg.verify.disturbance_runs
        << " max_deviation=" << io::format_double(dist.max_deviation)
        << " ultimate_bound=" << io::format_double(ultimate_bound(spec))
        << " max_ratio_to_envelope=" << io::format_double(dist.max_ratio) << " "
        << (dist.within_envelope ? "WITHIN" : "EXCEEDS") << '\n';

    std::filesystem::create_directories(dir);
    json j = report.to_json();
    j["nominal_cost"] = nominal.cost;
    j["disturbance"] = {{"runs", cfg.verify.disturbance_runs},
                        {"max_deviation", dist.max_deviation},
                        {"max_ratio_to_envelope", dist.max_ratio},
                        {"ultimate_bound", ultimate_bound(spec)},
                        {"within_envelope", dist.within_envelope}};
    j["weights"] = detail::to_json(w);
    j["config"] = cfg.echo;
    write_json(dir / "verify.json", j);
    return report.pass && dist.within_envelope ? kOk : kFailed;
}

}  // namespace saop::experiment
