// clevercatch/alignment.hpp
// Entropic optimal transport between sample and rule embeddings, per-sample
// transport cost, and running-statistics calibration into pseudo-labels.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/mlp.hpp"

namespace clevercatch {

// C_ij = |sample_i - rule_j|^2
inline Matrix cost_matrix(const Matrix& samples, const Matrix& rules) {
    if (samples.cols() != rules.cols())
        throw ShapeError("cost_matrix: latent widths differ (" + std::to_string(samples.cols()) + " vs " +
                         std::to_string(rules.cols()) + ")");
    Matrix c(samples.rows(), rules.rows());
    for (std::size_t i = 0; i < samples.rows(); ++i)
        for (std::size_t j = 0; j < rules.rows(); ++j) c(i, j) = squared_distance(samples.row(i), rules.row(j));
    return c;
}

struct TransportPlan {
    Matrix plan;  // B x R
    std::vector<double> row_marginal;
    std::vector<double> col_marginal;
    double epsilon = 0.0;
    std::size_t iterations = 0;
    double max_violation = 0.0;
    bool converged = false;
    bool log_domain = false;
};

struct SinkhornOptions {
    std::size_t max_iters = 500;
    double tol = 1e-9;
};

inline std::vector<double> uniform_marginal(std::size_t n) {
    return std::vector<double>(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
}

namespace detail {

inline void check_marginal(std::span<const double> m, std::size_t n, const char* name) {
    if (m.size() != n) throw ShapeError(std::string("sinkhorn: ") + name + " marginal has wrong length");
    double s = 0.0;
    for (double x : m) {
        if (!(x > 0.0) || !std::isfinite(x))
            throw ContractError(std::string("sinkhorn: ") + name + " marginal must be strictly positive");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ContractError(std::string("sinkhorn: ") + name + " marginal must sum to 1");
}

inline double log_sum_exp(std::span<const double> xs) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : xs) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - hi);
    return hi + std::log(s);
}

}  // namespace detail

// Alternating marginal scaling of K = exp(-C/eps). Switches to log-domain
// potentials when eps < 0.05 * max(C).
inline TransportPlan sinkhorn(const Matrix& cost, double epsilon, std::span<const double> a,
                              std::span<const double> b, const SinkhornOptions& opt = {}) {
    const std::size_t B = cost.rows(), R = cost.cols();
    if (B == 0 || R == 0) throw ShapeError("sinkhorn: empty cost matrix");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ContractError("sinkhorn: epsilon must be > 0");
    if (!cost.all_finite()) throw NumericError("sinkhorn: non-finite cost");
    detail::check_marginal(a, B, "row");
    detail::check_marginal(b, R, "column");

    TransportPlan tp;
    tp.row_marginal.assign(a.begin(), a.end());
    tp.col_marginal.assign(b.begin(), b.end());
    tp.epsilon = epsilon;
    tp.plan = Matrix(B, R);

    double cmax = 0.0;
    for (double x : cost.values()) cmax = std::max(cmax, std::abs(x));
    tp.log_domain = epsilon < 0.05 * cmax;

    auto row_violation = [&](const Matrix& t) {
        double worst = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            double s = 0.0;
            for (double x : t.row(i)) s += x;
            worst = std::max(worst, std::abs(s - a[i]));
        }
        return worst;
    };
    auto col_violation = [&](const Matrix& t) {
        std::vector<double> s(R, 0.0);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < R; ++j) s[j] += t(i, j);
        double worst = 0.0;
        for (std::size_t j = 0; j < R; ++j) worst = std::max(worst, std::abs(s[j] - b[j]));
        return worst;
    };

    if (!tp.log_domain) {
        Matrix K(B, R);
        for (std::size_t k = 0; k < K.size(); ++k) K.values()[k] = std::exp(-cost.values()[k] / epsilon);
        std::vector<double> u(B, 1.0), v(R, 1.0);
        for (std::size_t it = 0; it < opt.max_iters; ++it) {
            for (std::size_t i = 0; i < B; ++i) {
                double kv = 0.0;
                for (std::size_t j = 0; j < R; ++j) kv += K(i, j) * v[j];
                u[i] = a[i] / kv;
            }
            for (std::size_t j = 0; j < R; ++j) {
                double ku = 0.0;
                for (std::size_t i = 0; i < B; ++i) ku += K(i, j) * u[i];
                v[j] = b[j] / ku;
            }
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t j = 0; j < R; ++j) tp.plan(i, j) = u[i] * K(i, j) * v[j];
            tp.iterations = it + 1;
            tp.max_violation = std::max(row_violation(tp.plan), col_violation(tp.plan));
            if (!std::isfinite(tp.max_violation)) throw NumericError("sinkhorn: scaling diverged");
            if (tp.max_violation < opt.tol) {
                tp.converged = true;
                break;
            }
        }
        return tp;
    }

    std::vector<double> f(B, 0.0), g(R, 0.0), scratch_r(R), scratch_b(B);
    std::vector<double> log_a(B), log_b(R);
    for (std::size_t i = 0; i < B; ++i) log_a[i] = std::log(a[i]);
    for (std::size_t j = 0; j < R; ++j) log_b[j] = std::log(b[j]);
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t j = 0; j < R; ++j) scratch_r[j] = (g[j] - cost(i, j)) / epsilon;
            f[i] = epsilon * (log_a[i] - detail::log_sum_exp(scratch_r));
        }
        for (std::size_t j = 0; j < R; ++j) {
            for (std::size_t i = 0; i < B; ++i) scratch_b[i] = (f[i] - cost(i, j)) / epsilon;
            g[j] = epsilon * (log_b[j] - detail::log_sum_exp(scratch_b));
        }
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < R; ++j) tp.plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / epsilon);
        tp.iterations = it + 1;
        tp.max_violation = std::max(row_violation(tp.plan), col_violation(tp.plan));
        if (!std::isfinite(tp.max_violation)) throw NumericError("sinkhorn: log-domain potentials diverged");
        if (tp.max_violation < opt.tol) {
            tp.converged = true;
            break;
        }
    }
    return tp;
}

// c_i = sum_j T_ij C_ij / sum_j T_ij
inline std::vector<double> transport_cost(const Matrix& plan, const Matrix& cost) {
    if (plan.rows() != cost.rows() || plan.cols() != cost.cols())
        throw ShapeError("transport_cost: plan " + shape_str(plan) + " vs cost " + shape_str(cost));
    std::vector<double> c(plan.rows());
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < plan.cols(); ++j) {
            num += plan(i, j) * cost(i, j);
            den += plan(i, j);
        }
        if (!(den > 0.0)) throw NumericError("transport_cost: zero transport mass in row " + std::to_string(i));
        c[i] = num / den;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Calibration and pseudo-labels
// ---------------------------------------------------------------------------

struct CalibrationState {
    double mean = 0.0;
    double stddev = 0.0;
    double momentum = 0.99;
    bool initialized = false;
};

inline CalibrationState update_calibration(CalibrationState state, std::span<const double> costs) {
    if (costs.empty()) throw ContractError("update_calibration: empty batch");
    // Shifted by the first cost so a constant batch has mean equal to that cost.
    const double c0 = costs[0];
    double sum = 0.0;
    for (double c : costs) sum += c - c0;
    const double n = static_cast<double>(costs.size());
    const double mean = c0 + sum / n;
    double ss = 0.0;
    for (double c : costs) ss += (c - mean) * (c - mean);
    const double sd = std::sqrt(ss / n);
    if (!state.initialized) {
        state.mean = mean;
        state.stddev = sd;
        state.initialized = true;
        return state;
    }
    const double rho = state.momentum;
    state.mean = rho * state.mean + (1.0 - rho) * mean;
    state.stddev = rho * state.stddev + (1.0 - rho) * sd;
    return state;
}

// y_i = sigmoid((mu - c_i) / (tau * s + eps))
inline std::vector<double> pseudo_labels(std::span<const double> costs, const CalibrationState& state, double tau,
                                         double epsilon) {
    if (!state.initialized) throw ContractError("pseudo_labels: calibration state is uninitialized");
    if (!(tau > 0.0) || !(epsilon > 0.0)) throw ContractError("pseudo_labels: tau and epsilon must be > 0");
    const double denom = tau * state.stddev + epsilon;
    std::vector<double> y(costs.size());
    for (std::size_t i = 0; i < costs.size(); ++i) y[i] = sigmoid((state.mean - costs[i]) / denom);
    return y;
}

// ---------------------------------------------------------------------------
// Batch pathway: embeddings -> costs -> plan -> per-sample cost
// ---------------------------------------------------------------------------

struct AlignmentSettings {
    double epsilon_scale = 0.05;  // eps_s = scale * median(C) unless epsilon_fixed > 0
    double epsilon_fixed = 0.0;
    SinkhornOptions sinkhorn{};
    double tau = 1.0;
    double epsilon = 1e-6;
    double momentum = 0.99;
    bool weighted_columns = false;  // b_j proportional to max(w_j, weight_floor)
    double weight_floor = 0.05;
};

inline double median_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    std::vector<double> v(xs.begin(), xs.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

inline double sinkhorn_epsilon(const Matrix& cost, const AlignmentSettings& s) {
    if (s.epsilon_fixed > 0.0) return s.epsilon_fixed;
    double eps = s.epsilon_scale * median_of(cost.values());
    if (!(eps > 0.0)) {
        double cmax = 0.0;
        for (double x : cost.values()) cmax = std::max(cmax, x);
        eps = s.epsilon_scale * cmax;
    }
    return eps > 0.0 ? eps : 1.0;
}

inline std::vector<double> column_marginal(std::span<const double> rule_weights, const AlignmentSettings& s) {
    if (!s.weighted_columns) return uniform_marginal(rule_weights.size());
    std::vector<double> b(rule_weights.size());
    double total = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) total += b[j] = std::max(rule_weights[j], s.weight_floor);
    for (double& x : b) x /= total;
    return b;
}

struct BatchAlignment {
    Matrix cost;
    TransportPlan plan;
    std::vector<double> sample_cost;
};

inline BatchAlignment align_batch(const Matrix& sample_emb, const Matrix& rule_emb,
                                  std::span<const double> rule_weights, const AlignmentSettings& s) {
    BatchAlignment out;
    out.cost = cost_matrix(sample_emb, rule_emb);
    const auto a = uniform_marginal(sample_emb.rows());
    const auto b = column_marginal(rule_weights, s);
    out.plan = sinkhorn(out.cost, sinkhorn_epsilon(out.cost, s), a, b, s.sinkhorn);
    out.sample_cost = transport_cost(out.plan.plan, out.cost);
    return out;
}

}  // namespace clevercatch
