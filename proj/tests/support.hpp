#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls the LP solver: reference answers come from brute force.

#include <certnn/model.hpp>
#include <certnn/store.hpp>

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace certnn::testing {

inline std::string data_path(const std::string & name)
{
    return std::string(CERTNN_TEST_DATA) + "/" + name;
}

/// Canonical p/d; mpq_class(p, d) alone does not reduce.
inline Rational q(long p, long d = 1)
{
    Rational r(p, d);
    r.canonicalize();
    return r;
}

/// Solves the square system M x = r by exact Gaussian elimination; nullopt
/// when M is singular.
inline std::optional<std::vector<Rational>> solve_square(std::vector<std::vector<Rational>> m, std::vector<Rational> r)
{
    const std::size_t n = r.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        while (piv < n && m[piv][col] == 0)
            ++piv;
        if (piv == n)
            return std::nullopt;
        std::swap(m[piv], m[col]);
        std::swap(r[piv], r[col]);
        for (std::size_t row = 0; row < n; ++row) {
            if (row == col || m[row][col] == 0)
                continue;
            const Rational f = m[row][col] / m[col][col];
            for (std::size_t k = col; k < n; ++k)
                m[row][k] -= f * m[col][k];
            r[row] -= f * r[col];
        }
    }
    std::vector<Rational> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = r[i] / m[i][i];
    return x;
}

/// Maximum of g over a bounded polyhedron {A v <= b} in few variables by
/// enumerating every vertex; nullopt when no vertex is feasible.
inline std::optional<Rational> vertex_max(const NormalizedSystem & sys, const LinearExpr & g)
{
    const std::size_t n = sys.num_vars();
    const std::size_t m = sys.num_rows();
    std::optional<Rational> best;
    std::vector<std::size_t> pick(n);
    std::vector<bool> mask(m, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(std::min(n, m)), true);
    if (n > m)
        return std::nullopt;
    do {
        std::vector<std::vector<Rational>> a;
        std::vector<Rational> r;
        for (std::size_t i = 0; i < m; ++i)
            if (mask[i]) {
                std::vector<Rational> row(n, Rational(0));
                for (const auto & [var, c] : sys.row(i).coeffs)
                    row[var] = c;
                a.push_back(std::move(row));
                r.push_back(sys.row(i).rhs);
            }
        auto v = solve_square(a, r);
        if (v && sys.satisfied_by(*v)) {
            auto val = evaluate(g, *v);
            if (! best || val > *best)
                best = val;
        }
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return best;
}

/// Uniform rational in [lo, hi] on a grid of `steps` cells.
inline Rational grid_point(std::mt19937 & rng, const Rational & lo, const Rational & hi, int steps = 64)
{
    std::uniform_int_distribution<int> d(0, steps);
    return lo + (hi - lo) * q(d(rng), steps);
}

inline std::vector<Rational> sample_input(std::mt19937 & rng, const Box & box, int steps = 64)
{
    std::vector<Rational> x;
    for (std::size_t k = 0; k < box.dim(); ++k)
        x.push_back(grid_point(rng, box.lower[k], box.upper[k], steps));
    return x;
}

/// Phase pattern of an exact trace; zero pre-activations count as active.
inline bool consistent(const Trace & t, const PhaseAssignment & alpha)
{
    for (const auto & [u, p] : alpha) {
        const auto & s = t.pre[u.layer][u.neuron];
        if (p == Phase::Active ? s < 0 : s > 0)
            return false;
    }
    return true;
}

inline Rational random_rational(std::mt19937 & rng, int max_abs_num, int max_den)
{
    std::uniform_int_distribution<int> num(-max_abs_num, max_abs_num);
    std::uniform_int_distribution<int> den(1, max_den);
    return q(num(rng), den(rng));
}

/// Count of units unstable under interval bounds on the whole region.
inline std::size_t root_unstable(const Problem & p)
{
    const VariableLayout layout(p.net, p.property);
    return build_initial_store(p, layout, p.region, {}, {}).unstable().size();
}

/// Random dense ReLU network: up to `max_hidden` hidden layers of width up to
/// `max_width`, rational weights with denominators up to 8, at most
/// `max_unstable` units unstable at the root. The threshold is placed near
/// the largest sampled margin so that both verdicts occur.
inline Problem random_problem(std::mt19937 & rng, std::size_t max_hidden = 3, std::size_t max_width = 4,
    std::size_t max_unstable = 6)
{
    for (;;) {
        Problem p;
        std::uniform_int_distribution<std::size_t> in_dim(1, 2), hidden(1, max_hidden), width(1, max_width),
            out_dim(1, 2);
        p.net.input_dim = in_dim(rng);
        std::size_t prev = p.net.input_dim;
        const std::size_t layers = hidden(rng);
        for (std::size_t i = 0; i <= layers; ++i) {
            Layer l;
            const std::size_t w = i == layers ? out_dim(rng) : width(rng);
            l.activation = i == layers ? Activation::Identity : Activation::Relu;
            for (std::size_t j = 0; j < w; ++j) {
                std::vector<Rational> row;
                for (std::size_t k = 0; k < prev; ++k)
                    row.push_back(random_rational(rng, 8, 8));
                l.weights.push_back(std::move(row));
                l.bias.push_back(random_rational(rng, 4, 8));
            }
            p.net.layers.push_back(std::move(l));
            prev = w;
        }
        std::uniform_int_distribution<int> lo(-4, 2), width_steps(1, 8);
        for (std::size_t k = 0; k < p.net.input_dim; ++k) {
            const Rational l = q(lo(rng), 4);
            p.region.lower.push_back(l);
            p.region.upper.push_back(l + q(width_steps(rng), 4));
        }
        if (p.net.output_dim() == 2 && rng() % 2)
            p.property.margin = {{0, Rational(1)}, {1, Rational(-1)}};
        else
            p.property.margin = {{0, Rational(1)}};
        p.property.epsilon = rng() % 2 ? Rational(0) : q(1, 10);

        Rational best;
        for (int s = 0; s < 128; ++s) {
            const auto x = sample_input(rng, p.region, 32);
            const auto m = p.property.evaluate(forward_eval(p.net, x).outputs());
            if (s == 0 || m > best)
                best = m;
        }
        // Mostly just above the sampled maximum, where the relaxation alone
        // rarely decides.
        std::uniform_int_distribution<int> offset(-2, 6);
        p.property.threshold = best + q(offset(rng), 32) - p.property.epsilon;

        p.net.validate();
        const auto u = root_unstable(p);
        if (u <= max_unstable && u >= 1)
            return p;
    }
}

} // namespace certnn::testing
