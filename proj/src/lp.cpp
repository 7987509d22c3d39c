#include <certnn/lp.hpp>

#include <stdexcept>

namespace certnn {

namespace {

// The LP max g^T v s.t. A v <= b (v free) is solved through its dual
//   min b^T y  s.t.  A^T y = g,  y >= 0
// in standard form with one artificial per equation. Equation j is the
// column of variable j, sign-flipped so its right-hand side is nonnegative.
// Primal values are read off the reduced costs of the artificial columns,
// Farkas vectors are unbounded dual rays, and unbounded primal rays come from
// the phase-one multipliers.
class DualTableau
{
public:
    DualTableau(const NormalizedSystem & sys, const LinearExpr & g) : _sys(sys)
    {
        std::vector<bool> used(sys.num_vars(), false);
        for (const auto & row : sys.rows())
            for (const auto & [var, c] : row.coeffs)
                used[var] = true;
        for (const auto & [var, c] : g)
            if (c != 0)
                used[var] = true;
        for (std::size_t v = 0; v < used.size(); ++v)
            if (used[v]) {
                _eq_of_var.emplace(v, _vars.size());
                _vars.push_back(v);
            }

        _m = sys.num_rows();
        _n = _vars.size();
        _cols = _m + _n;
        _a.assign(_n * _cols, Rational(0));
        _rhs.assign(_n, Rational(0));
        _flip.assign(_n, false);
        for (std::size_t j = 0; j < _n; ++j) {
            auto it = g.find(_vars[j]);
            if (it != g.end()) {
                _flip[j] = it->second < 0;
                _rhs[j] = _flip[j] ? Rational(-it->second) : it->second;
            }
            at(j, _m + j) = 1;
        }
        for (std::size_t i = 0; i < _m; ++i)
            for (const auto & [var, c] : sys.row(i).coeffs) {
                const auto j = _eq_of_var.at(var);
                at(j, i) = _flip[j] ? Rational(-c) : c;
            }
        _basis.resize(_n);
        for (std::size_t j = 0; j < _n; ++j)
            _basis[j] = _m + j;
    }

    LpOutcome solve(const LpLimits & limits)
    {
        _limit = limits.max_pivots;
        LpOutcome out;

        // Phase one: minimize the sum of artificials.
        _d.assign(_cols, Rational(0));
        for (std::size_t j = 0; j < _n; ++j)
            for (std::size_t i = 0; i < _m; ++i)
                if (at(j, i) != 0)
                    _d[i] -= at(j, i);
        if (! run(false, out))
            return limit(out);

        Rational infeasibility = 0;
        for (std::size_t r = 0; r < _n; ++r)
            if (is_artificial(_basis[r]))
                infeasibility += _rhs[r];
        if (infeasibility > 0) {
            // Multipliers y_j = 1 - d_art(j) satisfy A^T-side reduced costs >= 0.
            out.status = LpOutcome::Status::Unbounded;
            out.ray.assign(_sys.num_vars(), Rational(0));
            for (std::size_t j = 0; j < _n; ++j) {
                Rational y = 1 - _d[_m + j];
                out.ray[_vars[j]] = _flip[j] ? Rational(-y) : y;
            }
            out.pivots = _pivots;
            return out;
        }

        // Drive zero-level artificials out of the basis where possible; rows
        // that cannot be cleared are redundant and keep their artificial at 0.
        for (std::size_t r = 0; r < _n; ++r) {
            if (! is_artificial(_basis[r]))
                continue;
            for (std::size_t c = 0; c < _m; ++c)
                if (at(r, c) != 0) {
                    pivot(r, c);
                    break;
                }
        }

        // Phase two: costs b on the multiplier columns.
        for (std::size_t c = 0; c < _cols; ++c)
            _d[c] = c < _m ? _sys.row(c).rhs : Rational(0);
        for (std::size_t r = 0; r < _n; ++r) {
            if (is_artificial(_basis[r]))
                continue;
            const Rational cb = _sys.row(_basis[r]).rhs;
            if (cb == 0)
                continue;
            for (std::size_t c = 0; c < _cols; ++c)
                if (at(r, c) != 0)
                    _d[c] -= cb * at(r, c);
        }
        std::size_t entering = 0;
        if (! run(true, out, &entering))
            return limit(out);

        out.pivots = _pivots;
        if (out.status == LpOutcome::Status::Infeasible) {
            // Unbounded dual ray: y_entering = 1, y_basis(r) = -a(r, entering).
            std::vector<Rational> y(_m, Rational(0));
            y[entering] = 1;
            for (std::size_t r = 0; r < _n; ++r)
                if (! is_artificial(_basis[r]) && at(r, entering) != 0)
                    y[_basis[r]] = -at(r, entering);
            for (std::size_t i = 0; i < _m; ++i)
                if (y[i] != 0)
                    out.dual.emplace_back(_sys.row(i).key, y[i]);
            return out;
        }

        out.status = LpOutcome::Status::Optimal;
        std::vector<Rational> y(_m, Rational(0));
        for (std::size_t r = 0; r < _n; ++r)
            if (! is_artificial(_basis[r]))
                y[_basis[r]] = _rhs[r];
        out.value = 0;
        for (std::size_t i = 0; i < _m; ++i)
            if (y[i] != 0) {
                out.dual.emplace_back(_sys.row(i).key, y[i]);
                out.value += y[i] * _sys.row(i).rhs;
            }
        out.primal.assign(_sys.num_vars(), Rational(0));
        for (std::size_t j = 0; j < _n; ++j) {
            const Rational v = -_d[_m + j];
            out.primal[_vars[j]] = _flip[j] ? Rational(-v) : v;
        }
        return out;
    }

private:
    Rational & at(std::size_t r, std::size_t c) { return _a[r * _cols + c]; }
    bool is_artificial(std::size_t c) const { return c >= _m; }

    LpOutcome & limit(LpOutcome & out)
    {
        out.status = LpOutcome::Status::ResourceLimit;
        out.pivots = _pivots;
        return out;
    }

    /// Bland's rule simplex. Returns false on the pivot limit. In phase two an
    /// unbounded column sets status Infeasible (the primal has no point).
    bool run(bool phase_two, LpOutcome & out, std::size_t * unbounded_col = nullptr)
    {
        for (;;) {
            std::size_t e = _cols;
            const std::size_t last = phase_two ? _m : _cols;
            for (std::size_t c = 0; c < last; ++c)
                if (_d[c] < 0) {
                    e = c;
                    break;
                }
            if (e == _cols)
                return true;

            std::size_t leave = _n;
            Rational best;
            for (std::size_t r = 0; r < _n; ++r) {
                const auto & coef = at(r, e);
                if (coef <= 0)
                    continue;
                Rational ratio = _rhs[r] / coef;
                if (leave == _n || ratio < best || (ratio == best && _basis[r] < _basis[leave])) {
                    leave = r;
                    best = std::move(ratio);
                }
            }
            if (leave == _n) {
                if (! phase_two)
                    throw std::logic_error("phase one cannot be unbounded");
                out.status = LpOutcome::Status::Infeasible;
                *unbounded_col = e;
                return true;
            }
            if (_pivots >= _limit)
                return false;
            pivot(leave, e);
        }
    }

    void pivot(std::size_t r, std::size_t e)
    {
        ++_pivots;
        const Rational inv = 1 / at(r, e);
        _nz.clear();
        for (std::size_t c = 0; c < _cols; ++c)
            if (at(r, c) != 0) {
                at(r, c) *= inv;
                _nz.push_back(c);
            }
        _rhs[r] *= inv;
        Rational f;
        for (std::size_t k = 0; k < _n; ++k) {
            if (k == r || at(k, e) == 0)
                continue;
            f = at(k, e);
            for (auto c : _nz)
                at(k, c) -= f * at(r, c);
            if (_rhs[r] != 0)
                _rhs[k] -= f * _rhs[r];
        }
        if (_d[e] != 0) {
            f = _d[e];
            for (auto c : _nz)
                _d[c] -= f * at(r, c);
        }
        _basis[r] = e;
    }

    const NormalizedSystem & _sys;
    std::vector<std::size_t> _vars;
    std::map<std::size_t, std::size_t> _eq_of_var;
    std::size_t _m = 0, _n = 0, _cols = 0;
    std::vector<Rational> _a, _rhs, _d;
    std::vector<bool> _flip;
    std::vector<std::size_t> _basis;
    std::vector<std::size_t> _nz;
    std::size_t _pivots = 0, _limit = 0;
};

struct Combined
{
    LinearExpr lhs;
    Rational rhs;
};

Combined combine(const NormalizedSystem & sys, const Multipliers & lambda)
{
    Combined out;
    for (const auto & [key, value] : lambda) {
        if (value < 0)
            throw std::logic_error("lp produced a negative multiplier");
        const auto & row = sys.row(sys.position(key));
        add_scaled(out.lhs, row.coeffs, value);
        out.rhs += value * row.rhs;
    }
    return out;
}

void verify(const NormalizedSystem & sys, const LinearExpr & g, const LpOutcome & out)
{
    auto fail = [](const char * what) { throw std::logic_error(std::string("lp self-check failed: ") + what); };
    switch (out.status) {
    case LpOutcome::Status::Optimal: {
        auto c = combine(sys, out.dual);
        LinearExpr target;
        for (const auto & [var, coef] : g)
            if (coef != 0)
                target.emplace(var, coef);
        if (c.lhs != target || c.rhs != out.value)
            fail("dual");
        if (! sys.satisfied_by(out.primal) || evaluate(target, out.primal) != out.value)
            fail("primal");
        break;
    }
    case LpOutcome::Status::Infeasible: {
        auto c = combine(sys, out.dual);
        if (! c.lhs.empty() || c.rhs >= 0)
            fail("farkas");
        break;
    }
    case LpOutcome::Status::Unbounded: {
        for (const auto & row : sys.rows())
            if (evaluate(row.coeffs, out.ray) > 0)
                fail("ray");
        if (evaluate(g, out.ray) <= 0)
            fail("ray direction");
        break;
    }
    case LpOutcome::Status::ResourceLimit:
        break;
    }
}

LpOutcome solve_max(const NormalizedSystem & sys, const LinearExpr & g, const LpLimits & limits)
{
    DualTableau tableau(sys, g);
    auto out = tableau.solve(limits);
    if (out.status == LpOutcome::Status::Unbounded) {
        // An unbounded direction says nothing unless a point exists.
        DualTableau feas(sys, {});
        auto f = feas.solve(limits);
        f.pivots += out.pivots;
        if (f.status == LpOutcome::Status::Infeasible || f.status == LpOutcome::Status::ResourceLimit) {
            verify(sys, {}, f);
            return f;
        }
        out.primal = std::move(f.primal);
        out.pivots = f.pivots;
    }
    verify(sys, g, out);
    return out;
}

} // namespace

LpOutcome lp_max(const NormalizedSystem & sys, const LinearExpr & g, const LpLimits & limits)
{
    return solve_max(sys, g, limits);
}

LpOutcome lp_min(const NormalizedSystem & sys, const LinearExpr & g, const LpLimits & limits)
{
    auto out = solve_max(sys, negated(g), limits);
    if (out.optimal())
        out.value = -out.value;
    return out;
}

LpOutcome lp_feasible(const NormalizedSystem & sys, const LpLimits & limits)
{
    return solve_max(sys, {}, limits);
}

} // namespace certnn
