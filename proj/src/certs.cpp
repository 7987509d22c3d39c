#include <certnn/certs.hpp>
#include <certnn/errors.hpp>
#include <optional>

namespace certnn {

namespace {

thread_local std::uint64_t multiplications = 0;

/// Computes lambda^T A and lambda^T b over the cited rows; one multiplication
/// per cited nonzero and one per cited right-hand side.
struct Combination
{
    LinearExpr lhs;
    Rational rhs;
};

std::optional<std::string> combine(const NormalizedSystem & sys, const Multipliers & lambda, Combination & out)
{
    for (const auto & [key, value] : lambda) {
        if (value < 0)
            return "negative multiplier on row " + std::to_string(key);
        const auto & row = sys.row(sys.position(key));
        if (value == 0)
            continue;
        for (const auto & [var, c] : row.coeffs) {
            auto [it, inserted] = out.lhs.try_emplace(var, 0);
            it->second += value * c;
            ++multiplications;
        }
        out.rhs += value * row.rhs;
        ++multiplications;
    }
    for (auto it = out.lhs.begin(); it != out.lhs.end();)
        it = it->second == 0 ? out.lhs.erase(it) : std::next(it);
    return std::nullopt;
}

} // namespace

std::string to_string(Phase p)
{
    return p == Phase::Active ? "active" : "inactive";
}

bool ConflictClause::falsified_by(const GuardSet & assignment) const
{
    for (const auto & g : guards)
        if (! assignment.contains(g))
            return false;
    return true;
}

std::uint64_t checker_multiplications()
{
    return multiplications;
}

void reset_checker_multiplications()
{
    multiplications = 0;
}

CheckResult check_dual(const NormalizedSystem & sys, const DualBoundCertificate & cert)
{
    Combination sum;
    if (auto err = combine(sys, cert.multipliers, sum))
        return CheckResult::reject("sign: " + *err);
    if (sum.lhs != cert.objective)
        return CheckResult::reject("lambda^T A = " + format_expr(sum.lhs) + " differs from objective "
            + format_expr(cert.objective));
    if (sum.rhs > cert.bound)
        return CheckResult::reject("lambda^T b = " + format_rational(sum.rhs) + " exceeds bound "
            + format_rational(cert.bound));
    return CheckResult::accept();
}

CheckResult check_farkas(const NormalizedSystem & sys, const FarkasCertificate & cert)
{
    Combination sum;
    if (auto err = combine(sys, cert.multipliers, sum))
        return CheckResult::reject("sign: " + *err);
    if (! sum.lhs.empty())
        return CheckResult::reject("lambda^T A = " + format_expr(sum.lhs) + " is not zero");
    if (sum.rhs >= 0)
        return CheckResult::reject("farkas-sign: lambda^T b = " + format_rational(sum.rhs) + " is not negative");
    return CheckResult::accept();
}

CheckResult check_guarded(const NormalizedSystem & guarded_sys, const GuardedCertificate & cert)
{
    try {
        return check_farkas(guarded_sys, cert.inner);
    }
    catch (const UnknownRow & e) {
        return CheckResult::reject(std::string("row outside C(G) and C0: ") + e.what());
    }
}

ConflictClause derive_conflict_clause(const NormalizedSystem & guarded_sys, const GuardedCertificate & cert,
    std::uint64_t source)
{
    if (auto r = check_guarded(guarded_sys, cert); ! r)
        throw ValueError("cannot derive a clause from a rejected certificate: " + r.reason);
    return ConflictClause{cert.guards, source};
}

} // namespace certnn
