#pragma once

#include <certnn/linear.hpp>
#include <certnn/model.hpp>

#include <cstdint>
#include <set>
#include <string>

namespace certnn {

enum class Phase
{
    Active,
    Inactive
};

std::string to_string(Phase p);

/// A phase commitment for one ReLU unit.
struct GuardLiteral
{
    UnitId unit;
    Phase phase = Phase::Active;

    auto operator<=>(const GuardLiteral &) const = default;
};

inline GuardLiteral complement(GuardLiteral g)
{
    return {g.unit, g.phase == Phase::Active ? Phase::Inactive : Phase::Active};
}

using GuardSet = std::set<GuardLiteral>;

/// Claims g^T v <= bound over the rows it cites.
struct DualBoundCertificate
{
    LinearExpr objective;
    Rational bound;
    Multipliers multipliers;
};

/// Claims infeasibility of the rows it cites.
struct FarkasCertificate
{
    Multipliers multipliers;
};

/// Infeasibility of the unguarded rows plus the consequences of `guards`.
struct GuardedCertificate
{
    GuardSet guards;
    FarkasCertificate inner;
};

/// Active: inner certifies -s <= 0. Inactive: inner certifies s <= 0.
struct StabilityCertificate
{
    UnitId unit;
    Phase phase = Phase::Active;
    DualBoundCertificate inner;
};

/// The disjunction of the negations of `guards`.
struct ConflictClause
{
    GuardSet guards;
    std::uint64_t source = 0;

    bool empty() const { return guards.empty(); }
    /// True when every guard of the clause is asserted by `assignment`, i.e.
    /// the clause is falsified.
    bool falsified_by(const GuardSet & assignment) const;
};

struct CheckResult
{
    bool accepted = false;
    std::string reason;

    static CheckResult accept() { return {true, {}}; }
    static CheckResult reject(std::string why) { return {false, std::move(why)}; }
    explicit operator bool() const { return accepted; }
};

/// Rational multiplications performed by the checkers on this thread.
std::uint64_t checker_multiplications();
void reset_checker_multiplications();

/// Accept iff multipliers >= 0, sum lambda_r A_r = g and sum lambda_r b_r <= bound.
/// Throws UnknownRow for a key not in `sys`.
CheckResult check_dual(const NormalizedSystem & sys, const DualBoundCertificate & cert);

/// Accept iff multipliers >= 0, sum lambda_r A_r = 0 and sum lambda_r b_r < 0.
CheckResult check_farkas(const NormalizedSystem & sys, const FarkasCertificate & cert);

/// Accepts iff `cert` is a Farkas certificate over rows whose guard
/// dependencies are covered by cert.guards; `guarded_sys` must already contain
/// the unguarded rows plus the guard consequences for cert.guards.
CheckResult check_guarded(const NormalizedSystem & guarded_sys, const GuardedCertificate & cert);

/// Throws ValueError for a certificate that does not check.
ConflictClause derive_conflict_clause(const NormalizedSystem & guarded_sys, const GuardedCertificate & cert,
    std::uint64_t source);

} // namespace certnn
