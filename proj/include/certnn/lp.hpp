#pragma once

#include <certnn/linear.hpp>

#include <cstddef>
#include <vector>

namespace certnn {

struct LpLimits
{
    std::size_t max_pivots = 200000;
};

/// Result of an exact LP over A v <= b. Every non-limit outcome is verified
/// against its defining identities before it is returned.
struct LpOutcome
{
    enum class Status
    {
        Optimal,       // value, primal, dual (lambda^T A = g, lambda^T b = value)
        Infeasible,    // dual holds a Farkas vector
        Unbounded,     // ray with A ray <= 0 and g^T ray > 0
        ResourceLimit  // pivot limit reached; nothing is claimed
    };

    Status status = Status::ResourceLimit;
    Rational value;
    std::vector<Rational> primal;
    Multipliers dual;
    std::vector<Rational> ray;
    std::size_t pivots = 0;

    bool optimal() const { return status == Status::Optimal; }
    bool infeasible() const { return status == Status::Infeasible; }
};

/// max g^T v subject to the rows of `sys`.
LpOutcome lp_max(const NormalizedSystem & sys, const LinearExpr & g, const LpLimits & limits = {});

/// min g^T v; an Optimal dual certifies -g^T v <= -value.
LpOutcome lp_min(const NormalizedSystem & sys, const LinearExpr & g, const LpLimits & limits = {});

/// Optimal (with a feasible point in `primal`) or Infeasible.
LpOutcome lp_feasible(const NormalizedSystem & sys, const LpLimits & limits = {});

} // namespace certnn
