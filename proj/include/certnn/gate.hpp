#pragma once

#include <certnn/propagate.hpp>

#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <vector>

namespace certnn {

/// A learned clause with the region it was derived on and the certificate
/// that justifies it, kept by value so it can close later nodes.
struct ClauseEntry
{
    ConflictClause clause;
    Box region;
    SnapshotCertificate certificate; // guards: the clause literals
};

/// Append-only clause database shared by the workers of one run.
class ClauseDB
{
public:
    void add(ClauseEntry entry);
    std::size_t size() const;

    /// A clause derived on a region containing `region` whose literals are
    /// all asserted by `assignment`, if any.
    std::shared_ptr<const ClauseEntry> find(const Box & region, const GuardSet & assignment) const;

private:
    mutable std::mutex _mutex;
    std::vector<std::shared_ptr<const ClauseEntry>> _entries;
};

struct ViolationReport
{
    std::map<UnitId, Rational> residuals; // |z - max(0, s)| for each unit of U
    std::set<UnitId> violated;
};

ViolationReport violation_report(const VariableLayout & layout, std::span<const Rational> point,
    const std::set<UnitId> & units);

/// The unit of largest residual, ties to the first in (layer, neuron) order.
/// Throws ValueError for an empty violation set.
std::set<UnitId> select_violated(const ViolationReport & report);

struct ExactResult
{
    enum class Status
    {
        Sat,
        Unsat,
        Limit
    };

    Status status = Status::Limit;
    std::vector<Rational> model;
    std::vector<GuardedCertificate> certificates;  // against the solver's own stores
    std::vector<SnapshotCertificate> cover;        // guards beyond the node's phases
    std::vector<ConflictClause> learned;
    std::size_t lp_calls = 0;
};

/// DPLL over the phase literals of `exact` on top of `store` (which must
/// carry the negated query). Every LP-infeasible branch yields a guarded
/// certificate whose guards are those its rows depend on; the union of the
/// branches forms an exhaustive cover when the result is Unsat.
ExactResult exact_solve(const Store & store, const std::set<UnitId> & exact, ClauseDB * clauses, Engine & engine,
    std::uint64_t lp_allowance);

struct GateOutcome
{
    enum class Kind
    {
        Sat,
        Prune,
        Defer
    };
    enum class DeferReason
    {
        None,
        ExactNonCounterexample,
        Budget,
        SolverLimit
    };

    Kind kind = Kind::Defer;
    DeferReason reason = DeferReason::None;
    std::vector<Rational> witness;
    std::vector<SnapshotCertificate> cover;
    std::vector<ConflictClause> clauses;
    std::set<UnitId> exact; // final S
    std::size_t refinements = 0;
};

/// Grows the exact subset from the empty set by one violated unit per
/// spurious model until a witness validates, the partial encoding is
/// infeasible, or the LP allowance runs out.
GateOutcome exactness_gate(const Store & store, ClauseDB * clauses, Engine & engine, std::uint64_t lp_allowance);

} // namespace certnn
