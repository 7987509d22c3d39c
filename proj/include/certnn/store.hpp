#pragma once

#include <certnn/certs.hpp>
#include <certnn/linear.hpp>
#include <certnn/model.hpp>
#include <certnn/proof_tree.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace certnn {

enum class Relation
{
    LessEq,
    Eq
};

enum class Block
{
    Aff,
    Domain,
    NegP,
    Rel,
    Learn,
    GuardConseq
};

std::string to_string(Block b);

/// In-process justification of a stored constraint; mirrors ChainEntry but
/// cites rows by key instead of snapshot position.
struct Derivation
{
    Justification by = Justification::Base;
    Multipliers multipliers; // Dual
    UnitId unit;             // Hull, Stable
    Phase phase = Phase::Active;
    Rational lower, upper;   // Hull (H3/H4 only)
    bool uses_bounds = false;
    RowKey upper_ref = 0;    // Hull: "s <= upper"; Stable: the sign row
    RowKey lower_ref = 0;    // Hull: "-s <= -lower"
    std::size_t lemma = 0;   // Lemma
};

/// Which assumptions beyond the node's region a row relies on.
struct Dependencies
{
    GuardSet guards;
    bool query = false;

    void merge(const Dependencies & other);
};

struct LinearConstraint
{
    std::uint64_t id = 0;
    LinearExpr row;
    Relation relation = Relation::LessEq;
    Rational rhs;
    Block block = Block::Aff;
    std::string origin; // base | hull(unit) | tgct(template) | stability(unit) | lemma(id) | guard(literal) | bound(unit)
    Derivation derivation;
    Dependencies deps;
    bool active = true; // retired rows stay so logged certificates remain checkable
};

/// Run-wide source of constraint ids; ids are never reused.
class IdAllocator
{
public:
    std::uint64_t next() { return _next.fetch_add(1); }

private:
    std::atomic<std::uint64_t> _next{1};
};

/// Certified pre-activation interval with the keys of the rows
/// "-s <= -lower" and "s <= upper".
struct Interval
{
    Rational lower, upper;
    RowKey lower_ref = 0, upper_ref = 0;
};

struct UnitState
{
    Interval pre;
    std::optional<Phase> fixed;
    bool fixed_by_guard = false;
    std::vector<std::uint64_t> hull_rows; // H1..H4 while the envelope is live
    Rational hull_lower, hull_upper;
};

/// A globally learned inequality `form <= bound` scoped to (region, phases).
struct Lemma
{
    LinearExpr form;
    Rational bound;
    Box region;
    PhaseAssignment phases;
    std::shared_ptr<const ProofNode> proof;

    bool applies_to(const Box & node_region, const PhaseAssignment & node_phases) const;
};

/// Append-only lemma list; readers see a consistent prefix.
class LemmaStore
{
public:
    std::size_t append(Lemma lemma);
    std::size_t size() const;
    std::vector<std::shared_ptr<const Lemma>> snapshot() const;

private:
    mutable std::mutex _mutex;
    std::vector<std::shared_ptr<const Lemma>> _lemmas;
};

/// The node-local relaxation store C with bound bookkeeping.
class Store
{
public:
    Store(const Problem & problem, const VariableLayout & layout, Box region, PhaseAssignment phases,
        std::shared_ptr<IdAllocator> ids = nullptr);

    const Problem & problem() const { return *_problem; }
    const VariableLayout & layout() const { return *_layout; }
    const Box & region() const { return _region; }
    const PhaseAssignment & phases() const { return _phases; }

    /// Adds a constraint unless an identical active one exists; returns the
    /// id of the stored constraint either way.
    std::uint64_t add(LinearExpr row, Relation rel, Rational rhs, Block block, std::string origin,
        Derivation derivation, Dependencies deps);
    void retire(std::uint64_t id);

    const LinearConstraint & constraint(std::uint64_t id) const;
    const std::vector<LinearConstraint> & constraints() const { return _constraints; }
    std::size_t active_count() const;

    NormalizedRow normalized(RowKey key) const;
    const Dependencies & deps(RowKey key) const { return constraint(key / 2).deps; }
    Dependencies combined_deps(const Multipliers & lambda) const;

    using RowFilter = std::function<bool(const LinearConstraint &)>;
    /// Active rows (optionally filtered) in id order, equalities split into
    /// adjacent halves.
    NormalizedSystem normalize(const RowFilter & filter = {}) const;

    std::map<UnitId, UnitState> & units() { return _units; }
    const std::map<UnitId, UnitState> & units() const { return _units; }
    std::set<UnitId> unstable() const;

    std::set<std::size_t> & injected_lemmas() { return _injected_lemmas; }
    const std::set<std::size_t> & injected_lemmas() const { return _injected_lemmas; }

    /// Best certified bound per template direction ("max <form>" or
    /// "min <form>"), for the no-improvement rule.
    std::map<std::string, Rational> & template_bounds() { return _template_bounds; }

    /// By-value snapshot of the cited rows and everything they derive from.
    /// `position` receives the snapshot index of each key.
    Chain extract_chain(const Multipliers & cited, std::map<RowKey, std::size_t> & position) const;
    SnapshotCertificate snapshot(const Multipliers & cited, GuardSet guards = {}) const;

private:
    const Problem * _problem;
    const VariableLayout * _layout;
    Box _region;
    PhaseAssignment _phases;
    std::shared_ptr<IdAllocator> _ids;
    std::vector<LinearConstraint> _constraints;
    std::unordered_map<std::uint64_t, std::size_t> _by_id;
    std::unordered_map<std::string, std::uint64_t> _active_signature;
    std::map<UnitId, UnitState> _units;
    std::set<std::size_t> _injected_lemmas;
    std::map<std::string, Rational> _template_bounds;
};

/// Linear consequences of a phase literal: active gives {z - s = 0, -s <= 0},
/// inactive gives {z = 0, s <= 0}.
struct GuardRow
{
    LinearExpr row;
    Relation relation;
    Rational rhs;
};
std::vector<GuardRow> guard_consequences(const VariableLayout & layout, GuardLiteral lit);

/// Adds the guard rows for `lit` (block GuardConseq, dependency on `lit`);
/// returns their constraint ids.
std::vector<std::uint64_t> add_guard(Store & store, GuardLiteral lit);

/// Adds the negated query margin >= threshold + epsilon (block NegP).
std::uint64_t add_query_row(Store & store);

/// Inserts the four envelope rows for an unstable unit from its current
/// certified interval, retiring stale envelope rows. Throws ValueError
/// (NotUnstable) when the interval does not straddle zero.
std::vector<std::uint64_t> hull_insert(Store & store, UnitId unit);

/// Replaces the relaxation of `unit` by its exact linear specialization;
/// `sign_ref` is the row "-s <= c" (active) or "s <= c" (inactive) with c <= 0.
StabilityCertificate stabilize_unit(Store & store, UnitId unit, Phase phase, RowKey sign_ref);

struct StoreOptions
{
    bool include_query = true;
    std::shared_ptr<IdAllocator> ids;
};

/// Affine equalities, box rows, the negated query, guard consequences of
/// `phases`, applicable lemmas, and certified interval bounds with the
/// relaxation each unit needs for the next layer's bounds.
Store build_initial_store(const Problem & problem, const VariableLayout & layout, const Box & region,
    const PhaseAssignment & phases, const std::vector<std::shared_ptr<const Lemma>> & lemmas,
    const StoreOptions & options = {});

/// Adds all applicable lemmas not yet present; returns how many were added.
std::size_t inject_lemmas(Store & store, const std::vector<std::shared_ptr<const Lemma>> & lemmas);

/// Builds the normalized system for a guarded certificate (unguarded rows,
/// rows depending only on `guards`, and materialized guard rows) and checks it.
CheckResult check_guarded(const Store & store, const GuardedCertificate & cert);

} // namespace certnn
