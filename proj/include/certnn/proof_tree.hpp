#pragma once

#include <certnn/certs.hpp>
#include <certnn/linear.hpp>
#include <certnn/model.hpp>

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace certnn {

using PhaseAssignment = std::map<UnitId, Phase>;

GuardSet guards_of(const PhaseAssignment & alpha);

/// How a snapshot row was obtained. Every non-base row cites earlier entries
/// of the same snapshot by position.
enum class Justification
{
    Base,   // affine layer equation, box bound, negated query or guard consequence
    Dual,   // nonnegative combination of earlier entries
    Hull,   // ReLU envelope over recorded pre-activation bounds
    Stable, // linear specialization of a unit whose sign is established
    Lemma   // learned lemma, by index into the log's lemma list
};

std::string to_string(Justification j);

/// One inequality `row <= rhs` of a certificate snapshot.
struct ChainEntry
{
    LinearExpr row;
    Rational rhs;
    Justification by = Justification::Base;

    std::vector<std::pair<std::size_t, Rational>> multipliers; // Dual

    UnitId unit;                     // Hull, Stable
    Phase phase = Phase::Active;     // Stable
    bool uses_bounds = false;        // Hull: false for the two bound-free envelope rows
    Rational lower, upper;           // Hull: bounds the envelope is built from
    std::size_t upper_ref = 0;       // Hull: entry "s <= upper"; Stable: the sign entry
    std::size_t lower_ref = 0;       // Hull: entry "-s <= -lower"
    std::size_t lemma = 0;           // Lemma

    friend bool operator==(const ChainEntry &, const ChainEntry &) = default;
};

using Chain = std::vector<ChainEntry>;

/// A certificate over a by-value row snapshot. For Farkas leaves `lambda`
/// combines to 0 <= negative; for bound leaves it combines to g <= bound.
struct SnapshotCertificate
{
    Chain rows;
    std::vector<std::pair<std::size_t, Rational>> lambda;
    GuardSet guards; // guard literals beyond the node's phases (cover entries)
    Rational value;  // lambda^T b, recorded so a loosened row cannot go unnoticed

    friend bool operator==(const SnapshotCertificate &, const SnapshotCertificate &) = default;
};

struct ProofNode
{
    enum class Kind
    {
        DomainSplit,
        PhaseSplit,
        PruneInfeasible, // one Farkas certificate
        PruneBound,      // one dual bound certificate on the margin (or lemma form)
        PruneCover       // guarded Farkas certificates covering all phase patterns
    };

    Box region;
    PhaseAssignment phases;
    Kind kind = Kind::PruneInfeasible;

    std::size_t split_dim = 0; // DomainSplit
    Rational midpoint;         // DomainSplit
    UnitId split_unit;         // PhaseSplit; children are (active, inactive)
    std::vector<ProofNode> children;

    Rational bound; // PruneBound
    std::vector<SnapshotCertificate> certificates;

    bool is_leaf() const { return kind != Kind::DomainSplit && kind != Kind::PhaseSplit; }
    std::size_t leaf_count() const;
    std::size_t split_count() const;

    friend bool operator==(const ProofNode &, const ProofNode &) = default;
};

/// A learned lemma `form <= bound`, valid on every exact trace of the
/// network whose input lies in `region` and whose phases agree with `phases`.
struct LemmaProof
{
    LinearExpr form;
    Rational bound;
    Box region;
    PhaseAssignment phases;
    ProofNode proof; // obligation: form <= bound on (region, phases), query rows unavailable

    friend bool operator==(const LemmaProof &, const LemmaProof &) = default;
};

struct ProofLog
{
    std::string problem_digest;
    std::vector<LemmaProof> lemmas;
    ProofNode root;

    friend bool operator==(const ProofLog &, const ProofLog &) = default;
};

} // namespace certnn
