#pragma once

#include <certnn/gate.hpp>
#include <certnn/propagate.hpp>

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace certnn {

enum class Strategy
{
    Icl,
    Hsrv
};

struct VerifyConfig
{
    Strategy strategy = Strategy::Icl;
    std::size_t max_depth = 64;
    std::uint64_t lp_budget = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t gate_budget = 512; // LP calls per gate invocation
    std::size_t workers = 1;
    TemplateMode templates = TemplateMode::Default;
    std::size_t propagate_iterations = 8;
    bool force_root_domain_split = false;
    bool merge = true;
    LpLimits lp_limits;
};

struct CounterSnapshot
{
    std::uint64_t splits = 0, lp_calls = 0, gate_invocations = 0, gate_refinements = 0, stabilized = 0, lemmas = 0,
                  clauses = 0, tgct_rows = 0, tgct_bound_violations = 0, gate_bound_violations = 0,
                  witness_elimination_failures = 0;
};

CounterSnapshot snapshot(const Counters & c);

struct VerifyResult
{
    enum class Verdict
    {
        Sat,
        Unsat,
        Unknown
    };

    Verdict verdict = Verdict::Unknown;
    std::vector<Rational> witness; // Sat
    Trace trace;                   // Sat
    ProofLog log;                  // Unsat
    std::string reason;            // Unknown
    std::vector<LemmaProof> learned; // every lemma of the run, in learning order
    CounterSnapshot counters;
};

std::string to_string(VerifyResult::Verdict v);

/// How a node is refined: a phase split of an unstable unit, or a bisection
/// of one input dimension at its exact midpoint.
struct Refinement
{
    enum class Kind
    {
        Phase,
        Domain,
        Nothing
    };

    Kind kind = Kind::Nothing;
    UnitId unit;
    std::size_t dim = 0;
    Rational midpoint;
};

/// Phase split on the unstable unit with the largest min(-l, u) when any
/// exists (unless `prefer_domain`), else bisection of the longest edge.
Refinement choose_refinement(const Store & store, const Box & region, bool prefer_domain = false);

struct NodeDescriptor
{
    Box region;
    PhaseAssignment phases;
};

/// Children in proof order: (lower, upper) or (active, inactive). Throws
/// ValueError (NothingToSplit) for Kind::Nothing.
std::array<NodeDescriptor, 2> refine(const NodeDescriptor & node, const Refinement & r);

/// A certified bound form <= bound on the node of `proof`.
struct BoundProof
{
    LinearExpr form;
    Rational bound;
    ProofNode proof;
};

/// Combines the children's bounds into form <= max(bounds) on the parent
/// described by `split` (a split node without children). Throws ValueError
/// (MissingChildCertificate) when the children bound different forms.
Lemma merge_lemma(const ProofNode & split, const BoundProof & first, const BoundProof & second);

VerifyResult icl_verify(const Problem & problem, const VerifyConfig & config);
VerifyResult hsrv_verify(const Problem & problem, const VerifyConfig & config);
VerifyResult verify(const Problem & problem, const VerifyConfig & config);

struct OracleResult
{
    bool sat = false;
    std::vector<Rational> witness;
    std::size_t assignments = 0;
    std::size_t lp_calls = 0;
};

/// Ground truth by enumerating every phase assignment of the units unstable
/// at the root. Throws CapExceeded above `cap` such units.
OracleResult oracle_verify(const Problem & problem, std::size_t cap = 12);

} // namespace certnn
