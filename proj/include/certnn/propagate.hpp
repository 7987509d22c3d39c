#pragma once

#include <certnn/lp.hpp>
#include <certnn/store.hpp>

#include <atomic>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace certnn {

/// Run-wide counters, safe to bump from several workers.
struct Counters
{
    std::atomic<std::uint64_t> splits{0};
    std::atomic<std::uint64_t> lp_calls{0};
    std::atomic<std::uint64_t> gate_invocations{0};
    std::atomic<std::uint64_t> gate_refinements{0};
    std::atomic<std::uint64_t> stabilized{0};
    std::atomic<std::uint64_t> lemmas{0};
    std::atomic<std::uint64_t> clauses{0};
    std::atomic<std::uint64_t> tgct_rows{0};
    // Instrumentation for the saturation and refinement bounds.
    std::atomic<std::uint64_t> tgct_bound_violations{0};
    std::atomic<std::uint64_t> gate_bound_violations{0};
    std::atomic<std::uint64_t> witness_elimination_failures{0};
};

/// LP limits plus the global LP-call budget shared by a run.
class Engine
{
public:
    LpLimits limits;
    std::uint64_t lp_budget = std::numeric_limits<std::uint64_t>::max();
    Counters counters;

    /// Charges one LP call; false once the budget is spent.
    bool take_lp()
    {
        auto used = counters.lp_calls.load();
        do
            if (used >= lp_budget)
                return false;
        while (! counters.lp_calls.compare_exchange_weak(used, used + 1));
        return true;
    }
    bool exhausted() const { return counters.lp_calls.load() >= lp_budget; }
};

struct Template
{
    enum class Kind
    {
        NeuronBound,
        OutputMargin,
        Coupled
    };

    LinearExpr g;
    Kind kind = Kind::NeuronBound;
    UnitId unit;       // NeuronBound
    std::string label; // Coupled
};

using TemplateSet = std::vector<Template>;

enum class TemplateMode
{
    Default,   // one pre-activation form per unstable unit plus the margin
    MarginOnly
};

TemplateSet default_templates(const Store & store, TemplateMode mode);

struct TgctResult
{
    std::size_t rows_added = 0;
    std::vector<DualBoundCertificate> certificates;
    std::optional<FarkasCertificate> farkas;
    bool limit = false;
};

/// One TGCT pass: both directions of every template against the store as it
/// stands on entry; a bound is kept only when strictly tighter than the best
/// one already derived for that direction.
TgctResult tgct(Store & store, const TemplateSet & templates, Engine & engine);

/// Replaces the relaxation of every unit whose certified bounds fix its sign.
std::vector<StabilityCertificate> stabilize(Store & store);

/// Re-inserts envelope rows for unstable units whose bounds tightened.
std::size_t refresh_hulls(Store & store);

struct PropagateOptions
{
    TemplateMode templates = TemplateMode::Default;
    std::size_t max_iterations = 8;
};

struct PropagationResult
{
    enum class Status
    {
        Prune,
        Open,
        Limit
    };

    Status status = Status::Open;
    std::optional<FarkasCertificate> farkas;
    std::vector<DualBoundCertificate> dual_certificates;
    std::vector<StabilityCertificate> stability_certificates;
    std::set<UnitId> unstable;
    std::vector<Rational> point; // feasible point of the final store when Open
    std::size_t iterations = 0;
};

/// Hull, TGCT, stabilization, lemma injection and a feasibility check,
/// repeated until bounds, the unstable set and the lemma count stop changing.
PropagationResult propagate_node(Store & store, const LemmaStore & lemmas, Engine & engine,
    const PropagateOptions & options = {});

} // namespace certnn
