#include <certnn/errors.hpp>
#include <certnn/gate.hpp>

#include <algorithm>
#include <stdexcept>

namespace certnn {

void ClauseDB::add(ClauseEntry entry)
{
    std::lock_guard lock(_mutex);
    _entries.push_back(std::make_shared<const ClauseEntry>(std::move(entry)));
}

std::size_t ClauseDB::size() const
{
    std::lock_guard lock(_mutex);
    return _entries.size();
}

std::shared_ptr<const ClauseEntry> ClauseDB::find(const Box & region, const GuardSet & assignment) const
{
    std::lock_guard lock(_mutex);
    for (const auto & e : _entries)
        if (e->clause.falsified_by(assignment) && e->region.contains(region))
            return e;
    return nullptr;
}

ViolationReport violation_report(const VariableLayout & layout, std::span<const Rational> point,
    const std::set<UnitId> & units)
{
    ViolationReport out;
    for (const auto & unit : units) {
        const auto & s = point[layout.pre(unit)];
        const auto & z = point[layout.post(unit)];
        Rational r = abs(z - (s > 0 ? s : Rational(0)));
        if (r > 0)
            out.violated.insert(unit);
        out.residuals.emplace(unit, std::move(r));
    }
    return out;
}

std::set<UnitId> select_violated(const ViolationReport & report)
{
    if (report.violated.empty())
        throw ValueError("EmptyViolationSet: no violated unit to select");
    const UnitId * best = nullptr;
    for (const auto & unit : report.violated)
        if (! best || report.residuals.at(unit) > report.residuals.at(*best))
            best = &unit;
    return {*best};
}

namespace {

class Dpll
{
public:
    Dpll(const Store & store, const std::set<UnitId> & exact, ClauseDB * clauses, Engine & engine,
        std::uint64_t allowance) :
        _store(store), _units(exact.begin(), exact.end()), _clauses(clauses), _engine(engine), _allowance(allowance)
    {
        _alpha = guards_of(store.phases());
    }

    ExactResult run()
    {
        const auto status = search(_store, 0, {});
        _result.status = status;
        if (status != ExactResult::Status::Unsat)
            _result.cover.clear();
        return std::move(_result);
    }

private:
    ExactResult::Status search(const Store & cur, std::size_t depth, const GuardSet & tau)
    {
        GuardSet assignment = _alpha;
        assignment.insert(tau.begin(), tau.end());
        if (_clauses)
            if (auto hit = _clauses->find(cur.region(), assignment)) {
                auto cert = hit->certificate;
                cert.guards.clear();
                for (const auto & g : hit->clause.guards)
                    if (! _alpha.contains(g))
                        cert.guards.insert(g);
                _result.cover.push_back(std::move(cert));
                return ExactResult::Status::Unsat;
            }

        if (_result.lp_calls >= _allowance || ! _engine.take_lp())
            return ExactResult::Status::Limit;
        ++_result.lp_calls;
        const auto sys = cur.normalize();
        auto r = lp_feasible(sys, _engine.limits);
        if (r.status == LpOutcome::Status::ResourceLimit)
            return ExactResult::Status::Limit;

        if (r.infeasible()) {
            GuardedCertificate cert{cur.combined_deps(r.dual).guards, FarkasCertificate{r.dual}};
            if (auto ok = check_guarded(cur, cert); ! ok)
                throw std::logic_error("guarded certificate failed self-check: " + ok.reason);
            GuardSet beyond;
            for (const auto & g : cert.guards)
                if (! _alpha.contains(g))
                    beyond.insert(g);
            auto snap = cur.snapshot(cert.inner.multipliers, beyond);
            ConflictClause clause{cert.guards, _result.certificates.size()};
            if (_clauses && ! clause.empty()) {
                auto stored = snap;
                stored.guards = clause.guards;
                _clauses->add(ClauseEntry{clause, cur.region(), std::move(stored)});
            }
            _result.learned.push_back(std::move(clause));
            _result.certificates.push_back(std::move(cert));
            _result.cover.push_back(std::move(snap));
            return ExactResult::Status::Unsat;
        }

        if (depth == _units.size()) {
            _result.model = std::move(r.primal);
            return ExactResult::Status::Sat;
        }
        for (const auto phase : {Phase::Active, Phase::Inactive}) {
            const GuardLiteral lit{_units[depth], phase};
            Store next = cur;
            add_guard(next, lit);
            GuardSet tau2 = tau;
            tau2.insert(lit);
            const auto status = search(next, depth + 1, tau2);
            if (status != ExactResult::Status::Unsat)
                return status;
        }
        return ExactResult::Status::Unsat;
    }

    const Store & _store;
    std::vector<UnitId> _units;
    ClauseDB * _clauses;
    Engine & _engine;
    std::uint64_t _allowance;
    GuardSet _alpha;
    ExactResult _result;
};

bool satisfies(const VariableLayout & layout, std::span<const Rational> v, GuardLiteral lit)
{
    for (const auto & g : guard_consequences(layout, lit)) {
        const auto lhs = evaluate(g.row, v);
        if (g.relation == Relation::Eq ? lhs != g.rhs : lhs > g.rhs)
            return false;
    }
    return true;
}

} // namespace

ExactResult exact_solve(const Store & store, const std::set<UnitId> & exact, ClauseDB * clauses, Engine & engine,
    std::uint64_t lp_allowance)
{
    return Dpll(store, exact, clauses, engine, lp_allowance).run();
}

GateOutcome exactness_gate(const Store & store, ClauseDB * clauses, Engine & engine, std::uint64_t lp_allowance)
{
    ++engine.counters.gate_invocations;
    GateOutcome out;
    const auto unstable = store.unstable();
    const auto & layout = store.layout();
    const auto & problem = store.problem();
    std::uint64_t used = 0;

    for (;;) {
        if (used >= lp_allowance) {
            out.reason = GateOutcome::DeferReason::Budget;
            return out;
        }
        auto r = exact_solve(store, out.exact, clauses, engine, lp_allowance - used);
        used += r.lp_calls;
        if (r.status == ExactResult::Status::Limit) {
            out.reason = engine.exhausted() || used >= lp_allowance ? GateOutcome::DeferReason::Budget
                                                                    : GateOutcome::DeferReason::SolverLimit;
            return out;
        }
        if (r.status == ExactResult::Status::Unsat) {
            out.kind = GateOutcome::Kind::Prune;
            out.cover = std::move(r.cover);
            out.clauses = std::move(r.learned);
            engine.counters.clauses += out.clauses.size();
            return out;
        }

        std::vector<Rational> x(r.model.begin(), r.model.begin() + static_cast<std::ptrdiff_t>(layout.input_dim()));
        if (validate_witness(problem, x)) {
            out.kind = GateOutcome::Kind::Sat;
            out.witness = std::move(x);
            return out;
        }
        const auto report = violation_report(layout, r.model, unstable);
        if (report.violated.empty()) {
            out.reason = GateOutcome::DeferReason::ExactNonCounterexample;
            return out;
        }
        for (const auto & unit : select_violated(report)) {
            // The spurious model must violate both phases of the new unit.
            if (satisfies(layout, r.model, {unit, Phase::Active}) || satisfies(layout, r.model, {unit, Phase::Inactive}))
                ++engine.counters.witness_elimination_failures;
            out.exact.insert(unit);
        }
        ++out.refinements;
        ++engine.counters.gate_refinements;
        if (out.refinements > unstable.size())
            ++engine.counters.gate_bound_violations;
    }
}

} // namespace certnn
