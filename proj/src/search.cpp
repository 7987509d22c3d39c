#include <certnn/errors.hpp>
#include <certnn/search.hpp>

#include <algorithm>
#include <future>
#include <mutex>

namespace certnn {

CounterSnapshot snapshot(const Counters & c)
{
    CounterSnapshot s;
    s.splits = c.splits;
    s.lp_calls = c.lp_calls;
    s.gate_invocations = c.gate_invocations;
    s.gate_refinements = c.gate_refinements;
    s.stabilized = c.stabilized;
    s.lemmas = c.lemmas;
    s.clauses = c.clauses;
    s.tgct_rows = c.tgct_rows;
    s.tgct_bound_violations = c.tgct_bound_violations;
    s.gate_bound_violations = c.gate_bound_violations;
    s.witness_elimination_failures = c.witness_elimination_failures;
    return s;
}

std::string to_string(VerifyResult::Verdict v)
{
    switch (v) {
    case VerifyResult::Verdict::Sat: return "SAT";
    case VerifyResult::Verdict::Unsat: return "UNSAT";
    case VerifyResult::Verdict::Unknown: return "UNKNOWN";
    }
    return "?";
}

Refinement choose_refinement(const Store & store, const Box & region, bool prefer_domain)
{
    Refinement r;
    if (! prefer_domain) {
        std::optional<Rational> best_gap;
        for (const auto & unit : store.unstable()) {
            const auto & pre = store.units().at(unit).pre;
            Rational gap = std::min(Rational(-pre.lower), pre.upper);
            if (! best_gap || gap > *best_gap) {
                best_gap = std::move(gap);
                r.unit = unit;
            }
        }
        if (best_gap) {
            r.kind = Refinement::Kind::Phase;
            return r;
        }
    }
    Rational widest = 0;
    for (std::size_t k = 0; k < region.dim(); ++k) {
        Rational w = region.upper[k] - region.lower[k];
        if (w > widest) {
            widest = w;
            r.dim = k;
        }
    }
    if (widest > 0) {
        r.kind = Refinement::Kind::Domain;
        r.midpoint = (region.lower[r.dim] + region.upper[r.dim]) / 2;
    }
    return r;
}

std::array<NodeDescriptor, 2> refine(const NodeDescriptor & node, const Refinement & r)
{
    switch (r.kind) {
    case Refinement::Kind::Phase: {
        if (node.phases.contains(r.unit))
            throw ValueError("unit " + to_string(r.unit) + " is already assigned");
        auto active = node.phases, inactive = node.phases;
        active[r.unit] = Phase::Active;
        inactive[r.unit] = Phase::Inactive;
        return {NodeDescriptor{node.region, active}, NodeDescriptor{node.region, inactive}};
    }
    case Refinement::Kind::Domain: {
        auto lower = node.region, upper = node.region;
        lower.upper[r.dim] = r.midpoint;
        upper.lower[r.dim] = r.midpoint;
        return {NodeDescriptor{lower, node.phases}, NodeDescriptor{upper, node.phases}};
    }
    case Refinement::Kind::Nothing: break;
    }
    throw ValueError("NothingToSplit: no unstable unit and the region has zero width");
}

Lemma merge_lemma(const ProofNode & split, const BoundProof & first, const BoundProof & second)
{
    if (first.form != second.form || first.form.empty())
        throw ValueError("MissingChildCertificate: children certify different forms");
    Lemma lemma;
    lemma.form = first.form;
    lemma.bound = std::max(first.bound, second.bound);
    lemma.region = split.region;
    lemma.phases = split.phases;
    auto proof = split;
    proof.children = {first.proof, second.proof};
    lemma.proof = std::make_shared<const ProofNode>(std::move(proof));
    return lemma;
}

namespace {

struct Outcome
{
    enum class Kind
    {
        Closed,
        Sat,
        Unknown
    };

    Kind kind = Kind::Unknown;
    ProofNode proof;
    std::optional<BoundProof> bound; // query-free margin bound on this subtree
    std::string reason;
};

ProofNode leaf(const Box & region, const PhaseAssignment & phases, ProofNode::Kind kind)
{
    ProofNode n;
    n.region = region;
    n.phases = phases;
    n.kind = kind;
    return n;
}

class Searcher
{
public:
    Searcher(const Problem & problem, const VerifyConfig & config) :
        _problem(problem), _layout(problem.net, problem.property), _config(config)
    {
        _engine.limits = config.lp_limits;
        _engine.lp_budget = config.lp_budget;
        _ids = std::make_shared<IdAllocator>();
        while (_parallel_depth < 16 && (std::size_t{1} << _parallel_depth) < config.workers)
            ++_parallel_depth;
    }

    VerifyResult run()
    {
        VerifyResult result;
        Outcome root;
        if (_config.lp_budget == 0)
            root = unknown("resource: LP budget exhausted");
        else
            root = solve({_problem.region, {}}, 0);

        const auto lemmas = _lemmas.snapshot();
        for (const auto & l : lemmas)
            result.learned.push_back(LemmaProof{l->form, l->bound, l->region, l->phases, *l->proof});

        std::lock_guard lock(_mutex);
        if (_witness) {
            result.verdict = VerifyResult::Verdict::Sat;
            result.witness = *_witness;
            result.trace = forward_eval(_problem.net, result.witness);
        }
        else if (root.kind == Outcome::Kind::Closed) {
            result.verdict = VerifyResult::Verdict::Unsat;
            result.log = assemble(root.proof, lemmas);
        }
        else {
            result.verdict = VerifyResult::Verdict::Unknown;
            result.reason = root.reason;
        }
        result.counters = snapshot(_engine.counters);
        return result;
    }

private:
    static Outcome unknown(std::string why)
    {
        Outcome o;
        o.kind = Outcome::Kind::Unknown;
        o.reason = std::move(why);
        return o;
    }

    Outcome closed(ProofNode proof, std::optional<BoundProof> bound)
    {
        Outcome o;
        o.kind = Outcome::Kind::Closed;
        o.proof = std::move(proof);
        o.bound = std::move(bound);
        return o;
    }

    Outcome sat(std::vector<Rational> x)
    {
        std::lock_guard lock(_mutex);
        if (! _witness)
            _witness = std::move(x);
        _stop = true;
        Outcome o;
        o.kind = Outcome::Kind::Sat;
        return o;
    }

    bool try_witness(const std::vector<Rational> & point)
    {
        if (point.size() < _layout.size())
            return false;
        std::vector<Rational> x(point.begin(), point.begin() + static_cast<std::ptrdiff_t>(_layout.input_dim()));
        return static_cast<bool>(validate_witness(_problem, x));
    }

    std::vector<Rational> inputs(const std::vector<Rational> & point) const
    {
        return {point.begin(), point.begin() + static_cast<std::ptrdiff_t>(_layout.input_dim())};
    }

    void learn_clause(const Store & store, const Multipliers & farkas, const SnapshotCertificate & snap)
    {
        auto guards = store.combined_deps(farkas).guards;
        if (guards.empty())
            return;
        auto stored = snap;
        stored.guards = guards;
        _clauses.add(ClauseEntry{ConflictClause{guards, _clauses.size()}, store.region(), std::move(stored)});
        ++_engine.counters.clauses;
    }

    /// margin <= beta over the rows that do not rely on the negated query.
    std::optional<BoundProof> query_free_bound(const Store & store)
    {
        if (! _config.merge && _config.strategy == Strategy::Icl)
            return std::nullopt;
        if (! _engine.take_lp())
            return std::nullopt;
        const auto sys = store.normalize([](const LinearConstraint & c) { return ! c.deps.query; });
        const auto & form = _layout.margin_form();
        auto r = lp_max(sys, form, _engine.limits);
        if (! r.optimal())
            return std::nullopt;
        auto node = leaf(store.region(), store.phases(), ProofNode::Kind::PruneBound);
        node.bound = r.value;
        node.certificates.push_back(store.snapshot(r.dual));
        return BoundProof{form, r.value, std::move(node)};
    }

    Outcome solve(const NodeDescriptor & node, std::size_t depth)
    {
        if (_stop)
            return unknown("stopped");
        if (_engine.exhausted())
            return unknown("resource: LP budget exhausted");

        const auto & region = node.region;
        const auto & phases = node.phases;
        if (auto hit = _clauses.find(region, guards_of(phases))) {
            auto n = leaf(region, phases, ProofNode::Kind::PruneInfeasible);
            auto cert = hit->certificate;
            cert.guards.clear();
            n.certificates.push_back(std::move(cert));
            return closed(std::move(n), std::nullopt);
        }

        if (depth == 0 && _config.force_root_domain_split)
            return split(node, depth, choose_refinement(Store(_problem, _layout, region, phases), region, true));

        const bool hsrv = _config.strategy == Strategy::Hsrv;
        StoreOptions options;
        options.include_query = ! hsrv;
        options.ids = _ids;
        Store store = build_initial_store(_problem, _layout, region, phases, _lemmas.snapshot(), options);

        PropagateOptions popts;
        popts.templates = _config.templates;
        popts.max_iterations = _config.propagate_iterations;
        auto prop = propagate_node(store, _lemmas, _engine, popts);
        if (prop.status == PropagationResult::Status::Limit)
            return unknown("resource: LP budget exhausted");
        if (prop.status == PropagationResult::Status::Prune) {
            auto n = leaf(region, phases, ProofNode::Kind::PruneInfeasible);
            auto snap = store.snapshot(prop.farkas->multipliers);
            learn_clause(store, prop.farkas->multipliers, snap);
            n.certificates.push_back(std::move(snap));
            return closed(std::move(n), hsrv ? std::nullopt : query_free_bound(store));
        }

        std::optional<BoundProof> bound;
        if (hsrv) {
            bound = query_free_bound(store);
            if (bound && bound->bound < _problem.property.violation_level())
                return closed(bound->proof, bound);
        }
        if (try_witness(prop.point))
            return sat(inputs(prop.point));

        if (auto gated = gate(store, prop.unstable, hsrv, bound))
            return *gated;
        return split(node, depth, choose_refinement(store, region));
    }

    Outcome split(const NodeDescriptor & node, std::size_t depth, const Refinement & r)
    {
        const auto & region = node.region;
        const auto & phases = node.phases;
        if (depth >= _config.max_depth)
            return unknown("depth: maximum depth reached");
        if (r.kind == Refinement::Kind::Nothing)
            return unknown("nothing to split");
        ++_engine.counters.splits;
        const auto children = refine(node, r);

        Outcome first, second;
        if (depth < _parallel_depth) {
            auto pending = std::async(std::launch::async, [&] { return solve(children[0], depth + 1); });
            second = solve(children[1], depth + 1);
            first = pending.get();
        }
        else {
            first = solve(children[0], depth + 1);
            second = solve(children[1], depth + 1);
        }
        if (first.kind == Outcome::Kind::Sat || second.kind == Outcome::Kind::Sat) {
            Outcome o;
            o.kind = Outcome::Kind::Sat;
            return o;
        }
        if (first.kind != Outcome::Kind::Closed)
            return first;
        if (second.kind != Outcome::Kind::Closed)
            return second;

        auto parent = leaf(region, phases,
            r.kind == Refinement::Kind::Phase ? ProofNode::Kind::PhaseSplit : ProofNode::Kind::DomainSplit);
        parent.split_unit = r.unit;
        parent.split_dim = r.dim;
        parent.midpoint = r.midpoint;

        std::optional<BoundProof> merged;
        if (_config.merge && first.bound && second.bound) {
            auto lemma = merge_lemma(parent, *first.bound, *second.bound);
            merged = BoundProof{lemma.form, lemma.bound, *lemma.proof};
            _lemmas.append(std::move(lemma));
            ++_engine.counters.lemmas;
        }
        parent.children = {std::move(first.proof), std::move(second.proof)};
        return closed(std::move(parent), std::move(merged));
    }

    std::optional<Outcome> gate(const Store & store, const std::set<UnitId> & unstable, bool hsrv,
        const std::optional<BoundProof> & bound)
    {
        const auto & region = store.region();
        const auto & phases = store.phases();
        if (! hsrv) {
            auto g = exactness_gate(store, &_clauses, _engine, _config.gate_budget);
            if (g.kind == GateOutcome::Kind::Sat)
                return sat(std::move(g.witness));
            if (g.kind == GateOutcome::Kind::Prune)
                return closed(cover_leaf(region, phases, std::move(g.cover)), query_free_bound(store));
            return std::nullopt;
        }

        ++_engine.counters.gate_invocations;
        Store exact = store;
        add_query_row(exact);
        auto r = exact_solve(exact, unstable, &_clauses, _engine, _config.gate_budget);
        if (r.status == ExactResult::Status::Sat && try_witness(r.model))
            return sat(inputs(r.model));
        if (r.status == ExactResult::Status::Unsat) {
            _engine.counters.clauses += r.learned.size();
            return closed(cover_leaf(region, phases, std::move(r.cover)), bound);
        }
        return std::nullopt;
    }

    static ProofNode cover_leaf(const Box & region, const PhaseAssignment & phases, std::vector<SnapshotCertificate> cover)
    {
        const bool single = cover.size() == 1 && cover[0].guards.empty();
        auto n = leaf(region, phases, single ? ProofNode::Kind::PruneInfeasible : ProofNode::Kind::PruneCover);
        n.certificates = std::move(cover);
        return n;
    }

    /// Keeps only the lemmas the proof relies on, renumbered in learning order.
    ProofLog assemble(const ProofNode & root, const std::vector<std::shared_ptr<const Lemma>> & lemmas) const
    {
        std::set<std::size_t> used;
        std::vector<const ProofNode *> todo{&root};
        while (! todo.empty()) {
            const auto * n = todo.back();
            todo.pop_back();
            for (const auto & c : n->certificates)
                for (const auto & e : c.rows)
                    if (e.by == Justification::Lemma && used.insert(e.lemma).second)
                        todo.push_back(lemmas.at(e.lemma)->proof.get());
            for (const auto & c : n->children)
                todo.push_back(&c);
        }
        std::map<std::size_t, std::size_t> renumber;
        for (auto i : used)
            renumber.emplace(i, renumber.size());

        auto rewrite = [&](ProofNode n) {
            std::vector<ProofNode *> stack{&n};
            while (! stack.empty()) {
                auto * cur = stack.back();
                stack.pop_back();
                for (auto & c : cur->certificates)
                    for (auto & e : c.rows)
                        if (e.by == Justification::Lemma)
                            e.lemma = renumber.at(e.lemma);
                for (auto & c : cur->children)
                    stack.push_back(&c);
            }
            return n;
        };

        ProofLog log;
        log.problem_digest = problem_digest(_problem);
        for (auto i : used) {
            const auto & l = *lemmas[i];
            log.lemmas.push_back(LemmaProof{l.form, l.bound, l.region, l.phases, rewrite(*l.proof)});
        }
        log.root = rewrite(root);
        return log;
    }

    const Problem & _problem;
    VariableLayout _layout;
    VerifyConfig _config;
    Engine _engine;
    LemmaStore _lemmas;
    ClauseDB _clauses;
    std::shared_ptr<IdAllocator> _ids;
    std::size_t _parallel_depth = 0;
    std::atomic<bool> _stop{false};
    std::mutex _mutex;
    std::optional<std::vector<Rational>> _witness;
};

} // namespace

VerifyResult icl_verify(const Problem & problem, const VerifyConfig & config)
{
    auto c = config;
    c.strategy = Strategy::Icl;
    return Searcher(problem, c).run();
}

VerifyResult hsrv_verify(const Problem & problem, const VerifyConfig & config)
{
    auto c = config;
    c.strategy = Strategy::Hsrv;
    return Searcher(problem, c).run();
}

VerifyResult verify(const Problem & problem, const VerifyConfig & config)
{
    return config.strategy == Strategy::Hsrv ? hsrv_verify(problem, config) : icl_verify(problem, config);
}

OracleResult oracle_verify(const Problem & problem, std::size_t cap)
{
    const VariableLayout layout(problem.net, problem.property);
    const auto root = build_initial_store(problem, layout, problem.region, {}, {});
    const auto unstable = root.unstable();
    if (unstable.size() > cap)
        throw CapExceeded(std::to_string(unstable.size()) + " unstable units exceed the oracle cap of "
            + std::to_string(cap));
    const std::vector<UnitId> units(unstable.begin(), unstable.end());

    OracleResult out;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << units.size()); ++mask) {
        PhaseAssignment alpha;
        for (std::size_t b = 0; b < units.size(); ++b)
            alpha[units[b]] = (mask >> b) & 1 ? Phase::Inactive : Phase::Active;
        ++out.assignments;
        const auto store = build_initial_store(problem, layout, problem.region, alpha, {});
        ++out.lp_calls;
        const auto r = lp_feasible(store.normalize());
        if (! r.optimal())
            continue;
        std::vector<Rational> x(r.primal.begin(), r.primal.begin() + static_cast<std::ptrdiff_t>(layout.input_dim()));
        if (validate_witness(problem, x)) {
            out.sat = true;
            out.witness = std::move(x);
            return out;
        }
    }
    return out;
}

} // namespace certnn
