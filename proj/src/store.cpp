#include <certnn/errors.hpp>
#include <certnn/store.hpp>

#include <algorithm>

namespace certnn {

std::string to_string(Block b)
{
    switch (b) {
    case Block::Aff: return "aff";
    case Block::Domain: return "domain";
    case Block::NegP: return "negp";
    case Block::Rel: return "rel";
    case Block::Learn: return "learn";
    case Block::GuardConseq: return "guard";
    }
    return "?";
}

void Dependencies::merge(const Dependencies & other)
{
    guards.insert(other.guards.begin(), other.guards.end());
    query = query || other.query;
}

bool Lemma::applies_to(const Box & node_region, const PhaseAssignment & node_phases) const
{
    if (! region.contains(node_region))
        return false;
    for (const auto & [unit, phase] : phases) {
        auto it = node_phases.find(unit);
        if (it == node_phases.end() || it->second != phase)
            return false;
    }
    return true;
}

std::size_t LemmaStore::append(Lemma lemma)
{
    std::lock_guard lock(_mutex);
    _lemmas.push_back(std::make_shared<const Lemma>(std::move(lemma)));
    return _lemmas.size() - 1;
}

std::size_t LemmaStore::size() const
{
    std::lock_guard lock(_mutex);
    return _lemmas.size();
}

std::vector<std::shared_ptr<const Lemma>> LemmaStore::snapshot() const
{
    std::lock_guard lock(_mutex);
    return _lemmas;
}

namespace {

std::string signature(const LinearExpr & row, Relation rel, const Rational & rhs)
{
    return format_expr(row) + (rel == Relation::Eq ? " = " : " <= ") + format_rational(rhs);
}

} // namespace

Store::Store(const Problem & problem, const VariableLayout & layout, Box region, PhaseAssignment phases,
    std::shared_ptr<IdAllocator> ids) :
    _problem(&problem),
    _layout(&layout),
    _region(std::move(region)),
    _phases(std::move(phases)),
    _ids(ids ? std::move(ids) : std::make_shared<IdAllocator>())
{
}

std::uint64_t Store::add(LinearExpr row, Relation rel, Rational rhs, Block block, std::string origin,
    Derivation derivation, Dependencies deps)
{
    if (row.empty())
        throw ValueError("constraint row must be nonempty");
    for (const auto & [var, c] : row)
        if (var >= _layout->size())
            throw ValueError("constraint references unknown variable " + std::to_string(var));

    auto sig = signature(row, rel, rhs);
    if (auto it = _active_signature.find(sig); it != _active_signature.end())
        return it->second;

    LinearConstraint c;
    c.id = _ids->next();
    c.row = std::move(row);
    c.relation = rel;
    c.rhs = std::move(rhs);
    c.block = block;
    c.origin = std::move(origin);
    c.derivation = std::move(derivation);
    c.deps = std::move(deps);
    _by_id[c.id] = _constraints.size();
    _active_signature.emplace(std::move(sig), c.id);
    _constraints.push_back(std::move(c));
    return _constraints.back().id;
}

void Store::retire(std::uint64_t id)
{
    auto & c = _constraints[_by_id.at(id)];
    if (! c.active)
        return;
    c.active = false;
    _active_signature.erase(signature(c.row, c.relation, c.rhs));
}

const LinearConstraint & Store::constraint(std::uint64_t id) const
{
    auto it = _by_id.find(id);
    if (it == _by_id.end())
        throw UnknownRow("constraint id " + std::to_string(id) + " is not in the store");
    return _constraints[it->second];
}

std::size_t Store::active_count() const
{
    return static_cast<std::size_t>(
        std::count_if(_constraints.begin(), _constraints.end(), [](const auto & c) { return c.active; }));
}

NormalizedRow Store::normalized(RowKey key) const
{
    const auto & c = constraint(key / 2);
    if (key % 2 == 1) {
        if (c.relation != Relation::Eq)
            throw UnknownRow("row key " + std::to_string(key) + " mirrors an inequality");
        return {negated(c.row), -c.rhs, key};
    }
    return {c.row, c.rhs, key};
}

Dependencies Store::combined_deps(const Multipliers & lambda) const
{
    Dependencies out;
    for (const auto & [key, value] : lambda)
        if (value != 0)
            out.merge(deps(key));
    return out;
}

NormalizedSystem Store::normalize(const RowFilter & filter) const
{
    NormalizedSystem sys(_layout->size());
    for (const auto & c : _constraints) {
        if (! c.active || (filter && ! filter(c)))
            continue;
        sys.add_row({c.row, c.rhs, row_key(c.id, false)});
        if (c.relation == Relation::Eq)
            sys.add_row({negated(c.row), -c.rhs, row_key(c.id, true)});
    }
    return sys;
}

std::set<UnitId> Store::unstable() const
{
    std::set<UnitId> out;
    for (const auto & [unit, state] : _units)
        if (! state.fixed && state.pre.lower < 0 && state.pre.upper > 0)
            out.insert(unit);
    return out;
}

Chain Store::extract_chain(const Multipliers & cited, std::map<RowKey, std::size_t> & position) const
{
    std::set<RowKey> needed;
    std::vector<RowKey> stack;
    for (const auto & [key, value] : cited)
        if (value != 0)
            stack.push_back(key);
    while (! stack.empty()) {
        const RowKey key = stack.back();
        stack.pop_back();
        if (! needed.insert(key).second)
            continue;
        const auto & d = constraint(key / 2).derivation;
        switch (d.by) {
        case Justification::Dual:
            for (const auto & [k, v] : d.multipliers)
                if (v != 0)
                    stack.push_back(k);
            break;
        case Justification::Hull:
            if (d.uses_bounds) {
                stack.push_back(d.upper_ref);
                stack.push_back(d.lower_ref);
            }
            break;
        case Justification::Stable:
            stack.push_back(d.upper_ref);
            break;
        default:
            break;
        }
    }

    Chain chain;
    position.clear();
    for (RowKey key : needed) {
        const auto & c = constraint(key / 2);
        const auto & d = c.derivation;
        auto row = normalized(key);
        ChainEntry e;
        e.row = std::move(row.coeffs);
        e.rhs = std::move(row.rhs);
        e.by = d.by;
        switch (d.by) {
        case Justification::Dual:
            for (const auto & [k, v] : d.multipliers)
                if (v != 0)
                    e.multipliers.emplace_back(position.at(k), v);
            std::sort(e.multipliers.begin(), e.multipliers.end());
            break;
        case Justification::Hull:
            e.unit = d.unit;
            e.uses_bounds = d.uses_bounds;
            if (d.uses_bounds) {
                e.lower = d.lower;
                e.upper = d.upper;
                e.upper_ref = position.at(d.upper_ref);
                e.lower_ref = position.at(d.lower_ref);
            }
            break;
        case Justification::Stable:
            e.unit = d.unit;
            e.phase = d.phase;
            e.upper_ref = position.at(d.upper_ref);
            break;
        case Justification::Lemma:
            e.lemma = d.lemma;
            break;
        case Justification::Base:
            break;
        }
        position[key] = chain.size();
        chain.push_back(std::move(e));
    }
    return chain;
}

SnapshotCertificate Store::snapshot(const Multipliers & cited, GuardSet guards) const
{
    SnapshotCertificate cert;
    std::map<RowKey, std::size_t> position;
    cert.rows = extract_chain(cited, position);
    for (const auto & [key, value] : cited)
        if (value != 0)
            cert.lambda.emplace_back(position.at(key), value);
    std::sort(cert.lambda.begin(), cert.lambda.end());
    cert.value = 0;
    for (const auto & [index, value] : cert.lambda)
        cert.value += value * cert.rows[index].rhs;
    cert.guards = std::move(guards);
    return cert;
}

std::vector<GuardRow> guard_consequences(const VariableLayout & layout, GuardLiteral lit)
{
    const auto s = layout.pre(lit.unit);
    const auto z = layout.post(lit.unit);
    if (lit.phase == Phase::Active)
        return {
            {LinearExpr{{s, Rational(-1)}, {z, Rational(1)}}, Relation::Eq, 0},
            {LinearExpr{{s, Rational(-1)}}, Relation::LessEq, 0},
        };
    return {
        {LinearExpr{{z, Rational(1)}}, Relation::Eq, 0},
        {LinearExpr{{s, Rational(1)}}, Relation::LessEq, 0},
    };
}

namespace {

std::string guard_origin(GuardLiteral lit)
{
    return "guard(" + to_string(lit.unit) + ":" + to_string(lit.phase) + ")";
}

} // namespace

std::vector<std::uint64_t> add_guard(Store & store, GuardLiteral lit)
{
    if (! store.layout().is_relu_unit(lit.unit))
        throw UnknownUnit("no ReLU unit " + to_string(lit.unit));
    std::vector<std::uint64_t> ids;
    Dependencies deps;
    deps.guards.insert(lit);
    for (auto & g : guard_consequences(store.layout(), lit))
        ids.push_back(store.add(std::move(g.row), g.relation, std::move(g.rhs), Block::GuardConseq,
            guard_origin(lit), Derivation{}, deps));
    return ids;
}

std::uint64_t add_query_row(Store & store)
{
    Dependencies deps;
    deps.query = true;
    return store.add({{store.layout().margin_var(), Rational(-1)}}, Relation::LessEq,
        -store.problem().property.violation_level(), Block::NegP, "base", {}, deps);
}

std::vector<std::uint64_t> hull_insert(Store & store, UnitId unit)
{
    auto & state = store.units().at(unit);
    const Rational l = state.pre.lower;
    const Rational u = state.pre.upper;
    if (state.fixed || ! (l < 0 && u > 0))
        throw ValueError("NotUnstable: unit " + to_string(unit) + " does not straddle zero");

    const auto & layout = store.layout();
    const auto s = layout.pre(unit);
    const auto z = layout.post(unit);
    const std::string origin = "hull" + to_string(unit);

    if (state.hull_rows.size() == 4) {
        if (state.hull_lower == l && state.hull_upper == u)
            return state.hull_rows;
        store.retire(state.hull_rows[2]);
        store.retire(state.hull_rows[3]);
    }

    Derivation plain;
    plain.by = Justification::Hull;
    plain.unit = unit;
    Derivation bounded = plain;
    bounded.uses_bounds = true;
    bounded.lower = l;
    bounded.upper = u;
    bounded.lower_ref = state.pre.lower_ref;
    bounded.upper_ref = state.pre.upper_ref;
    Dependencies bound_deps = store.deps(state.pre.lower_ref);
    bound_deps.merge(store.deps(state.pre.upper_ref));

    const Rational slope = u / (u - l);
    std::vector<std::uint64_t> ids;
    ids.push_back(store.add({{z, Rational(-1)}}, Relation::LessEq, 0, Block::Rel, origin, plain, {}));
    ids.push_back(store.add({{s, Rational(1)}, {z, Rational(-1)}}, Relation::LessEq, 0, Block::Rel, origin, plain, {}));
    ids.push_back(store.add({{s, -slope}, {z, Rational(1)}}, Relation::LessEq, -slope * l, Block::Rel, origin,
        bounded, bound_deps));
    ids.push_back(store.add({{z, Rational(1)}}, Relation::LessEq, u, Block::Rel, origin, bounded, bound_deps));

    state.hull_rows = ids;
    state.hull_lower = l;
    state.hull_upper = u;
    return ids;
}

StabilityCertificate stabilize_unit(Store & store, UnitId unit, Phase phase, RowKey sign_ref)
{
    auto & state = store.units().at(unit);
    const auto & layout = store.layout();
    const auto s = layout.pre(unit);

    const auto sign_row = store.normalized(sign_ref);
    const LinearExpr expected = phase == Phase::Active ? LinearExpr{{s, Rational(-1)}} : LinearExpr{{s, Rational(1)}};
    if (sign_row.coeffs != expected || sign_row.rhs > 0)
        throw ValueError("stability row does not establish the sign of " + to_string(unit));

    for (auto id : state.hull_rows)
        store.retire(id);
    state.hull_rows.clear();

    Derivation d;
    d.by = Justification::Stable;
    d.unit = unit;
    d.phase = phase;
    d.upper_ref = sign_ref;
    const auto deps = store.deps(sign_ref);
    const auto origin = "stability" + to_string(unit);
    for (auto & g : guard_consequences(layout, GuardLiteral{unit, phase}))
        store.add(std::move(g.row), g.relation, std::move(g.rhs), Block::Rel, origin, d, deps);

    state.fixed = phase;
    state.fixed_by_guard = false;

    StabilityCertificate cert;
    cert.unit = unit;
    cert.phase = phase;
    cert.inner.objective = expected;
    cert.inner.bound = 0;
    cert.inner.multipliers = {{sign_ref, Rational(1)}};
    return cert;
}

namespace {

struct VarBounds
{
    Rational lower, upper;
    RowKey lower_ref = 0, upper_ref = 0; // "-v <= -lower", "v <= upper"
};

std::uint64_t add_dual_row(Store & store, LinearExpr row, Rational rhs, Multipliers lambda, std::string origin)
{
    Derivation d;
    d.by = Justification::Dual;
    auto deps = store.combined_deps(lambda);
    d.multipliers = std::move(lambda);
    return store.add(std::move(row), Relation::LessEq, std::move(rhs), Block::Rel, std::move(origin), std::move(d),
        std::move(deps));
}

/// Bounds on z for a unit whose phase is fixed to active, given z - s = 0 as
/// constraint `eq_id` and the pre-activation interval.
VarBounds active_post_bounds(Store & store, UnitId unit, std::uint64_t eq_id, const Interval & pre)
{
    const auto z = store.layout().post(unit);
    VarBounds out;
    out.upper = pre.upper;
    out.upper_ref = row_key(add_dual_row(store, {{z, Rational(1)}}, pre.upper,
                                {{row_key(eq_id, false), Rational(1)}, {pre.upper_ref, Rational(1)}},
                                "bound" + to_string(unit)),
        false);
    out.lower = pre.lower;
    out.lower_ref = row_key(add_dual_row(store, {{z, Rational(-1)}}, -pre.lower,
                                {{row_key(eq_id, true), Rational(1)}, {pre.lower_ref, Rational(1)}},
                                "bound" + to_string(unit)),
        false);
    return out;
}

} // namespace

std::size_t inject_lemmas(Store & store, const std::vector<std::shared_ptr<const Lemma>> & lemmas)
{
    std::size_t added = 0;
    for (std::size_t i = 0; i < lemmas.size(); ++i) {
        if (store.injected_lemmas().contains(i) || ! lemmas[i]->applies_to(store.region(), store.phases()))
            continue;
        Derivation d;
        d.by = Justification::Lemma;
        d.lemma = i;
        Dependencies deps;
        deps.guards = guards_of(lemmas[i]->phases);
        store.add(lemmas[i]->form, Relation::LessEq, lemmas[i]->bound, Block::Learn, "lemma(" + std::to_string(i) + ")",
            d, deps);
        store.injected_lemmas().insert(i);
        ++added;
    }
    return added;
}

Store build_initial_store(const Problem & problem, const VariableLayout & layout, const Box & region,
    const PhaseAssignment & phases, const std::vector<std::shared_ptr<const Lemma>> & lemmas,
    const StoreOptions & options)
{
    Store store(problem, layout, region, phases, options.ids);
    const auto & net = problem.net;

    // Affine layer equations s - W z_prev = b.
    std::vector<std::vector<std::uint64_t>> affine(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto & layer = net.layers[i];
        for (std::size_t j = 0; j < layer.out_dim(); ++j) {
            LinearExpr row{{layout.pre(i, j), Rational(1)}};
            for (std::size_t k = 0; k < layer.in_dim(); ++k)
                if (layer.weights[j][k] != 0) {
                    const auto prev = i == 0 ? layout.input(k) : layout.post(i - 1, k);
                    add_scaled(row, LinearExpr{{prev, Rational(1)}}, -layer.weights[j][k]);
                }
            affine[i].push_back(store.add(std::move(row), Relation::Eq, layer.bias[j], Block::Aff, "base", {}, {}));
        }
    }
    if (layout.has_margin_aux()) {
        LinearExpr row{{layout.margin_var(), Rational(1)}};
        for (const auto & [j, c] : problem.property.margin)
            add_scaled(row, LinearExpr{{layout.output(j), Rational(1)}}, -c);
        store.add(std::move(row), Relation::Eq, 0, Block::Aff, "base", {}, {});
    }

    std::vector<VarBounds> prev(region.dim());
    for (std::size_t k = 0; k < region.dim(); ++k) {
        const auto x = layout.input(k);
        prev[k].upper = region.upper[k];
        prev[k].upper_ref = row_key(store.add({{x, Rational(1)}}, Relation::LessEq, region.upper[k], Block::Domain,
                                        "base", {}, {}),
            false);
        prev[k].lower = region.lower[k];
        prev[k].lower_ref = row_key(store.add({{x, Rational(-1)}}, Relation::LessEq, -region.lower[k],
                                        Block::Domain, "base", {}, {}),
            false);
    }

    if (options.include_query)
        add_query_row(store);

    std::map<UnitId, std::vector<std::uint64_t>> guard_ids;
    for (const auto & [unit, phase] : phases)
        guard_ids[unit] = add_guard(store, GuardLiteral{unit, phase});

    inject_lemmas(store, lemmas);

    // Certified interval arithmetic, layer by layer.
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto & layer = net.layers[i];
        if (layer.activation != Activation::Relu)
            break;
        std::vector<VarBounds> next(layer.out_dim());
        for (std::size_t j = 0; j < layer.out_dim(); ++j) {
            const UnitId unit{static_cast<int>(i), static_cast<int>(j)};
            const auto s = layout.pre(i, j);
            Rational upper = layer.bias[j], lower = layer.bias[j];
            Multipliers up{{row_key(affine[i][j], false), Rational(1)}};
            Multipliers lo{{row_key(affine[i][j], true), Rational(1)}};
            for (std::size_t k = 0; k < layer.in_dim(); ++k) {
                const auto & w = layer.weights[j][k];
                if (w > 0) {
                    upper += w * prev[k].upper;
                    lower += w * prev[k].lower;
                    up.emplace_back(prev[k].upper_ref, w);
                    lo.emplace_back(prev[k].lower_ref, w);
                }
                else if (w < 0) {
                    upper += w * prev[k].lower;
                    lower += w * prev[k].upper;
                    up.emplace_back(prev[k].lower_ref, -w);
                    lo.emplace_back(prev[k].upper_ref, -w);
                }
            }
            const auto origin = "bound" + to_string(unit);
            UnitState state;
            state.pre.upper = upper;
            state.pre.upper_ref = row_key(add_dual_row(store, {{s, Rational(1)}}, upper, up, origin), false);
            state.pre.lower = lower;
            state.pre.lower_ref = row_key(add_dual_row(store, {{s, Rational(-1)}}, -lower, lo, origin), false);
            store.units()[unit] = state;
            auto & st = store.units()[unit];

            if (auto it = phases.find(unit); it != phases.end()) {
                const auto & ids = guard_ids.at(unit);
                st.fixed = it->second;
                st.fixed_by_guard = true;
                if (it->second == Phase::Active) {
                    if (st.pre.lower < 0) {
                        st.pre.lower = 0;
                        st.pre.lower_ref = row_key(ids[1], false);
                    }
                    next[j] = active_post_bounds(store, unit, ids[0], st.pre);
                }
                else {
                    if (st.pre.upper > 0) {
                        st.pre.upper = 0;
                        st.pre.upper_ref = row_key(ids[1], false);
                    }
                    next[j] = {0, 0, row_key(ids[0], true), row_key(ids[0], false)};
                }
            }
            else if (st.pre.lower >= 0) {
                stabilize_unit(store, unit, Phase::Active, st.pre.lower_ref);
                const auto eq = store.add(guard_consequences(layout, {unit, Phase::Active})[0].row, Relation::Eq, 0,
                    Block::Rel, "stability" + to_string(unit), {}, {});
                next[j] = active_post_bounds(store, unit, eq, st.pre);
            }
            else if (st.pre.upper <= 0) {
                stabilize_unit(store, unit, Phase::Inactive, st.pre.upper_ref);
                const auto eq = store.add(guard_consequences(layout, {unit, Phase::Inactive})[0].row, Relation::Eq,
                    0, Block::Rel, "stability" + to_string(unit), {}, {});
                next[j] = {0, 0, row_key(eq, true), row_key(eq, false)};
            }
            else {
                const auto ids = hull_insert(store, unit);
                next[j] = {0, upper, row_key(ids[0], false), row_key(ids[3], false)};
            }
        }
        prev = std::move(next);
    }
    return store;
}

CheckResult check_guarded(const Store & store, const GuardedCertificate & cert)
{
    Store work = store;
    for (const auto & lit : cert.guards)
        add_guard(work, lit);
    auto allowed = guards_of(store.phases());
    allowed.insert(cert.guards.begin(), cert.guards.end());
    const auto sys = work.normalize([&](const LinearConstraint & c) {
        return std::includes(allowed.begin(), allowed.end(), c.deps.guards.begin(), c.deps.guards.end());
    });
    return check_guarded(sys, cert);
}

} // namespace certnn
