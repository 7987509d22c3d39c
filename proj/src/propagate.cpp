#include <certnn/propagate.hpp>

#include <stdexcept>

namespace certnn {

TemplateSet default_templates(const Store & store, TemplateMode mode)
{
    TemplateSet out;
    if (mode == TemplateMode::Default)
        for (const auto & unit : store.unstable()) {
            Template t;
            t.g = {{store.layout().pre(unit), Rational(1)}};
            t.kind = Template::Kind::NeuronBound;
            t.unit = unit;
            out.push_back(std::move(t));
        }
    Template margin;
    margin.g = store.layout().margin_form();
    margin.kind = Template::Kind::OutputMargin;
    margin.label = "margin";
    out.push_back(std::move(margin));
    return out;
}

namespace {

std::string template_label(const Template & t)
{
    switch (t.kind) {
    case Template::Kind::NeuronBound: return "s" + to_string(t.unit);
    case Template::Kind::OutputMargin: return "margin";
    case Template::Kind::Coupled: return t.label;
    }
    return "?";
}

void require(const CheckResult & r, const char * what)
{
    if (! r)
        throw std::logic_error(std::string(what) + " failed self-check: " + r.reason);
}

} // namespace

TgctResult tgct(Store & store, const TemplateSet & templates, Engine & engine)
{
    TgctResult out;
    const auto sys = store.normalize();
    for (const auto & t : templates) {
        for (const bool upper : {true, false}) {
            if (! engine.take_lp()) {
                out.limit = true;
                return out;
            }
            const auto r = upper ? lp_max(sys, t.g, engine.limits) : lp_min(sys, t.g, engine.limits);
            if (r.status == LpOutcome::Status::ResourceLimit) {
                out.limit = true;
                return out;
            }
            if (r.status == LpOutcome::Status::Infeasible) {
                FarkasCertificate farkas{r.dual};
                require(check_farkas(sys, farkas), "farkas certificate");
                out.farkas = std::move(farkas);
                return out;
            }
            if (r.status == LpOutcome::Status::Unbounded)
                continue;

            const std::string key = (upper ? "max " : "min ") + format_expr(t.g);
            std::optional<Rational> current;
            if (t.kind == Template::Kind::NeuronBound) {
                const auto & pre = store.units().at(t.unit).pre;
                current = upper ? pre.upper : pre.lower;
            }
            else if (auto it = store.template_bounds().find(key); it != store.template_bounds().end())
                current = it->second;
            if (current && (upper ? r.value >= *current : r.value <= *current))
                continue;

            DualBoundCertificate cert{upper ? t.g : negated(t.g), upper ? r.value : Rational(-r.value), r.dual};
            require(check_dual(sys, cert), "dual certificate");

            Derivation d;
            d.by = Justification::Dual;
            d.multipliers = r.dual;
            auto deps = store.combined_deps(r.dual);
            const auto id = store.add(cert.objective, Relation::LessEq, cert.bound, Block::Rel,
                "tgct(" + template_label(t) + ")", std::move(d), std::move(deps));
            store.template_bounds()[key] = r.value;
            if (t.kind == Template::Kind::NeuronBound) {
                auto & pre = store.units().at(t.unit).pre;
                if (upper) {
                    pre.upper = r.value;
                    pre.upper_ref = row_key(id, false);
                }
                else {
                    pre.lower = r.value;
                    pre.lower_ref = row_key(id, false);
                }
            }
            ++out.rows_added;
            out.certificates.push_back(std::move(cert));
        }
    }
    engine.counters.tgct_rows += out.rows_added;
    if (out.rows_added > 2 * templates.size())
        ++engine.counters.tgct_bound_violations;
    return out;
}

std::vector<StabilityCertificate> stabilize(Store & store)
{
    std::vector<StabilityCertificate> out;
    std::vector<std::pair<UnitId, Phase>> todo;
    for (const auto & [unit, state] : store.units()) {
        if (state.fixed)
            continue;
        if (state.pre.lower >= 0)
            todo.emplace_back(unit, Phase::Active);
        else if (state.pre.upper <= 0)
            todo.emplace_back(unit, Phase::Inactive);
    }
    for (const auto & [unit, phase] : todo) {
        const auto & pre = store.units().at(unit).pre;
        const auto ref = phase == Phase::Active ? pre.lower_ref : pre.upper_ref;
        out.push_back(stabilize_unit(store, unit, phase, ref));
    }
    return out;
}

std::size_t refresh_hulls(Store & store)
{
    std::size_t n = 0;
    for (const auto & unit : store.unstable()) {
        const auto & state = store.units().at(unit);
        if (state.hull_rows.size() == 4 && state.hull_lower == state.pre.lower && state.hull_upper == state.pre.upper)
            continue;
        hull_insert(store, unit);
        ++n;
    }
    return n;
}

namespace {

struct Fingerprint
{
    std::vector<std::pair<Rational, Rational>> bounds;
    std::set<UnitId> unstable;
    std::size_t lemmas = 0;

    bool operator==(const Fingerprint &) const = default;
};

Fingerprint fingerprint(const Store & store)
{
    Fingerprint f;
    for (const auto & [unit, state] : store.units())
        f.bounds.emplace_back(state.pre.lower, state.pre.upper);
    f.unstable = store.unstable();
    f.lemmas = store.injected_lemmas().size();
    return f;
}

} // namespace

PropagationResult propagate_node(Store & store, const LemmaStore & lemmas, Engine & engine,
    const PropagateOptions & options)
{
    PropagationResult res;
    for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
        res.iterations = iter;
        const auto before = fingerprint(store);

        refresh_hulls(store);
        auto t = tgct(store, default_templates(store, options.templates), engine);
        for (auto & c : t.certificates)
            res.dual_certificates.push_back(std::move(c));
        if (t.farkas) {
            res.status = PropagationResult::Status::Prune;
            res.farkas = std::move(t.farkas);
            return res;
        }
        if (t.limit) {
            res.status = PropagationResult::Status::Limit;
            return res;
        }

        auto stable = stabilize(store);
        engine.counters.stabilized += stable.size();
        for (auto & c : stable)
            res.stability_certificates.push_back(std::move(c));
        refresh_hulls(store);
        inject_lemmas(store, lemmas.snapshot());

        if (! engine.take_lp()) {
            res.status = PropagationResult::Status::Limit;
            return res;
        }
        const auto sys = store.normalize();
        auto feas = lp_feasible(sys, engine.limits);
        if (feas.status == LpOutcome::Status::ResourceLimit) {
            res.status = PropagationResult::Status::Limit;
            return res;
        }
        if (feas.infeasible()) {
            FarkasCertificate farkas{feas.dual};
            require(check_farkas(sys, farkas), "farkas certificate");
            res.status = PropagationResult::Status::Prune;
            res.farkas = std::move(farkas);
            return res;
        }
        res.point = std::move(feas.primal);

        if (fingerprint(store) == before)
            break;
    }
    res.status = PropagationResult::Status::Open;
    res.unstable = store.unstable();
    return res;
}

} // namespace certnn
