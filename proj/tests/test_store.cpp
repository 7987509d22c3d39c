#include "support.hpp"

#include <certnn/errors.hpp>
#include <certnn/lp.hpp>

#include <doctest.h>

using namespace certnn;
using namespace certnn::testing;

namespace {

struct Worked
{
    Problem problem = parse_problem(data_path("worked.json"));
    VariableLayout layout{problem.net, problem.property};

    Store root(const PhaseAssignment & alpha = {}, bool query = true) const
    {
        StoreOptions o;
        o.include_query = query;
        return build_initial_store(problem, layout, problem.region, alpha, {}, o);
    }
};

const LinearConstraint * find_row(const Store & s, const LinearExpr & row, Relation rel, const Rational & rhs)
{
    for (const auto & c : s.constraints())
        if (c.active && c.row == row && c.relation == rel && c.rhs == rhs)
            return &c;
    return nullptr;
}

bool satisfies_constraints(const Store & s, std::span<const Rational> v)
{
    for (const auto & c : s.constraints()) {
        if (! c.active)
            continue;
        const auto lhs = evaluate(c.row, v);
        if (c.relation == Relation::Eq ? lhs != c.rhs : lhs > c.rhs)
            return false;
    }
    return true;
}

/// Phases of a trace on a random subset of the units.
PhaseAssignment phases_from(std::mt19937 & rng, const VariableLayout & layout, const Trace & t)
{
    PhaseAssignment alpha;
    for (const auto & u : layout.relu_units())
        if (rng() % 2)
            alpha[u] = t.pre[u.layer][u.neuron] >= 0 ? Phase::Active : Phase::Inactive;
    return alpha;
}

} // namespace

TEST_SUITE("store")
{
    TEST_CASE("the worked root store carries every block and the interval bounds")
    {
        Worked w;
        const auto s = w.root();
        const auto x = w.layout.input(0), s1 = w.layout.pre(0, 0), s2 = w.layout.pre(0, 1), z1 = w.layout.post(0, 0),
                   z2 = w.layout.post(0, 1), y = w.layout.output(0);
        CHECK(find_row(s, {{x, q(-2)}, {s1, q(1)}}, Relation::Eq, q(-1)));
        CHECK(find_row(s, {{x, q(1)}, {s2, q(1)}}, Relation::Eq, q(1, 2)));
        CHECK(find_row(s, {{z1, q(-1)}, {z2, q(1)}, {y, q(1)}}, Relation::Eq, q(0)));
        CHECK(find_row(s, {{x, q(1)}}, Relation::LessEq, q(1)));
        CHECK(find_row(s, {{x, q(-1)}}, Relation::LessEq, q(0)));
        const auto * query = find_row(s, {{y, q(-1)}}, Relation::LessEq, q(-11, 10));
        REQUIRE(query);
        CHECK(query->block == Block::NegP);
        CHECK(query->deps.query);

        const auto & u1 = s.units().at({0, 0}).pre;
        const auto & u2 = s.units().at({0, 1}).pre;
        CHECK(u1.lower == -1);
        CHECK(u1.upper == 1);
        CHECK(u2.lower == q(-1, 2));
        CHECK(u2.upper == q(1, 2));
        CHECK(s.unstable() == std::set<UnitId>{{0, 0}, {0, 1}});
        for (const auto & c : s.constraints())
            CHECK(c.block != Block::Learn);
    }

    TEST_CASE("a phase assignment adds its guard consequences")
    {
        Worked w;
        const auto s = w.root({{{0, 0}, Phase::Inactive}});
        const auto s1 = w.layout.pre(0, 0), z1 = w.layout.post(0, 0);
        const auto * zero = find_row(s, {{z1, q(1)}}, Relation::Eq, q(0));
        const auto * sign = find_row(s, {{s1, q(1)}}, Relation::LessEq, q(0));
        REQUIRE(zero);
        REQUIRE(sign);
        CHECK(zero->block == Block::GuardConseq);
        CHECK(sign->deps.guards == GuardSet{{{0, 0}, Phase::Inactive}});
        CHECK(s.unstable() == std::set<UnitId>{{0, 1}});
    }

    TEST_CASE("guard consequences of each phase")
    {
        Worked w;
        const auto s1 = w.layout.pre(0, 0), z1 = w.layout.post(0, 0);
        const auto act = guard_consequences(w.layout, {{0, 0}, Phase::Active});
        REQUIRE(act.size() == 2);
        CHECK(act[0].row == LinearExpr{{s1, q(-1)}, {z1, q(1)}});
        CHECK(act[0].relation == Relation::Eq);
        CHECK(act[0].rhs == 0);
        CHECK(act[1].row == LinearExpr{{s1, q(-1)}});
        CHECK(act[1].relation == Relation::LessEq);
        CHECK(act[1].rhs == 0);

        const auto inact = guard_consequences(w.layout, {{0, 0}, Phase::Inactive});
        REQUIRE(inact.size() == 2);
        CHECK(inact[0].row == LinearExpr{{z1, q(1)}});
        CHECK(inact[0].relation == Relation::Eq);
        CHECK(inact[1].row == LinearExpr{{s1, q(1)}});
        CHECK(inact[1].relation == Relation::LessEq);
    }

    TEST_CASE("both phases of one unit only meet at zero")
    {
        Worked w;
        auto s = w.root({}, false);
        add_guard(s, {{0, 0}, Phase::Active});
        add_guard(s, {{0, 0}, Phase::Inactive});
        const auto sys = s.normalize();
        const LinearExpr s1{{w.layout.pre(0, 0), q(1)}};
        const auto hi = lp_max(sys, s1), lo = lp_min(sys, s1);
        REQUIRE(hi.optimal());
        REQUIRE(lo.optimal());
        CHECK(hi.value == 0);
        CHECK(lo.value == 0);
    }

    TEST_CASE("normalization splits equalities into adjacent halves")
    {
        Worked w;
        Store s(w.problem, w.layout, w.problem.region, {});
        CHECK(s.normalize().num_rows() == 0);
        const auto y = w.layout.output(0), z1 = w.layout.post(0, 0), z2 = w.layout.post(0, 1);
        const auto id = s.add({{y, q(1)}, {z1, q(-1)}, {z2, q(1)}}, Relation::Eq, 0, Block::Aff, "base", {}, {});
        const auto sys = s.normalize();
        REQUIRE(sys.num_rows() == 2);
        CHECK(sys.row(0).coeffs == LinearExpr{{z1, q(-1)}, {z2, q(1)}, {y, q(1)}});
        CHECK(sys.row(0).rhs == 0);
        CHECK(sys.row(1).coeffs == LinearExpr{{z1, q(1)}, {z2, q(-1)}, {y, q(-1)}});
        CHECK(sys.row(1).rhs == 0);
        CHECK(sys.row(0).key == row_key(id, false));
        CHECK(sys.row(1).key == row_key(id, true));
    }

    TEST_CASE("identical rows are stored once")
    {
        Worked w;
        Store s(w.problem, w.layout, w.problem.region, {});
        const LinearExpr y{{w.layout.output(0), q(1)}};
        const auto a = s.add(y, Relation::LessEq, q(1), Block::Rel, "base", {}, {});
        const auto b = s.add(y, Relation::LessEq, q(1), Block::Rel, "base", {}, {});
        CHECK(a == b);
        CHECK(s.active_count() == 1);
        const auto c = s.add(y, Relation::LessEq, q(2), Block::Rel, "base", {}, {});
        CHECK(c != a);
        CHECK(s.active_count() == 2);
    }

    TEST_CASE("lemma and hull rows carry their block and origin")
    {
        Worked w;
        auto s = w.root({}, false);
        auto lemma = std::make_shared<Lemma>();
        lemma->form = {{w.layout.output(0), q(1)}};
        lemma->bound = q(1);
        lemma->region = w.problem.region;
        lemma->proof = std::make_shared<ProofNode>();
        CHECK(inject_lemmas(s, {lemma}) == 1);
        CHECK(inject_lemmas(s, {lemma}) == 0);
        const auto * row = find_row(s, lemma->form, Relation::LessEq, q(1));
        REQUIRE(row);
        CHECK(row->block == Block::Learn);
        CHECK(row->origin == "lemma(0)");

        std::size_t hull = 0;
        for (const auto & c : s.constraints())
            if (c.active && c.origin == "hull" + to_string(UnitId{0, 0})) {
                ++hull;
                CHECK(c.block == Block::Rel);
            }
        CHECK(hull == 4);
    }

    TEST_CASE("lemmas scoped to a smaller region are not injected")
    {
        Worked w;
        auto s = w.root({}, false);
        auto lemma = std::make_shared<Lemma>();
        lemma->form = {{w.layout.output(0), q(1)}};
        lemma->bound = q(0);
        lemma->region = Box{{q(0)}, {q(1, 2)}};
        lemma->proof = std::make_shared<ProofNode>();
        CHECK(inject_lemmas(s, {lemma}) == 0);
        CHECK(lemma->applies_to(Box{{q(0)}, {q(1, 4)}}, {}));
        CHECK_FALSE(lemma->applies_to(w.problem.region, {}));
    }

    TEST_CASE("exact traces satisfy every row of the query-free store")
    {
        std::mt19937 rng(17);
        std::size_t checked = 0;
        for (int trial = 0; trial < 60; ++trial) {
            const auto p = random_problem(rng);
            const VariableLayout layout(p.net, p.property);
            const auto x0 = sample_input(rng, p.region);
            const auto alpha = phases_from(rng, layout, forward_eval(p.net, x0));
            StoreOptions o;
            o.include_query = false;
            const auto s = build_initial_store(p, layout, p.region, alpha, {}, o);
            for (int k = 0; k < 20; ++k) {
                const auto x = k == 0 ? x0 : sample_input(rng, p.region);
                const auto t = forward_eval(p.net, x);
                if (! consistent(t, alpha))
                    continue;
                ++checked;
                CHECK(satisfies_constraints(s, t.to_vector(layout, p.property, x)));
            }
        }
        CHECK(checked >= 100);
    }

    TEST_CASE("a point satisfies the store iff it satisfies its normalization")
    {
        std::mt19937 rng(23);
        for (int trial = 0; trial < 30; ++trial) {
            const auto p = random_problem(rng);
            const VariableLayout layout(p.net, p.property);
            const auto s = build_initial_store(p, layout, p.region, {}, {});
            const auto sys = s.normalize();
            for (int k = 0; k < 30; ++k) {
                std::vector<Rational> v;
                if (k % 2) {
                    const auto x = sample_input(rng, p.region, 4);
                    v = forward_eval(p.net, x).to_vector(layout, p.property, x);
                }
                else
                    for (std::size_t i = 0; i < layout.size(); ++i)
                        v.push_back(random_rational(rng, 4, 2));
                CHECK(satisfies_constraints(s, v) == sys.satisfied_by(v));
            }
        }
    }

    TEST_CASE("adding rows never readmits a violated point")
    {
        Worked w;
        auto s = w.root({}, false);
        std::mt19937 rng(29);
        std::vector<std::vector<Rational>> violated;
        for (int k = 0; k < 200; ++k) {
            std::vector<Rational> v;
            for (std::size_t i = 0; i < w.layout.size(); ++i)
                v.push_back(random_rational(rng, 3, 2));
            if (! satisfies_constraints(s, v))
                violated.push_back(std::move(v));
        }
        REQUIRE(! violated.empty());
        s.add({{w.layout.output(0), q(1)}}, Relation::LessEq, q(1), Block::Rel, "base", {}, {});
        add_guard(s, {{0, 1}, Phase::Active});
        for (const auto & v : violated)
            CHECK_FALSE(satisfies_constraints(s, v));
    }

    TEST_CASE("retired rows leave the normalization but keep their ids")
    {
        Worked w;
        auto s = w.root({}, false);
        const auto before = s.normalize().num_rows();
        const auto id = s.constraints().back().id;
        s.retire(id);
        CHECK(s.normalize().num_rows() == before - 1);
        CHECK(s.constraint(id).row == s.constraints().back().row);
        CHECK_FALSE(s.constraint(id).active);
        CHECK_THROWS_AS(s.normalize().position(row_key(id, false)), UnknownRow);
    }

    TEST_CASE("ids are never reused across stores sharing an allocator")
    {
        Worked w;
        StoreOptions o;
        o.ids = std::make_shared<IdAllocator>();
        const auto a = build_initial_store(w.problem, w.layout, w.problem.region, {}, {}, o);
        const auto b = build_initial_store(w.problem, w.layout, w.problem.region, {}, {}, o);
        std::set<std::uint64_t> ids;
        for (const auto & c : a.constraints())
            ids.insert(c.id);
        for (const auto & c : b.constraints())
            CHECK(ids.insert(c.id).second);
    }

    TEST_CASE("snapshots carry their derivation chain and recorded value")
    {
        Worked w;
        const auto s = w.root();
        const auto sys = s.normalize();
        const auto r = lp_feasible(sys);
        REQUIRE(r.infeasible());
        const auto snap = s.snapshot(r.dual);
        CHECK(! snap.rows.empty());
        Rational value = 0;
        for (const auto & [i, l] : snap.lambda) {
            REQUIRE(i < snap.rows.size());
            value += l * snap.rows[i].rhs;
        }
        CHECK(value == snap.value);
        CHECK(snap.value < 0);
        for (std::size_t i = 0; i < snap.rows.size(); ++i)
            for (const auto & [j, m] : snap.rows[i].multipliers)
                CHECK(j < i);
    }
}
