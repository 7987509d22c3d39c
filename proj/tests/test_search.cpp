#include "support.hpp"

#include <certnn/errors.hpp>
#include <certnn/prooflog.hpp>
#include <certnn/search.hpp>

#include <doctest.h>

using namespace certnn;
using namespace certnn::testing;

namespace {

Problem worked()
{
    return parse_problem(data_path("worked.json"));
}

Problem worked_sat()
{
    return parse_problem(data_path("worked_sat.json"));
}

VerifyConfig with(Strategy s)
{
    VerifyConfig c;
    c.strategy = s;
    return c;
}

void collect_leaves(const ProofNode & n, std::vector<const ProofNode *> & out)
{
    if (n.is_leaf())
        out.push_back(&n);
    for (const auto & c : n.children)
        collect_leaves(c, out);
}

BoundProof bound_leaf(const Box & region, const LinearExpr & form, const Rational & beta)
{
    ProofNode n;
    n.region = region;
    n.kind = ProofNode::Kind::PruneBound;
    n.bound = beta;
    return BoundProof{form, beta, n};
}

bool phases_match(const PhaseAssignment & alpha, const Trace & t, bool strict)
{
    for (const auto & [u, p] : alpha) {
        const auto & s = t.pre[u.layer][u.neuron];
        if (strict ? (p == Phase::Active ? s <= 0 : s >= 0) : (p == Phase::Active ? s < 0 : s > 0))
            return false;
    }
    return true;
}

bool in_box(const Box & b, std::span<const Rational> x, bool strict)
{
    for (std::size_t k = 0; k < x.size(); ++k)
        if (strict ? (x[k] <= b.lower[k] || x[k] >= b.upper[k]) && b.lower[k] != b.upper[k]
                   : (x[k] < b.lower[k] || x[k] > b.upper[k]))
            return false;
    return true;
}

} // namespace

TEST_SUITE("search")
{
    TEST_CASE("domain refinement bisects at the exact midpoint")
    {
        const auto p = worked();
        Refinement r;
        r.kind = Refinement::Kind::Domain;
        r.dim = 0;
        r.midpoint = q(1, 2);
        const auto kids = refine({p.region, {}}, r);
        CHECK(kids[0].region == Box{{q(0)}, {q(1, 2)}});
        CHECK(kids[1].region == Box{{q(1, 2)}, {q(1)}});
        CHECK(kids[0].phases.empty());
    }

    TEST_CASE("phase refinement yields the active then the inactive child")
    {
        const auto p = worked();
        const VariableLayout layout(p.net, p.property);
        Refinement r;
        r.kind = Refinement::Kind::Phase;
        r.unit = {0, 0};
        const auto kids = refine({p.region, {}}, r);
        CHECK(kids[0].phases == PhaseAssignment{{{0, 0}, Phase::Active}});
        CHECK(kids[1].phases == PhaseAssignment{{{0, 0}, Phase::Inactive}});
        const auto s = build_initial_store(p, layout, kids[1].region, kids[1].phases, {});
        bool zero = false;
        for (const auto & c : s.constraints())
            zero = zero || (c.block == Block::GuardConseq && c.row == LinearExpr{{layout.post(0, 0), q(1)}});
        CHECK(zero);
        CHECK_THROWS_AS(refine(kids[0], r), ValueError);
    }

    TEST_CASE("nothing to split is an error")
    {
        const auto p = worked();
        const VariableLayout layout(p.net, p.property);
        const Box point{{q(1, 3)}, {q(1, 3)}};
        const auto s = build_initial_store(p, layout, point, {}, {});
        const auto r = choose_refinement(s, point);
        CHECK(r.kind == Refinement::Kind::Nothing);
        CHECK_THROWS_AS(refine({point, {}}, r), ValueError);
    }

    TEST_CASE("branching prefers the widest unstable unit")
    {
        const auto p = worked();
        const VariableLayout layout(p.net, p.property);
        const auto s = build_initial_store(p, layout, p.region, {}, {});
        const auto r = choose_refinement(s, p.region);
        CHECK(r.kind == Refinement::Kind::Phase);
        CHECK(r.unit == UnitId{0, 0});
        const auto d = choose_refinement(s, p.region, true);
        CHECK(d.kind == Refinement::Kind::Domain);
        CHECK(d.midpoint == q(1, 2));
    }

    TEST_CASE("merging child bounds takes the larger one on the parent")
    {
        const auto p = worked();
        const LinearExpr y{{5, q(1)}};
        ProofNode split;
        split.region = p.region;
        split.kind = ProofNode::Kind::DomainSplit;
        split.midpoint = q(1, 2);
        const auto lemma = merge_lemma(split, bound_leaf({{q(0)}, {q(1, 2)}}, y, q(0)),
            bound_leaf({{q(1, 2)}, {q(1)}}, y, q(1)));
        CHECK(lemma.form == y);
        CHECK(lemma.bound == 1);
        CHECK(lemma.region == p.region);
        REQUIRE(lemma.proof);
        CHECK(lemma.proof->children.size() == 2);

        const auto same = merge_lemma(split, bound_leaf(p.region, y, q(1, 3)), bound_leaf(p.region, y, q(1, 3)));
        CHECK(same.bound == q(1, 3));

        CHECK_THROWS_AS(merge_lemma(split, bound_leaf(p.region, y, q(0)), bound_leaf(p.region, {{4, q(1)}}, q(1))),
            ValueError);
    }

    TEST_CASE("the worked example is UNSAT with a Farkas leaf under ICL")
    {
        const auto p = worked();
        const auto r = icl_verify(p, {});
        REQUIRE(r.verdict == VerifyResult::Verdict::Unsat);
        std::vector<const ProofNode *> leaves;
        collect_leaves(r.log.root, leaves);
        const auto farkas = std::count_if(leaves.begin(), leaves.end(),
            [](const ProofNode * n) { return n->kind == ProofNode::Kind::PruneInfeasible; });
        CHECK(farkas >= 1);
        CHECK(check_proof(p, r.log));
    }

    TEST_CASE("HSRV prunes the worked example by the root margin bound")
    {
        const auto p = worked();
        const auto r = hsrv_verify(p, {});
        REQUIRE(r.verdict == VerifyResult::Verdict::Unsat);
        CHECK(r.log.root.kind == ProofNode::Kind::PruneBound);
        CHECK(r.log.root.bound == 1);
        CHECK(r.counters.splits == 0);
        CHECK(check_proof(p, r.log));
    }

    TEST_CASE("the relaxed query is SAT under both strategies")
    {
        const auto p = worked_sat();
        for (const auto s : {Strategy::Icl, Strategy::Hsrv}) {
            const auto r = verify(p, with(s));
            REQUIRE(r.verdict == VerifyResult::Verdict::Sat);
            CHECK(validate_witness(p, r.witness));
            CHECK(r.trace.outputs()[0] >= q(1, 2));
            CHECK(r.witness[0] >= q(3, 4));
        }
    }

    TEST_CASE("a zero LP budget is UNKNOWN")
    {
        for (const auto s : {Strategy::Icl, Strategy::Hsrv}) {
            auto c = with(s);
            c.lp_budget = 0;
            const auto r = verify(worked(), c);
            CHECK(r.verdict == VerifyResult::Verdict::Unknown);
            CHECK(r.reason.find("resource") != std::string::npos);
        }
        auto c = with(Strategy::Icl);
        c.lp_budget = 3;
        CHECK(verify(worked_sat(), c).verdict == VerifyResult::Verdict::Unknown);
    }

    TEST_CASE("a forced root split learns the merged margin lemma")
    {
        const auto p = worked();
        VerifyConfig c;
        c.force_root_domain_split = true;
        for (const auto s : {Strategy::Icl, Strategy::Hsrv}) {
            c.strategy = s;
            const auto r = verify(p, c);
            REQUIRE(r.verdict == VerifyResult::Verdict::Unsat);
            CHECK(r.log.root.kind == ProofNode::Kind::DomainSplit);
            REQUIRE(r.learned.size() == 1);
            CHECK(r.learned[0].bound == 1);
            CHECK(r.learned[0].region == p.region);
            CHECK(r.counters.lemmas == 1);
            CHECK(check_proof(p, r.log));
        }
    }

    TEST_CASE("the oracle on the worked problems")
    {
        const auto u = oracle_verify(worked());
        CHECK_FALSE(u.sat);
        CHECK(u.assignments == 4);
        CHECK(u.lp_calls == 4);

        const auto s = oracle_verify(worked_sat());
        REQUIRE(s.sat);
        CHECK(validate_witness(worked_sat(), s.witness));

        const auto id = oracle_verify(parse_problem(data_path("identity.json")));
        CHECK_FALSE(id.sat);
        CHECK(id.lp_calls == 1);

        CHECK_THROWS_AS(oracle_verify(worked(), 1), CapExceeded);
    }

    TEST_CASE("both strategies agree with the oracle on random networks")
    {
        std::mt19937 rng(83);
        std::size_t unsat = 0;
        for (int trial = 0; trial < 40; ++trial) {
            const auto p = random_problem(rng);
            const auto truth = oracle_verify(p);
            for (const auto s : {Strategy::Icl, Strategy::Hsrv}) {
                const auto r = verify(p, with(s));
                REQUIRE(r.verdict != VerifyResult::Verdict::Unknown);
                CHECK((r.verdict == VerifyResult::Verdict::Sat) == truth.sat);
                if (r.verdict == VerifyResult::Verdict::Sat)
                    CHECK(validate_witness(p, r.witness));
                else
                    CHECK(check_proof(p, r.log));
            }
            unsat += truth.sat ? 0 : 1;
        }
        CHECK(unsat > 5);
    }

    TEST_CASE("several workers reach the same verdicts with valid proofs")
    {
        std::mt19937 rng(89);
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = random_problem(rng);
            auto c = with(trial % 2 ? Strategy::Hsrv : Strategy::Icl);
            c.gate_budget = 2;
            const auto single = verify(p, c);
            c.workers = 4;
            const auto multi = verify(p, c);
            CHECK(single.verdict == multi.verdict);
            if (multi.verdict == VerifyResult::Verdict::Unsat)
                CHECK(check_proof(p, multi.log));
            if (multi.verdict == VerifyResult::Verdict::Sat)
                CHECK(validate_witness(p, multi.witness));
        }
    }

    TEST_CASE("single-worker runs are deterministic")
    {
        std::mt19937 rng(97);
        for (int trial = 0; trial < 10; ++trial) {
            const auto p = random_problem(rng);
            auto c = with(Strategy::Icl);
            c.gate_budget = 2;
            c.force_root_domain_split = true;
            const auto a = verify(p, c), b = verify(p, c);
            CHECK(a.verdict == b.verdict);
            if (a.verdict == VerifyResult::Verdict::Unsat)
                CHECK(emit_proof(a.log) == emit_proof(b.log));
        }
    }

    TEST_CASE("the leaves of a proof cover every input and phase pattern")
    {
        std::mt19937 rng(101);
        std::size_t points = 0;
        for (int trial = 0; trial < 40; ++trial) {
            const auto p = random_problem(rng);
            auto c = with(trial % 2 ? Strategy::Hsrv : Strategy::Icl);
            c.gate_budget = 2;
            c.force_root_domain_split = true;
            const auto r = verify(p, c);
            if (r.verdict != VerifyResult::Verdict::Unsat)
                continue;
            std::vector<const ProofNode *> leaves;
            collect_leaves(r.log.root, leaves);
            for (int k = 0; k < 20; ++k) {
                const auto x = sample_input(rng, p.region, 7);
                const auto t = forward_eval(p.net, x);
                std::size_t loose = 0, strict = 0;
                for (const auto * leaf : leaves) {
                    loose += in_box(leaf->region, x, false) && phases_match(leaf->phases, t, false) ? 1 : 0;
                    strict += in_box(leaf->region, x, true) && phases_match(leaf->phases, t, true) ? 1 : 0;
                }
                CHECK(loose >= 1);
                CHECK(strict <= 1);
                ++points;
            }
        }
        CHECK(points >= 100);
    }

    TEST_CASE("a validated witness rules out UNSAT")
    {
        std::mt19937 rng(103);
        std::size_t found = 0;
        for (int trial = 0; trial < 40; ++trial) {
            const auto p = random_problem(rng);
            std::optional<std::vector<Rational>> x;
            for (int k = 0; k < 40 && ! x; ++k)
                if (auto cand = sample_input(rng, p.region, 16); validate_witness(p, cand))
                    x = cand;
            if (! x)
                continue;
            ++found;
            CHECK(icl_verify(p, {}).verdict == VerifyResult::Verdict::Sat);
            CHECK(hsrv_verify(p, {}).verdict == VerifyResult::Verdict::Sat);
        }
        CHECK(found > 5);
    }
}
