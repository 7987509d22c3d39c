#include "support.hpp"

#include <certnn/errors.hpp>

#include <doctest.h>

using namespace certnn;
using namespace certnn::testing;

namespace {

const char * worked_text = R"({
  "weights": [[["2"], ["-1"]], [["1", "-1"]]],
  "biases": [["-1", "1/2"], ["0"]],
  "activations": ["relu", "identity"],
  "input_lower": ["0"], "input_upper": ["1"],
  "margin": {"0": "1"}, "threshold": "1", "epsilon": "1/10"
})";

std::string with(std::string text, const std::string & from, const std::string & to)
{
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    return text.replace(at, from.size(), to);
}

Network dense(std::vector<std::size_t> widths, Activation last)
{
    Network n;
    n.input_dim = widths.front();
    for (std::size_t i = 1; i < widths.size(); ++i) {
        Layer l;
        l.weights.assign(widths[i], std::vector<Rational>(widths[i - 1], q(1)));
        l.bias.assign(widths[i], q(0));
        l.activation = i + 1 == widths.size() ? last : Activation::Relu;
        n.layers.push_back(std::move(l));
    }
    return n;
}

SafetyProperty first_output()
{
    SafetyProperty p;
    p.margin = {{0, q(1)}};
    return p;
}

} // namespace

TEST_SUITE("model")
{
    TEST_CASE("the worked problem parses exactly")
    {
        const auto p = parse_problem(data_path("worked.json"));
        REQUIRE(p.net.layers.size() == 2);
        CHECK(p.net.input_dim == 1);
        CHECK(p.net.layers[0].weights == std::vector<std::vector<Rational>>{{q(2)}, {q(-1)}});
        CHECK(p.net.layers[0].bias == std::vector<Rational>{q(-1), q(1, 2)});
        CHECK(p.net.layers[0].activation == Activation::Relu);
        CHECK(p.net.layers[1].weights == std::vector<std::vector<Rational>>{{q(1), q(-1)}});
        CHECK(p.net.layers[1].activation == Activation::Identity);
        CHECK(p.region.lower == std::vector<Rational>{q(0)});
        CHECK(p.region.upper == std::vector<Rational>{q(1)});
        CHECK(p.property.margin == std::map<std::size_t, Rational>{{0, q(1)}});
        CHECK(p.property.threshold == q(1));
        CHECK(p.property.epsilon == q(1, 10));
        CHECK(p.property.violation_level() == q(11, 10));
        CHECK(parse_problem_text(worked_text).property.epsilon == q(1, 10));
    }

    TEST_CASE("malformed problems are rejected with the matching error")
    {
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"("input_upper": ["1"])", R"("input_upper": ["-1"])")),
            ValueError);
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"("1/2")", R"("1/0")")), ValueError);
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"(["1", "-1"])", R"(["1"])")), DimensionError);
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"("relu", "identity")", R"("identity", "identity")")),
            ValueError);
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"("1/2")", "0.5")), ParseError);
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"("1/2")", R"("0.5")")), ParseError);
        CHECK_THROWS_AS(parse_problem_text("{ not json"), ParseError);
        CHECK_THROWS_AS(parse_problem_text(with(worked_text, R"("epsilon": "1/10")", R"("epsilon": "-1/10")")),
            ValueError);
        CHECK_THROWS_AS(parse_problem(data_path("no-such-file.json")), std::filesystem::filesystem_error);
    }

    TEST_CASE("an identity network parses as a single identity layer")
    {
        const auto p = parse_problem(data_path("identity.json"));
        REQUIRE(p.net.layers.size() == 1);
        CHECK(p.net.layers[0].activation == Activation::Identity);
        CHECK(p.property.threshold == q(2));
    }

    TEST_CASE("non-canonical rationals are refused by network validation")
    {
        auto p = parse_problem(data_path("worked.json"));
        Rational loose(2, 4);
        p.net.layers[0].bias[1] = loose;
        CHECK_THROWS_AS(p.net.validate(), ValueError);
    }

    TEST_CASE("layout orders inputs, then pre- and post-activations per layer")
    {
        const auto p = parse_problem(data_path("worked.json"));
        const VariableLayout layout(p.net, p.property);
        CHECK(layout.size() == 6);
        CHECK(layout.input(0) == 0);
        CHECK(layout.pre(0, 0) == 1);
        CHECK(layout.pre(0, 1) == 2);
        CHECK(layout.post(0, 0) == 3);
        CHECK(layout.post(0, 1) == 4);
        CHECK(layout.output(0) == 5);
        CHECK(layout.pre(1, 0) == layout.post(1, 0));
        CHECK(layout.margin_var() == 5);
        CHECK_FALSE(layout.has_margin_aux());
        CHECK(layout.relu_units() == std::vector<UnitId>{{0, 0}, {0, 1}});
    }

    TEST_CASE("layout sizes follow the aliasing rule")
    {
        CHECK(VariableLayout(dense({4, 3}, Activation::Identity), first_output()).size() == 7);
        CHECK(VariableLayout(dense({3, 4, 2}, Activation::Relu), first_output()).size() == 15);
        CHECK(VariableLayout(dense({3, 4, 2}, Activation::Identity), first_output()).size() == 13);

        SafetyProperty diff;
        diff.margin = {{0, q(1)}, {1, q(-1)}};
        const VariableLayout with_aux(dense({3, 4, 2}, Activation::Identity), diff);
        CHECK(with_aux.has_margin_aux());
        CHECK(with_aux.size() == 14);
        CHECK(with_aux.margin_var() == 13);

        SafetyProperty scaled;
        scaled.margin = {{0, q(2)}};
        CHECK(VariableLayout(dense({1, 1}, Activation::Identity), scaled).has_margin_aux());
    }

    TEST_CASE("forward evaluation of the worked network")
    {
        const auto p = parse_problem(data_path("worked.json"));
        const auto at0 = forward_eval(p.net, std::vector<Rational>{q(0)});
        CHECK(at0.pre[0] == std::vector<Rational>{q(-1), q(1, 2)});
        CHECK(at0.post[0] == std::vector<Rational>{q(0), q(1, 2)});
        CHECK(at0.outputs() == std::vector<Rational>{q(-1, 2)});

        const auto at1 = forward_eval(p.net, std::vector<Rational>{q(1)});
        CHECK(at1.pre[0] == std::vector<Rational>{q(1), q(-1, 2)});
        CHECK(at1.post[0] == std::vector<Rational>{q(1), q(0)});
        CHECK(at1.outputs() == std::vector<Rational>{q(1)});

        CHECK_THROWS_AS(forward_eval(p.net, std::vector<Rational>{q(0), q(1)}), DimensionError);
    }

    TEST_CASE("zero pre-activations give zero post-activations")
    {
        Network n = dense({2, 3, 2}, Activation::Relu);
        const auto t = forward_eval(n, std::vector<Rational>{q(0), q(0)});
        for (const auto & layer : t.post)
            for (const auto & z : layer)
                CHECK(z == 0);
    }

    TEST_CASE("trace vectors line up with the layout")
    {
        const auto p = parse_problem(data_path("worked.json"));
        const VariableLayout layout(p.net, p.property);
        const std::vector<Rational> x{q(3, 4)};
        const auto v = forward_eval(p.net, x).to_vector(layout, p.property, x);
        CHECK(v == std::vector<Rational>{q(3, 4), q(1, 2), q(-1, 4), q(1, 2), q(0), q(1, 2)});
    }

    TEST_CASE("witness validation checks region and property exactly")
    {
        const auto p = parse_problem(data_path("worked.json"));
        const auto at1 = validate_witness(p, std::vector<Rational>{q(1)});
        CHECK_FALSE(at1);
        CHECK(at1.reason == "property");

        const auto relaxed = parse_problem(data_path("worked_sat.json"));
        CHECK(relaxed.property.violation_level() == q(1, 2));
        CHECK(validate_witness(relaxed, std::vector<Rational>{q(3, 4)}));
        CHECK_FALSE(validate_witness(relaxed, std::vector<Rational>{q(3, 4) - q(1, 1000)}));

        const auto outside = validate_witness(relaxed, std::vector<Rational>{q(2)});
        CHECK_FALSE(outside);
        CHECK(outside.reason == "region");
        CHECK(validate_witness(relaxed, std::vector<Rational>{q(1), q(1)}).reason == "dimension");
    }

    TEST_CASE("forward evaluation is affine on each phase pattern")
    {
        std::mt19937 rng(11);
        std::size_t checked = 0;
        for (int trial = 0; trial < 200; ++trial) {
            const auto p = random_problem(rng);
            const auto a = sample_input(rng, p.region), b = sample_input(rng, p.region);
            std::vector<Rational> mid;
            for (std::size_t k = 0; k < a.size(); ++k)
                mid.push_back((a[k] + b[k]) / 2);
            const auto ta = forward_eval(p.net, a), tb = forward_eval(p.net, b), tm = forward_eval(p.net, mid);
            bool same = true;
            for (std::size_t l = 0; l + 1 < ta.pre.size(); ++l)
                for (std::size_t j = 0; j < ta.pre[l].size(); ++j)
                    same = same && (ta.pre[l][j] > 0) == (tb.pre[l][j] > 0) && ta.pre[l][j] != 0 && tb.pre[l][j] != 0;
            if (! same)
                continue;
            ++checked;
            for (std::size_t j = 0; j < tm.outputs().size(); ++j)
                CHECK(tm.outputs()[j] == (ta.outputs()[j] + tb.outputs()[j]) / 2);
        }
        CHECK(checked > 20);
    }

    TEST_CASE("rationals round-trip through their text form")
    {
        std::mt19937 rng(3);
        for (int i = 0; i < 500; ++i) {
            const Rational r = random_rational(rng, 1000, 97) * random_rational(rng, 50, 13);
            CHECK(parse_rational(format_rational(r)) == r);
            CHECK(parse_rational(format_rational(r), true) == r);
        }
        CHECK(format_rational(q(3)) == "3/1");
        CHECK(format_rational(q(-4, 6)) == "-2/3");
        CHECK(parse_rational("6/4") == q(3, 2));
        CHECK(parse_rational("-7") == q(-7));
        CHECK_THROWS(parse_rational("2/4", true));
        CHECK_THROWS(parse_rational("3", true));
        CHECK_THROWS(parse_rational("0/3", true));
        CHECK_THROWS_AS(parse_rational("1/0"), ValueError);
        CHECK_THROWS_AS(parse_rational("x"), ParseError);
    }

    TEST_CASE("problem digests are stable and sensitive")
    {
        const auto p = parse_problem(data_path("worked.json"));
        CHECK(problem_digest(p) == problem_digest(parse_problem_text(canonical_problem_text(p))));
        CHECK(problem_digest(p).size() == 64);
        CHECK(problem_digest(p) != problem_digest(parse_problem(data_path("worked_sat.json"))));
    }
}
