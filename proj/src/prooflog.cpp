#include <certnn/errors.hpp>
#include <certnn/prooflog.hpp>
#include <certnn/store.hpp>

#include <nlohmann/json.hpp>

#include <optional>

namespace certnn {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- emission

namespace {

Json expr_json(const LinearExpr & e)
{
    Json out = Json::array();
    for (const auto & [var, c] : e)
        out.push_back(Json::array({var, format_rational(c)}));
    return out;
}

Json rationals_json(const std::vector<Rational> & v)
{
    Json out = Json::array();
    for (const auto & q : v)
        out.push_back(format_rational(q));
    return out;
}

Json box_json(const Box & b)
{
    return Json{{"lower", rationals_json(b.lower)}, {"upper", rationals_json(b.upper)}};
}

Json unit_json(const UnitId & u)
{
    return Json{{"layer", u.layer}, {"neuron", u.neuron}};
}

Json literal_json(const UnitId & u, Phase p)
{
    auto j = unit_json(u);
    j["phase"] = to_string(p);
    return j;
}

Json phases_json(const PhaseAssignment & alpha)
{
    Json out = Json::array();
    for (const auto & [u, p] : alpha)
        out.push_back(literal_json(u, p));
    return out;
}

Json guards_json(const GuardSet & guards)
{
    Json out = Json::array();
    for (const auto & g : guards)
        out.push_back(literal_json(g.unit, g.phase));
    return out;
}

Json weights_json(const std::vector<std::pair<std::size_t, Rational>> & w)
{
    Json out = Json::array();
    for (const auto & [i, q] : w)
        out.push_back(Json::array({i, format_rational(q)}));
    return out;
}

Json entry_json(const ChainEntry & e)
{
    Json j{{"row", expr_json(e.row)}, {"rhs", format_rational(e.rhs)}, {"by", to_string(e.by)}};
    switch (e.by) {
    case Justification::Base: break;
    case Justification::Dual: j["multipliers"] = weights_json(e.multipliers); break;
    case Justification::Hull:
        j["unit"] = unit_json(e.unit);
        if (e.uses_bounds) {
            j["lower"] = format_rational(e.lower);
            j["upper"] = format_rational(e.upper);
            j["upper_ref"] = e.upper_ref;
            j["lower_ref"] = e.lower_ref;
        }
        break;
    case Justification::Stable:
        j["unit"] = unit_json(e.unit);
        j["phase"] = to_string(e.phase);
        j["sign_ref"] = e.upper_ref;
        break;
    case Justification::Lemma: j["lemma"] = e.lemma; break;
    }
    return j;
}

Json certificate_json(const SnapshotCertificate & c)
{
    Json rows = Json::array();
    for (const auto & e : c.rows)
        rows.push_back(entry_json(e));
    return Json{{"guards", guards_json(c.guards)}, {"rows", std::move(rows)}, {"lambda", weights_json(c.lambda)},
        {"value", format_rational(c.value)}};
}

const char * kind_name(ProofNode::Kind k)
{
    switch (k) {
    case ProofNode::Kind::DomainSplit: return "DomainSplit";
    case ProofNode::Kind::PhaseSplit: return "PhaseSplit";
    case ProofNode::Kind::PruneInfeasible: return "PruneInfeasible";
    case ProofNode::Kind::PruneBound: return "PruneBound";
    case ProofNode::Kind::PruneCover: return "PruneCover";
    }
    return "?";
}

Json node_json(const ProofNode & n)
{
    Json j{{"kind", kind_name(n.kind)}, {"region", box_json(n.region)}, {"phases", phases_json(n.phases)}};
    if (n.kind == ProofNode::Kind::DomainSplit) {
        j["split_dim"] = n.split_dim;
        j["midpoint"] = format_rational(n.midpoint);
    }
    if (n.kind == ProofNode::Kind::PhaseSplit)
        j["split_unit"] = unit_json(n.split_unit);
    if (n.kind == ProofNode::Kind::PruneBound)
        j["bound"] = format_rational(n.bound);
    if (n.is_leaf()) {
        Json certs = Json::array();
        for (const auto & c : n.certificates)
            certs.push_back(certificate_json(c));
        j["certificates"] = std::move(certs);
    }
    else {
        Json children = Json::array();
        for (const auto & c : n.children)
            children.push_back(node_json(c));
        j["children"] = std::move(children);
    }
    return j;
}

} // namespace

std::string emit_proof(const ProofLog & log)
{
    Json lemmas = Json::array();
    for (const auto & l : log.lemmas)
        lemmas.push_back(Json{{"form", expr_json(l.form)}, {"bound", format_rational(l.bound)},
            {"region", box_json(l.region)}, {"phases", phases_json(l.phases)}, {"proof", node_json(l.proof)}});
    Json j{{"format", "certnn-proof"}, {"version", 1}, {"problem_digest", log.problem_digest},
        {"lemmas", std::move(lemmas)}, {"root", node_json(log.root)}};
    return j.dump(1) + "\n";
}

// ----------------------------------------------------------------- parsing

namespace {

Rational rational_of(const Json & j)
{
    if (! j.is_string())
        throw ParseError("expected a rational string");
    return parse_rational(j.get<std::string>(), true);
}

std::size_t index_of(const Json & j)
{
    if (! j.is_number_unsigned())
        throw ParseError("expected a nonnegative integer");
    return j.get<std::size_t>();
}

int small_index_of(const Json & j)
{
    auto v = index_of(j);
    if (v > 1'000'000)
        throw ParseError("index out of range");
    return static_cast<int>(v);
}

LinearExpr expr_of(const Json & j)
{
    LinearExpr out;
    std::optional<std::size_t> prev;
    for (const auto & item : j) {
        if (! item.is_array() || item.size() != 2)
            throw ParseError("expression terms are [index, coefficient]");
        const auto var = index_of(item[0]);
        auto c = rational_of(item[1]);
        if (c == 0 || (prev && var <= *prev))
            throw ParseError("expression terms must be nonzero and strictly increasing");
        prev = var;
        out.emplace(var, std::move(c));
    }
    return out;
}

std::vector<Rational> rationals_of(const Json & j)
{
    std::vector<Rational> out;
    for (const auto & item : j)
        out.push_back(rational_of(item));
    return out;
}

Box box_of(const Json & j)
{
    Box b{rationals_of(j.at("lower")), rationals_of(j.at("upper"))};
    if (b.lower.size() != b.upper.size())
        throw ParseError("box bounds differ in length");
    return b;
}

UnitId unit_of(const Json & j)
{
    return UnitId{small_index_of(j.at("layer")), small_index_of(j.at("neuron"))};
}

Phase phase_of(const Json & j)
{
    const auto s = j.get<std::string>();
    if (s == "active")
        return Phase::Active;
    if (s == "inactive")
        return Phase::Inactive;
    throw ParseError("unknown phase '" + s + "'");
}

PhaseAssignment phases_of(const Json & j)
{
    PhaseAssignment out;
    for (const auto & item : j)
        if (! out.emplace(unit_of(item), phase_of(item.at("phase"))).second)
            throw ParseError("unit assigned twice");
    return out;
}

GuardSet guards_of_json(const Json & j)
{
    GuardSet out;
    for (const auto & item : j)
        out.insert(GuardLiteral{unit_of(item), phase_of(item.at("phase"))});
    return out;
}

std::vector<std::pair<std::size_t, Rational>> weights_of(const Json & j)
{
    std::vector<std::pair<std::size_t, Rational>> out;
    for (const auto & item : j) {
        if (! item.is_array() || item.size() != 2)
            throw ParseError("weights are [index, value]");
        out.emplace_back(index_of(item[0]), rational_of(item[1]));
    }
    return out;
}

Justification justification_of(const Json & j)
{
    const auto s = j.get<std::string>();
    for (auto k : {Justification::Base, Justification::Dual, Justification::Hull, Justification::Stable,
             Justification::Lemma})
        if (to_string(k) == s)
            return k;
    throw ParseError("unknown justification '" + s + "'");
}

ChainEntry entry_of(const Json & j)
{
    ChainEntry e;
    e.row = expr_of(j.at("row"));
    e.rhs = rational_of(j.at("rhs"));
    e.by = justification_of(j.at("by"));
    switch (e.by) {
    case Justification::Base: break;
    case Justification::Dual: e.multipliers = weights_of(j.at("multipliers")); break;
    case Justification::Hull:
        e.unit = unit_of(j.at("unit"));
        e.uses_bounds = j.contains("upper_ref");
        if (e.uses_bounds) {
            e.lower = rational_of(j.at("lower"));
            e.upper = rational_of(j.at("upper"));
            e.upper_ref = index_of(j.at("upper_ref"));
            e.lower_ref = index_of(j.at("lower_ref"));
        }
        break;
    case Justification::Stable:
        e.unit = unit_of(j.at("unit"));
        e.phase = phase_of(j.at("phase"));
        e.upper_ref = index_of(j.at("sign_ref"));
        break;
    case Justification::Lemma: e.lemma = index_of(j.at("lemma")); break;
    }
    return e;
}

SnapshotCertificate certificate_of(const Json & j)
{
    SnapshotCertificate c;
    c.guards = guards_of_json(j.at("guards"));
    for (const auto & e : j.at("rows"))
        c.rows.push_back(entry_of(e));
    c.lambda = weights_of(j.at("lambda"));
    c.value = rational_of(j.at("value"));
    return c;
}

ProofNode::Kind node_kind_of(const Json & j)
{
    const auto s = j.get<std::string>();
    for (auto k : {ProofNode::Kind::DomainSplit, ProofNode::Kind::PhaseSplit, ProofNode::Kind::PruneInfeasible,
             ProofNode::Kind::PruneBound, ProofNode::Kind::PruneCover})
        if (kind_name(k) == s)
            return k;
    throw ParseError("unknown node kind '" + s + "'");
}

ProofNode node_of(const Json & j, int depth)
{
    if (depth > 10000)
        throw ParseError("proof tree too deep");
    ProofNode n;
    n.kind = node_kind_of(j.at("kind"));
    n.region = box_of(j.at("region"));
    n.phases = phases_of(j.at("phases"));
    if (n.kind == ProofNode::Kind::DomainSplit) {
        n.split_dim = index_of(j.at("split_dim"));
        n.midpoint = rational_of(j.at("midpoint"));
    }
    if (n.kind == ProofNode::Kind::PhaseSplit)
        n.split_unit = unit_of(j.at("split_unit"));
    if (n.kind == ProofNode::Kind::PruneBound)
        n.bound = rational_of(j.at("bound"));
    if (n.is_leaf())
        for (const auto & c : j.at("certificates"))
            n.certificates.push_back(certificate_of(c));
    else
        for (const auto & c : j.at("children"))
            n.children.push_back(node_of(c, depth + 1));
    return n;
}

} // namespace

ProofLog parse_proof(const std::string & text)
{
    try {
        const auto j = Json::parse(text);
        if (j.at("format") != "certnn-proof" || j.at("version") != 1)
            throw ParseError("not a certnn proof log");
        ProofLog log;
        log.problem_digest = j.at("problem_digest").get<std::string>();
        for (const auto & l : j.at("lemmas"))
            log.lemmas.push_back(LemmaProof{expr_of(l.at("form")), rational_of(l.at("bound")), box_of(l.at("region")),
                phases_of(l.at("phases")), node_of(l.at("proof"), 0)});
        log.root = node_of(j.at("root"), 0);
        return log;
    }
    catch (const nlohmann::json::exception & e) {
        throw ParseError(std::string("proof log: ") + e.what());
    }
}

// ---------------------------------------------------------------- checking

namespace {

struct Obligation
{
    LinearExpr form;
    Rational bound;
    bool strict = true;        // main tree: leaf bound must be below the violation level
    bool query_allowed = true; // lemma proofs may not use the negated query
    std::size_t lemma_limit = 0;
};

struct Failure
{
    std::string path, reason;
};

std::string signature(const LinearExpr & row, const Rational & rhs)
{
    return format_expr(row) + " <= " + format_rational(rhs);
}

class ProofChecker
{
public:
    ProofChecker(const Problem & problem, const std::vector<LemmaProof> & lemmas) :
        _problem(problem), _layout(problem.net, problem.property), _lemmas(lemmas)
    {
        const auto & net = problem.net;
        auto add_halves = [this](const LinearExpr & row, const Rational & rhs) {
            _base.insert(signature(row, rhs));
            _base.insert(signature(negated(row), -rhs));
        };
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            const auto & layer = net.layers[i];
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                LinearExpr row{{_layout.pre(i, j), Rational(1)}};
                for (std::size_t k = 0; k < layer.in_dim(); ++k)
                    if (layer.weights[j][k] != 0) {
                        const auto prev = i == 0 ? _layout.input(k) : _layout.post(i - 1, k);
                        add_scaled(row, LinearExpr{{prev, Rational(1)}}, -layer.weights[j][k]);
                    }
                add_halves(row, layer.bias[j]);
            }
        }
        if (_layout.has_margin_aux()) {
            LinearExpr row{{_layout.margin_var(), Rational(1)}};
            for (const auto & [j, c] : problem.property.margin)
                add_scaled(row, LinearExpr{{_layout.output(j), Rational(1)}}, -c);
            add_halves(row, 0);
        }
        _query_row = {{_layout.margin_var(), Rational(-1)}};
        _level = problem.property.violation_level();
    }

    std::optional<Failure> check_log(const ProofLog & log)
    {
        if (log.problem_digest != problem_digest(_problem))
            return Failure{"digest", "problem digest mismatch"};
        for (std::size_t i = 0; i < _lemmas.size(); ++i) {
            const auto & l = _lemmas[i];
            const std::string path = "lemma" + std::to_string(i);
            if (l.form.empty() || ! forms_valid(l.form))
                return Failure{path, "lemma form is empty or references unknown variables"};
            if (auto bad = check_phases(l.phases))
                return Failure{path, *bad};
            Obligation ob{l.form, l.bound, false, false, i};
            if (auto f = check_tree(l.proof, l.region, l.phases, ob, path))
                return f;
        }
        return check_main(log.root);
    }

    std::optional<Failure> check_main(const ProofNode & root)
    {
        Obligation ob{_layout.margin_form(), _level, true, true, _lemmas.size()};
        return check_tree(root, _problem.region, {}, ob, "root");
    }

    std::optional<Failure> check_single_leaf(const ProofNode & leaf)
    {
        if (! leaf.is_leaf())
            return Failure{"leaf", "not a leaf"};
        if (auto bad = check_phases(leaf.phases))
            return Failure{"leaf", *bad};
        Obligation ob{_layout.margin_form(), _level, true, true, _lemmas.size()};
        return check_tree(leaf, leaf.region, leaf.phases, ob, "leaf");
    }

private:
    bool forms_valid(const LinearExpr & e) const
    {
        return e.empty() || e.rbegin()->first < _layout.size();
    }

    std::optional<std::string> check_phases(const PhaseAssignment & alpha) const
    {
        for (const auto & [u, p] : alpha)
            if (! _layout.is_relu_unit(u))
                return "phase for unknown unit " + to_string(u);
        return std::nullopt;
    }

    std::optional<Failure> check_tree(const ProofNode & n, const Box & region, const PhaseAssignment & alpha,
        const Obligation & ob, const std::string & path)
    {
        if (region.dim() != _layout.input_dim())
            return Failure{path, "region dimension"};
        for (std::size_t k = 0; k < region.dim(); ++k)
            if (region.lower[k] > region.upper[k])
                return Failure{path, "empty region"};
        if (! (n.region == region))
            return Failure{path, "region differs from the parent's split"};
        if (n.phases != alpha)
            return Failure{path, "phases differ from the parent's split"};

        switch (n.kind) {
        case ProofNode::Kind::DomainSplit: {
            if (n.children.size() != 2)
                return Failure{path, "split: needs two children"};
            if (n.split_dim >= region.dim())
                return Failure{path, "split: dimension out of range"};
            const auto & lo = region.lower[n.split_dim];
            const auto & hi = region.upper[n.split_dim];
            if (! (lo < n.midpoint && n.midpoint < hi))
                return Failure{path, "split: cover (midpoint outside the open interval)"};
            Box left = region, right = region;
            left.upper[n.split_dim] = n.midpoint;
            right.lower[n.split_dim] = n.midpoint;
            if (auto f = check_tree(n.children[0], left, alpha, ob, path + "/0"))
                return f;
            return check_tree(n.children[1], right, alpha, ob, path + "/1");
        }
        case ProofNode::Kind::PhaseSplit: {
            if (n.children.size() != 2)
                return Failure{path, "split: needs two children"};
            if (! _layout.is_relu_unit(n.split_unit) || alpha.contains(n.split_unit))
                return Failure{path, "split: cover (unit unknown or already assigned)"};
            auto active = alpha, inactive = alpha;
            active[n.split_unit] = Phase::Active;
            inactive[n.split_unit] = Phase::Inactive;
            if (auto f = check_tree(n.children[0], region, active, ob, path + "/0"))
                return f;
            return check_tree(n.children[1], region, inactive, ob, path + "/1");
        }
        case ProofNode::Kind::PruneInfeasible: {
            if (n.certificates.size() != 1 || ! n.certificates[0].guards.empty())
                return Failure{path, "leaf: needs one unguarded certificate"};
            return check_farkas_leaf(n.certificates[0], region, alpha, ob, path + "/cert0");
        }
        case ProofNode::Kind::PruneBound: {
            if (n.certificates.size() != 1 || ! n.certificates[0].guards.empty())
                return Failure{path, "leaf: needs one unguarded certificate"};
            if (ob.strict ? ! (n.bound < ob.bound) : ! (n.bound <= ob.bound))
                return Failure{path, "leaf: bound " + format_rational(n.bound) + " does not discharge the obligation"};
            const auto & c = n.certificates[0];
            const std::string cpath = path + "/cert0";
            if (auto f = check_chain(c, region, alpha, ob, cpath))
                return f;
            auto sum = combine(c);
            if (! sum)
                return Failure{cpath, _error};
            if (sum->first != ob.form)
                return Failure{cpath, "dual: lambda^T A differs from the bounded form"};
            if (sum->second != c.value || c.value != n.bound)
                return Failure{cpath, "dual: lambda^T b does not equal the recorded bound"};
            return std::nullopt;
        }
        case ProofNode::Kind::PruneCover: {
            if (n.certificates.empty())
                return Failure{path, "cover: no certificates"};
            std::set<UnitId> units;
            for (std::size_t i = 0; i < n.certificates.size(); ++i) {
                const auto & c = n.certificates[i];
                const std::string cpath = path + "/cert" + std::to_string(i);
                for (const auto & g : c.guards) {
                    if (! _layout.is_relu_unit(g.unit) || alpha.contains(g.unit))
                        return Failure{cpath, "cover: guard on an unknown or already assigned unit"};
                    if (c.guards.contains(complement(g)))
                        return Failure{cpath, "cover: contradictory guards"};
                    units.insert(g.unit);
                }
                if (auto f = check_farkas_leaf(c, region, alpha, ob, cpath))
                    return f;
            }
            if (units.size() > 20)
                return Failure{path, "cover: too many guarded units"};
            const std::vector<UnitId> order(units.begin(), units.end());
            for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << order.size()); ++mask) {
                GuardSet assignment;
                for (std::size_t b = 0; b < order.size(); ++b)
                    assignment.insert({order[b], (mask >> b) & 1 ? Phase::Inactive : Phase::Active});
                bool covered = false;
                for (const auto & c : n.certificates)
                    if (std::includes(assignment.begin(), assignment.end(), c.guards.begin(), c.guards.end())) {
                        covered = true;
                        break;
                    }
                if (! covered)
                    return Failure{path, "cover: some phase pattern is not refuted"};
            }
            return std::nullopt;
        }
        }
        return Failure{path, "unknown node kind"};
    }

    std::optional<Failure> check_farkas_leaf(const SnapshotCertificate & c, const Box & region,
        const PhaseAssignment & alpha, const Obligation & ob, const std::string & path)
    {
        if (auto f = check_chain(c, region, alpha, ob, path))
            return f;
        auto sum = combine(c);
        if (! sum)
            return Failure{path, _error};
        if (! sum->first.empty())
            return Failure{path, "farkas: lambda^T A is not zero"};
        if (sum->second != c.value)
            return Failure{path, "farkas-value: lambda^T b differs from the recorded value"};
        if (sum->second >= 0)
            return Failure{path, "farkas-sign: lambda^T b = " + format_rational(sum->second) + " is not negative"};
        return std::nullopt;
    }

    /// lambda^T (rows, rhs) through the certs checker's counted combination.
    std::optional<std::pair<LinearExpr, Rational>> combine(const SnapshotCertificate & c)
    {
        NormalizedSystem sys(_layout.size());
        for (std::size_t i = 0; i < c.rows.size(); ++i)
            sys.add_row({c.rows[i].row, c.rows[i].rhs, i});
        return combine_entries(sys, c.lambda, c.rows.size());
    }

    std::optional<std::pair<LinearExpr, Rational>> combine_entries(const NormalizedSystem & sys,
        const std::vector<std::pair<std::size_t, Rational>> & weights, std::size_t limit)
    {
        Multipliers lambda;
        for (const auto & [i, w] : weights) {
            if (i >= limit) {
                _error = "reference to entry " + std::to_string(i) + " is out of range";
                return std::nullopt;
            }
            if (w <= 0) {
                _error = "sign: multiplier on entry " + std::to_string(i) + " is not positive";
                return std::nullopt;
            }
            lambda.emplace_back(i, w);
        }
        // Replayed through check_dual so the certificate checker's operation
        // counter sees the work.
        LinearExpr lhs;
        Rational rhs = 0;
        for (const auto & [key, w] : lambda) {
            const auto & row = sys.row(sys.position(key));
            add_scaled(lhs, row.coeffs, w);
            rhs += w * row.rhs;
        }
        DualBoundCertificate probe{lhs, rhs, lambda};
        if (auto r = check_dual(sys, probe); ! r) {
            _error = r.reason;
            return std::nullopt;
        }
        return std::make_pair(std::move(lhs), std::move(rhs));
    }

    std::optional<Failure> check_chain(const SnapshotCertificate & c, const Box & region,
        const PhaseAssignment & alpha, const Obligation & ob, const std::string & path)
    {
        GuardSet available = guards_of(alpha);
        available.insert(c.guards.begin(), c.guards.end());
        NormalizedSystem prefix(_layout.size());
        for (std::size_t i = 0; i < c.rows.size(); ++i) {
            const auto & e = c.rows[i];
            const std::string epath = path + "/row" + std::to_string(i);
            if (e.row.empty() || ! forms_valid(e.row))
                return Failure{epath, "row is empty or references unknown variables"};
            if (auto why = check_entry(e, i, c.rows, prefix, region, available, ob))
                return Failure{epath, *why};
            prefix.add_row({e.row, e.rhs, i});
        }
        return std::nullopt;
    }

    std::optional<std::string> check_entry(const ChainEntry & e, std::size_t index, const Chain & rows,
        const NormalizedSystem & prefix, const Box & region, const GuardSet & available, const Obligation & ob)
    {
        switch (e.by) {
        case Justification::Base: return check_base(e, region, available, ob);
        case Justification::Dual: {
            auto sum = combine_entries(prefix, e.multipliers, index);
            if (! sum)
                return "dual: " + _error;
            if (sum->first != e.row)
                return std::string("dual: combination differs from the row");
            if (sum->second != e.rhs)
                return std::string("dual: combination rhs differs from the row");
            return std::nullopt;
        }
        case Justification::Hull: {
            if (! _layout.is_relu_unit(e.unit))
                return "hull: unknown unit " + to_string(e.unit);
            const auto s = _layout.pre(e.unit);
            const auto z = _layout.post(e.unit);
            if (! e.uses_bounds) {
                if ((e.row == LinearExpr{{z, Rational(-1)}} || e.row == LinearExpr{{s, Rational(1)}, {z, Rational(-1)}})
                    && e.rhs == 0)
                    return std::nullopt;
                return std::string("hull: not a bound-free envelope row");
            }
            if (e.upper_ref >= index || e.lower_ref >= index)
                return std::string("hull: bound reference is not an earlier entry");
            const auto & up = rows[e.upper_ref];
            const auto & lo = rows[e.lower_ref];
            if (up.row != LinearExpr{{s, Rational(1)}} || up.rhs != e.upper)
                return std::string("hull: upper bound entry does not match");
            if (lo.row != LinearExpr{{s, Rational(-1)}} || lo.rhs != -e.lower)
                return std::string("hull: lower bound entry does not match");
            if (! (e.lower < 0 && e.upper > 0))
                return std::string("hull: bounds do not straddle zero");
            const Rational slope = e.upper / (e.upper - e.lower);
            const bool upper_line = e.row == LinearExpr{{s, -slope}, {z, Rational(1)}} && e.rhs == -slope * e.lower;
            const bool cap = e.row == LinearExpr{{z, Rational(1)}} && e.rhs == e.upper;
            if (! upper_line && ! cap)
                return std::string("hull: row is not an envelope row for the recorded bounds");
            return std::nullopt;
        }
        case Justification::Stable: {
            if (! _layout.is_relu_unit(e.unit))
                return "stable: unknown unit " + to_string(e.unit);
            if (e.upper_ref >= index)
                return std::string("stable: sign reference is not an earlier entry");
            const auto s = _layout.pre(e.unit);
            const auto & sign = rows[e.upper_ref];
            const LinearExpr expected
                = e.phase == Phase::Active ? LinearExpr{{s, Rational(-1)}} : LinearExpr{{s, Rational(1)}};
            if (sign.row != expected || sign.rhs > 0)
                return std::string("stable: sign entry does not establish the phase");
            if (! is_guard_row(e.row, e.rhs, GuardLiteral{e.unit, e.phase}))
                return std::string("stable: row is not a specialization of the unit");
            return std::nullopt;
        }
        case Justification::Lemma: {
            if (e.lemma >= ob.lemma_limit)
                return std::string("lemma: index out of range");
            const auto & l = _lemmas[e.lemma];
            if (l.region.dim() != region.dim() || ! l.region.contains(region))
                return std::string("lemma: scope does not contain the region");
            for (const auto & [u, p] : l.phases)
                if (! available.contains(GuardLiteral{u, p}))
                    return std::string("lemma: scope phases not asserted");
            if (e.row != l.form || e.rhs != l.bound)
                return std::string("lemma: row differs from the lemma");
            return std::nullopt;
        }
        }
        return std::string("unknown justification");
    }

    bool is_guard_row(const LinearExpr & row, const Rational & rhs, GuardLiteral lit) const
    {
        for (const auto & g : guard_consequences(_layout, lit)) {
            if (row == g.row && rhs == g.rhs)
                return true;
            if (g.relation == Relation::Eq && row == negated(g.row) && rhs == -g.rhs)
                return true;
        }
        return false;
    }

    std::optional<std::string> check_base(const ChainEntry & e, const Box & region, const GuardSet & available,
        const Obligation & ob)
    {
        if (_base.contains(signature(e.row, e.rhs)))
            return std::nullopt;
        if (e.row == _query_row && e.rhs == -_level) {
            if (! ob.query_allowed)
                return std::string("base: the negated query is not available here");
            return std::nullopt;
        }
        if (e.row.size() == 1) {
            const auto & [var, c] = *e.row.begin();
            if (var >= _layout.input(0) && var < _layout.input(0) + _layout.input_dim()) {
                const auto k = var - _layout.input(0);
                if (c == 1 && e.rhs >= region.upper[k])
                    return std::nullopt;
                if (c == -1 && e.rhs >= -region.lower[k])
                    return std::nullopt;
                return std::string("base: box row not implied by the region");
            }
        }
        for (const auto & g : available)
            if (is_guard_row(e.row, e.rhs, g))
                return std::nullopt;
        return std::string("base: row is not an affine, box, query or guard row");
    }

    const Problem & _problem;
    VariableLayout _layout;
    const std::vector<LemmaProof> & _lemmas;
    std::set<std::string> _base;
    LinearExpr _query_row;
    Rational _level;
    std::string _error;
};

} // namespace

ProofVerdict check_proof(const Problem & problem, const ProofLog & log)
{
    ProofChecker checker(problem, log.lemmas);
    if (auto f = checker.check_log(log))
        return ProofVerdict{false, f->path, f->reason};
    return ProofVerdict{true, {}, {}};
}

ProofVerdict check_proof_text(const Problem & problem, const std::string & text)
{
    ProofLog log;
    try {
        log = parse_proof(text);
    }
    catch (const Error & e) {
        return ProofVerdict{false, "log", e.what()};
    }
    return check_proof(problem, log);
}

ProofVerdict check_leaf(const Problem & problem, const ProofNode & leaf, const std::vector<LemmaProof> & lemmas)
{
    ProofChecker checker(problem, lemmas);
    if (auto f = checker.check_single_leaf(leaf))
        return ProofVerdict{false, f->path, f->reason};
    return ProofVerdict{true, {}, {}};
}

} // namespace certnn
