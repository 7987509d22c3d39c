#include <certnn/errors.hpp>
#include <certnn/model.hpp>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>

using nlohmann::json;

namespace certnn {

namespace {

// Exact comparisons assume lowest terms; GMP does not reduce on construction.
bool canonical(const Rational & q)
{
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return q.get_den() > 0 && g == 1;
}

} // namespace

void Network::validate() const
{
    if (input_dim == 0)
        throw DimensionError("network has zero inputs");
    if (layers.empty())
        throw DimensionError("network has no layers");

    std::size_t width = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto & layer = layers[i];
        if (layer.bias.empty())
            throw DimensionError("layer " + std::to_string(i) + " has no neurons");
        if (layer.weights.size() != layer.bias.size())
            throw DimensionError("layer " + std::to_string(i) + ": weight rows do not match bias length");
        for (const auto & row : layer.weights)
            if (row.size() != width)
                throw DimensionError("layer " + std::to_string(i) + ": expected " + std::to_string(width) + " columns");
        for (const auto & row : layer.weights)
            for (const auto & w : row)
                if (! canonical(w))
                    throw ValueError("layer " + std::to_string(i) + ": weight not in lowest terms");
        for (const auto & b : layer.bias)
            if (! canonical(b))
                throw ValueError("layer " + std::to_string(i) + ": bias not in lowest terms");
        if (layer.activation == Activation::Identity && i + 1 != layers.size())
            throw ValueError("only the final layer may use the identity activation");
        width = layer.out_dim();
    }
}

bool Box::contains(std::span<const Rational> x) const
{
    if (x.size() != dim())
        return false;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k] < lower[k] || x[k] > upper[k])
            return false;
    return true;
}

bool Box::contains(const Box & inner) const
{
    if (inner.dim() != dim())
        return false;
    for (std::size_t k = 0; k < dim(); ++k)
        if (inner.lower[k] < lower[k] || inner.upper[k] > upper[k])
            return false;
    return true;
}

Rational SafetyProperty::evaluate(std::span<const Rational> outputs) const
{
    Rational value = 0;
    for (const auto & [j, c] : margin)
        value += c * outputs[j];
    return value;
}

std::string to_string(const UnitId & u)
{
    return "(" + std::to_string(u.layer) + "," + std::to_string(u.neuron) + ")";
}

VariableLayout::VariableLayout(const Network & net, const SafetyProperty & prop) :
    _input_dim(net.input_dim)
{
    std::size_t next = 0;
    _input_base = next;
    next += net.input_dim;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto & layer = net.layers[i];
        const bool relu = layer.activation == Activation::Relu;
        _layer_width.push_back(layer.out_dim());
        _layer_relu.push_back(relu);
        _pre_base.push_back(next);
        next += layer.out_dim();
        if (relu) {
            _post_base.push_back(next);
            next += layer.out_dim();
            for (std::size_t j = 0; j < layer.out_dim(); ++j)
                _relu_units.push_back(UnitId{static_cast<int>(i), static_cast<int>(j)});
        }
        else
            _post_base.push_back(_pre_base.back());
    }

    if (prop.margin.size() == 1 && prop.margin.begin()->second == 1) {
        _margin_var = output(prop.margin.begin()->first);
        _has_aux = false;
    }
    else {
        _margin_var = next++;
        _has_aux = true;
    }
    _margin_form[_margin_var] = 1;
    _size = next;
}

std::optional<UnitId> VariableLayout::unit_of_var(std::size_t var) const
{
    for (std::size_t i = 0; i < _pre_base.size(); ++i) {
        if (! _layer_relu[i])
            continue;
        if (var >= _pre_base[i] && var < _pre_base[i] + _layer_width[i])
            return UnitId{static_cast<int>(i), static_cast<int>(var - _pre_base[i])};
        if (var >= _post_base[i] && var < _post_base[i] + _layer_width[i])
            return UnitId{static_cast<int>(i), static_cast<int>(var - _post_base[i])};
    }
    return std::nullopt;
}

bool VariableLayout::is_relu_unit(UnitId u) const
{
    return u.layer >= 0 && static_cast<std::size_t>(u.layer) < _layer_relu.size() && _layer_relu[u.layer]
        && u.neuron >= 0 && static_cast<std::size_t>(u.neuron) < _layer_width[u.layer];
}

std::string VariableLayout::name(std::size_t var) const
{
    if (var < _input_base + _input_dim)
        return "x" + std::to_string(var - _input_base);
    if (_has_aux && var == _margin_var)
        return "margin";
    for (std::size_t i = 0; i < _pre_base.size(); ++i) {
        const auto tag = std::to_string(i) + "_";
        if (var >= _pre_base[i] && var < _pre_base[i] + _layer_width[i])
            return (_layer_relu[i] ? "s" : "y") + tag + std::to_string(var - _pre_base[i]);
        if (_layer_relu[i] && var >= _post_base[i] && var < _post_base[i] + _layer_width[i])
            return "z" + tag + std::to_string(var - _post_base[i]);
    }
    return "v" + std::to_string(var);
}

VariableLayout build_layout(const Network & net, const SafetyProperty & prop)
{
    return VariableLayout(net, prop);
}

std::vector<Rational> Trace::to_vector(const VariableLayout & layout, const SafetyProperty & prop,
    std::span<const Rational> x) const
{
    std::vector<Rational> v(layout.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        v[layout.input(k)] = x[k];
    for (std::size_t i = 0; i < pre.size(); ++i)
        for (std::size_t j = 0; j < pre[i].size(); ++j) {
            v[layout.pre(i, j)] = pre[i][j];
            v[layout.post(i, j)] = post[i][j];
        }
    if (layout.has_margin_aux())
        v[layout.margin_var()] = prop.evaluate(outputs());
    return v;
}

Trace forward_eval(const Network & net, std::span<const Rational> x)
{
    if (x.size() != net.input_dim)
        throw DimensionError("input has " + std::to_string(x.size()) + " entries, network expects "
            + std::to_string(net.input_dim));

    Trace trace;
    std::vector<Rational> current(x.begin(), x.end());
    for (const auto & layer : net.layers) {
        std::vector<Rational> s(layer.out_dim());
        for (std::size_t j = 0; j < layer.out_dim(); ++j) {
            s[j] = layer.bias[j];
            for (std::size_t k = 0; k < current.size(); ++k)
                if (layer.weights[j][k] != 0)
                    s[j] += layer.weights[j][k] * current[k];
        }
        std::vector<Rational> z = s;
        if (layer.activation == Activation::Relu)
            for (auto & value : z)
                if (value < 0)
                    value = 0;
        trace.pre.push_back(std::move(s));
        trace.post.push_back(z);
        current = std::move(z);
    }
    return trace;
}

WitnessVerdict validate_witness(const Network & net, const Box & region, const SafetyProperty & prop,
    std::span<const Rational> x)
{
    if (x.size() != net.input_dim)
        return {false, "dimension"};
    if (! region.contains(x))
        return {false, "region"};
    const auto trace = forward_eval(net, x);
    if (prop.evaluate(trace.outputs()) < prop.violation_level())
        return {false, "property"};
    return {true, {}};
}

namespace {

Rational rational_field(const json & j, const std::string & what)
{
    if (! j.is_string())
        throw ParseError(what + ": numbers must be strings of the form \"p/q\" or integers");
    return parse_rational(j.get<std::string>());
}

std::vector<Rational> rational_vector(const json & j, const std::string & what)
{
    if (! j.is_array())
        throw ParseError(what + ": expected an array");
    std::vector<Rational> out;
    for (const auto & e : j)
        out.push_back(rational_field(e, what));
    return out;
}

const json & required(const json & doc, const char * key)
{
    if (! doc.contains(key))
        throw ParseError(std::string("missing field '") + key + "'");
    return doc.at(key);
}

} // namespace

Problem parse_problem_text(const std::string & text)
{
    json doc;
    try {
        doc = json::parse(text);
    }
    catch (const json::parse_error & e) {
        throw ParseError(std::string("malformed problem JSON: ") + e.what());
    }
    if (! doc.is_object())
        throw ParseError("problem document must be a JSON object");

    Problem p;
    const auto & weights = required(doc, "weights");
    const auto & biases = required(doc, "biases");
    const auto & activations = required(doc, "activations");
    if (! weights.is_array() || ! biases.is_array() || ! activations.is_array())
        throw ParseError("weights, biases and activations must be arrays");
    if (weights.size() != biases.size() || weights.size() != activations.size())
        throw DimensionError("weights, biases and activations must have one entry per layer");

    for (std::size_t i = 0; i < weights.size(); ++i) {
        Layer layer;
        if (! weights[i].is_array())
            throw ParseError("weights[" + std::to_string(i) + "] must be a matrix");
        for (const auto & row : weights[i])
            layer.weights.push_back(rational_vector(row, "weights"));
        layer.bias = rational_vector(biases[i], "biases");
        const auto act = activations[i].is_string() ? activations[i].get<std::string>() : std::string{};
        if (act == "relu")
            layer.activation = Activation::Relu;
        else if (act == "identity")
            layer.activation = Activation::Identity;
        else
            throw ParseError("unknown activation '" + act + "'");
        p.net.layers.push_back(std::move(layer));
    }

    p.region.lower = rational_vector(required(doc, "input_lower"), "input_lower");
    p.region.upper = rational_vector(required(doc, "input_upper"), "input_upper");
    if (p.region.lower.size() != p.region.upper.size())
        throw DimensionError("input_lower and input_upper differ in length");
    p.net.input_dim = p.region.lower.size();
    if (! p.net.layers.empty() && p.net.layers.front().in_dim() != p.net.input_dim)
        throw DimensionError("first layer expects " + std::to_string(p.net.layers.front().in_dim())
            + " inputs but the region has " + std::to_string(p.net.input_dim));
    p.net.validate();
    for (std::size_t k = 0; k < p.region.dim(); ++k)
        if (p.region.lower[k] > p.region.upper[k])
            throw ValueError("input_lower exceeds input_upper at index " + std::to_string(k));

    const auto & margin = required(doc, "margin");
    if (! margin.is_object() || margin.empty())
        throw ParseError("margin must be a non-empty object mapping output index to coefficient");
    for (const auto & [key, value] : margin.items()) {
        std::size_t idx = 0;
        try {
            std::size_t used = 0;
            idx = std::stoul(key, &used);
            if (used != key.size())
                throw std::invalid_argument(key);
        }
        catch (const std::exception &) {
            throw ParseError("margin key '" + key + "' is not an output index");
        }
        if (idx >= p.net.output_dim())
            throw DimensionError("margin refers to output " + key + " of " + std::to_string(p.net.output_dim()));
        auto c = rational_field(value, "margin");
        if (c != 0)
            p.property.margin[idx] = c;
    }
    if (p.property.margin.empty())
        throw ValueError("margin has only zero coefficients");
    p.property.threshold = rational_field(required(doc, "threshold"), "threshold");
    p.property.epsilon = rational_field(required(doc, "epsilon"), "epsilon");
    if (p.property.epsilon < 0)
        throw ValueError("epsilon must be non-negative");
    return p;
}

Problem parse_problem(const std::filesystem::path & path)
{
    std::ifstream in(path, std::ios::binary);
    if (! in)
        throw std::filesystem::filesystem_error("cannot open problem file", path,
            std::make_error_code(std::errc::no_such_file_or_directory));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_problem_text(buffer.str());
}

std::string canonical_problem_text(const Problem & p)
{
    auto vec = [](const std::vector<Rational> & v) {
        json a = json::array();
        for (const auto & q : v)
            a.push_back(format_rational(q));
        return a;
    };
    json doc;
    json weights = json::array(), biases = json::array(), acts = json::array();
    for (const auto & layer : p.net.layers) {
        json m = json::array();
        for (const auto & row : layer.weights)
            m.push_back(vec(row));
        weights.push_back(m);
        biases.push_back(vec(layer.bias));
        acts.push_back(layer.activation == Activation::Relu ? "relu" : "identity");
    }
    doc["weights"] = weights;
    doc["biases"] = biases;
    doc["activations"] = acts;
    doc["input_lower"] = vec(p.region.lower);
    doc["input_upper"] = vec(p.region.upper);
    json margin = json::object();
    for (const auto & [j, c] : p.property.margin)
        margin[std::to_string(j)] = format_rational(c);
    doc["margin"] = margin;
    doc["threshold"] = format_rational(p.property.threshold);
    doc["epsilon"] = format_rational(p.property.epsilon);
    return doc.dump();
}

std::string problem_digest(const Problem & p)
{
    const auto text = canonical_problem_text(p);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i)
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

} // namespace certnn
