#pragma once

#include <certnn/rational.hpp>

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace certnn {

enum class Activation
{
    Relu,
    Identity
};

struct Layer
{
    std::vector<std::vector<Rational>> weights; // out_dim rows, in_dim columns
    std::vector<Rational> bias;
    Activation activation = Activation::Relu;

    std::size_t out_dim() const { return bias.size(); }
    std::size_t in_dim() const { return weights.empty() ? 0 : weights.front().size(); }
};

struct Network
{
    std::size_t input_dim = 0;
    std::vector<Layer> layers;

    std::size_t output_dim() const { return layers.empty() ? input_dim : layers.back().out_dim(); }

    /// Throws DimensionError / ValueError when shapes do not chain or a
    /// non-final layer is not ReLU.
    void validate() const;
};

/// Axis-aligned input region.
struct Box
{
    std::vector<Rational> lower;
    std::vector<Rational> upper;

    std::size_t dim() const { return lower.size(); }
    bool contains(std::span<const Rational> x) const;
    bool contains(const Box & inner) const;

    friend bool operator==(const Box &, const Box &) = default;
};

/// Safety holds iff margin(outputs) <= threshold. The negated query is the
/// non-strict margin(outputs) >= threshold + epsilon.
struct SafetyProperty
{
    std::map<std::size_t, Rational> margin; // output index -> coefficient
    Rational threshold;
    Rational epsilon;

    Rational violation_level() const { return threshold + epsilon; }
    Rational evaluate(std::span<const Rational> outputs) const;
};

struct Problem
{
    Network net;
    Box region;
    SafetyProperty property;
};

/// A ReLU unit: zero-based layer and neuron indices.
struct UnitId
{
    int layer = 0;
    int neuron = 0;

    auto operator<=>(const UnitId &) const = default;
};

std::string to_string(const UnitId & u);

/// Index assignment for the global variable vector: inputs, then per layer
/// pre-activations followed by post-activations (identity layers alias the
/// post-activation to the pre-activation), then the margin auxiliary if one
/// is needed.
class VariableLayout
{
public:
    VariableLayout(const Network & net, const SafetyProperty & prop);

    std::size_t size() const { return _size; }
    std::size_t input(std::size_t k) const { return _input_base + k; }
    std::size_t pre(std::size_t layer, std::size_t neuron) const { return _pre_base[layer] + neuron; }
    std::size_t post(std::size_t layer, std::size_t neuron) const { return _post_base[layer] + neuron; }
    std::size_t pre(UnitId u) const { return pre(u.layer, u.neuron); }
    std::size_t post(UnitId u) const { return post(u.layer, u.neuron); }
    std::size_t output(std::size_t j) const { return post(_post_base.size() - 1, j); }
    std::size_t layer_count() const { return _pre_base.size(); }
    std::size_t input_dim() const { return _input_dim; }

    /// The single coordinate carrying the margin value; an output variable
    /// when the margin is a unit-coefficient output, the auxiliary otherwise.
    std::size_t margin_var() const { return _margin_var; }
    bool has_margin_aux() const { return _has_aux; }

    /// The margin as a linear form over the variable vector.
    const std::map<std::size_t, Rational> & margin_form() const { return _margin_form; }

    const std::vector<UnitId> & relu_units() const { return _relu_units; }
    std::optional<UnitId> unit_of_var(std::size_t var) const;
    bool is_relu_unit(UnitId u) const;

    std::string name(std::size_t var) const;

private:
    std::size_t _size = 0;
    std::size_t _input_base = 0;
    std::size_t _input_dim = 0;
    std::vector<std::size_t> _pre_base;
    std::vector<std::size_t> _post_base;
    std::vector<std::size_t> _layer_width;
    std::vector<bool> _layer_relu;
    std::vector<UnitId> _relu_units;
    std::size_t _margin_var = 0;
    bool _has_aux = false;
    std::map<std::size_t, Rational> _margin_form;
};

VariableLayout build_layout(const Network & net, const SafetyProperty & prop);

/// Exact activations for one input.
struct Trace
{
    std::vector<std::vector<Rational>> pre;  // per layer
    std::vector<std::vector<Rational>> post; // per layer; equals pre for identity layers
    const std::vector<Rational> & outputs() const { return post.back(); }

    /// Lays the trace out as a full variable vector, including the margin auxiliary.
    std::vector<Rational> to_vector(const VariableLayout & layout, const SafetyProperty & prop,
        std::span<const Rational> x) const;
};

Trace forward_eval(const Network & net, std::span<const Rational> x);

struct WitnessVerdict
{
    bool accepted = false;
    std::string reason; // "region", "property" or "dimension" when rejected

    explicit operator bool() const { return accepted; }
};

WitnessVerdict validate_witness(const Network & net, const Box & region, const SafetyProperty & prop,
    std::span<const Rational> x);
inline WitnessVerdict validate_witness(const Problem & p, std::span<const Rational> x)
{
    return validate_witness(p.net, p.region, p.property, x);
}

Problem parse_problem(const std::filesystem::path & path);
Problem parse_problem_text(const std::string & text);

/// Canonical JSON text of a problem (rationals as "p/q", fixed key order).
std::string canonical_problem_text(const Problem & p);
/// Hex SHA-256 of the canonical problem text.
std::string problem_digest(const Problem & p);

} // namespace certnn
