#pragma once

#include <certnn/rational.hpp>

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace certnn {

/// Sparse linear form over variable indices; never stores zero coefficients.
using LinearExpr = std::map<std::size_t, Rational>;

/// Adds `scale * source` into `target`, dropping entries that cancel.
void add_scaled(LinearExpr & target, const LinearExpr & source, const Rational & scale);
LinearExpr negated(const LinearExpr & e);
Rational evaluate(const LinearExpr & e, std::span<const Rational> v);
std::string format_expr(const LinearExpr & e);

/// Stable identifier of one normalized inequality: 2 * constraint id for the
/// constraint as written, 2 * id + 1 for the mirrored half of an equality.
using RowKey = std::uint64_t;

inline RowKey row_key(std::uint64_t constraint_id, bool mirrored)
{
    return 2 * constraint_id + (mirrored ? 1 : 0);
}

struct NormalizedRow
{
    LinearExpr coeffs; // row <= rhs
    Rational rhs;
    RowKey key = 0;
};

/// Pure inequality system A v <= b with provenance keys per row.
class NormalizedSystem
{
public:
    NormalizedSystem() = default;
    explicit NormalizedSystem(std::size_t num_vars) : _num_vars(num_vars) {}

    void add_row(NormalizedRow row);

    std::size_t num_vars() const { return _num_vars; }
    std::size_t num_rows() const { return _rows.size(); }
    const std::vector<NormalizedRow> & rows() const { return _rows; }
    const NormalizedRow & row(std::size_t i) const { return _rows[i]; }

    /// Position of the row with this key. Throws UnknownRow.
    std::size_t position(RowKey key) const;
    bool contains(RowKey key) const { return _position.contains(key); }

    std::size_t nonzeros() const;
    bool satisfied_by(std::span<const Rational> v) const;

private:
    std::size_t _num_vars = 0;
    std::vector<NormalizedRow> _rows;
    std::unordered_map<RowKey, std::size_t> _position;
};

/// Sparse multiplier vector over row keys.
using Multipliers = std::vector<std::pair<RowKey, Rational>>;

} // namespace certnn
