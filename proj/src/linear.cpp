#include <certnn/errors.hpp>
#include <certnn/linear.hpp>

namespace certnn {

void add_scaled(LinearExpr & target, const LinearExpr & source, const Rational & scale)
{
    if (scale == 0)
        return;
    for (const auto & [var, c] : source) {
        auto [it, inserted] = target.try_emplace(var, 0);
        it->second += scale * c;
        if (it->second == 0)
            target.erase(it);
    }
}

LinearExpr negated(const LinearExpr & e)
{
    LinearExpr out;
    for (const auto & [var, c] : e)
        out.emplace(var, -c);
    return out;
}

Rational evaluate(const LinearExpr & e, std::span<const Rational> v)
{
    Rational total = 0;
    for (const auto & [var, c] : e)
        total += c * v[var];
    return total;
}

std::string format_expr(const LinearExpr & e)
{
    std::string out;
    for (const auto & [var, c] : e) {
        if (! out.empty())
            out += " + ";
        out += format_rational(c) + "*v" + std::to_string(var);
    }
    return out.empty() ? "0" : out;
}

void NormalizedSystem::add_row(NormalizedRow row)
{
    for (const auto & [var, c] : row.coeffs)
        if (var >= _num_vars)
            _num_vars = var + 1;
    _position[row.key] = _rows.size();
    _rows.push_back(std::move(row));
}

std::size_t NormalizedSystem::position(RowKey key) const
{
    auto it = _position.find(key);
    if (it == _position.end())
        throw UnknownRow("row key " + std::to_string(key) + " is not part of the system");
    return it->second;
}

std::size_t NormalizedSystem::nonzeros() const
{
    std::size_t total = 0;
    for (const auto & r : _rows)
        total += r.coeffs.size();
    return total;
}

bool NormalizedSystem::satisfied_by(std::span<const Rational> v) const
{
    for (const auto & r : _rows)
        if (evaluate(r.coeffs, v) > r.rhs)
            return false;
    return true;
}

} // namespace certnn
