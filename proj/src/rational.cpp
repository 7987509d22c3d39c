#include <certnn/errors.hpp>
#include <certnn/rational.hpp>

#include <cctype>

namespace certnn {

namespace {

bool is_integer_literal(std::string_view s)
{
    if (s.empty())
        return false;
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size())
        return false;
    for (; i < s.size(); ++i)
        if (! std::isdigit(static_cast<unsigned char>(s[i])))
            return false;
    return true;
}

} // namespace

Rational parse_rational(std::string_view text, bool require_canonical)
{
    const auto slash = text.find('/');
    const std::string_view num = text.substr(0, slash);
    const std::string_view den = slash == std::string_view::npos ? std::string_view{"1"} : text.substr(slash + 1);

    if (! is_integer_literal(num) || ! is_integer_literal(den) || den[0] == '-' || den[0] == '+')
        throw ParseError("not a rational literal: '" + std::string(text) + "'");

    mpz_class p(std::string(num[0] == '+' ? num.substr(1) : num), 10);
    mpz_class q(std::string(den), 10);
    if (q == 0)
        throw ValueError("zero denominator in '" + std::string(text) + "'");

    Rational r(p, q);
    r.canonicalize();
    if (require_canonical && format_rational(r) != text)
        throw ParseError("non-canonical rational '" + std::string(text) + "'");
    return r;
}

std::string format_rational(const Rational & q)
{
    return q.get_num().get_str() + "/" + q.get_den().get_str();
}

} // namespace certnn
