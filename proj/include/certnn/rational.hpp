#pragma once

#include <gmpxx.h>

#include <string>
#include <string_view>

namespace certnn {

// mpq_class keeps every value canonical (lowest terms, positive denominator)
// after each arithmetic operation.
using Rational = mpq_class;

/// Parses "p/q" or an integer string. Throws ParseError / ValueError.
/// With `require_canonical` the text must be exactly what format_rational
/// would print ("2/4", "0/3", "007/1" and bare "3" are all rejected).
Rational parse_rational(std::string_view text, bool require_canonical = false);

/// Always "p/q", including "p/1" for integers.
std::string format_rational(const Rational & q);

inline int sign(const Rational & q) { return sgn(q); }

} // namespace certnn
