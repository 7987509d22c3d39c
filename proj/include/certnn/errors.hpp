#pragma once

#include <stdexcept>
#include <string>

namespace certnn {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input syntax (problem or proof file).
class ParseError : public Error
{
public:
    using Error::Error;
};

/// Inconsistent shapes between layers, regions and vectors.
class DimensionError : public Error
{
public:
    using Error::Error;
};

/// Well-formed but semantically invalid values (zero denominator, empty box, ...).
class ValueError : public Error
{
public:
    using Error::Error;
};

/// A certificate cites a row id that the system does not contain.
class UnknownRow : public Error
{
public:
    using Error::Error;
};

class UnknownUnit : public Error
{
public:
    using Error::Error;
};

/// The brute-force oracle refuses problems with too many unstable units.
class CapExceeded : public Error
{
public:
    using Error::Error;
};

} // namespace certnn
