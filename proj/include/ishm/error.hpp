#pragma once

#include <stdexcept>
#include <string>

namespace ishm {

// Base for every error the library raises. Subclasses exist so callers (the
// CLI in particular) can map failures onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidDistribution : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class HashMismatch : public Error {
public:
    using Error::Error;
};

// Non-finite value produced by a numeric op (checked in debug builds).
class NumericError : public Error {
public:
    using Error::Error;
};

class UndefinedMetric : public Error {
public:
    using Error::Error;
};

}  // namespace ishm
