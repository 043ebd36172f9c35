#pragma once

#include <stdexcept>
#include <string>

namespace forge {

/// Base for every error raised by the forge library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input is outside an operation's domain (zero-area object, empty set, ...).
class DegenerateInputError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace forge
