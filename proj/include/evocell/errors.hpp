#pragma once

#include <stdexcept>
#include <string>

namespace evocell {

// All library errors derive from Error so callers can catch the whole family.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CycleDetected : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct NonFiniteValue : Error {
  using Error::Error;
};
struct ArityMismatch : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct EmptyPopulation : Error {
  using Error::Error;
};
struct InsufficientPopulation : Error {
  using Error::Error;
};
struct InvalidRange : Error {
  using Error::Error;
};
struct StringTooShort : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace evocell
