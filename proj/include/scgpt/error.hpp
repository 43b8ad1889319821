// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scgpt {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong" catch this; the subclasses carry extra context.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed textual input. `position` is a 0-based character offset into the
// input; `token` is the offending token text (may be empty at end of input).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position, std::string token)
      : Error(what), position_(position), token_(std::move(token)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& token() const noexcept { return token_; }

 private:
  std::size_t position_;
  std::string token_;
};

class UnknownSlotError : public Error {
 public:
  using Error::Error;
};

class AmbiguousSlotError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericFault : public Error {
 public:
  using Error::Error;
};

class ContextOverflow : public Error {
 public:
  ContextOverflow(const std::string& what, std::size_t length, std::size_t limit)
      : Error(what), length_(length), limit_(limit) {}
  std::size_t length() const noexcept { return length_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t length_;
  std::size_t limit_;
};

class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class InsufficientGroupsError : public Error {
 public:
  using Error::Error;
};

class GrammarError : public Error {
 public:
  using Error::Error;
};

}  // namespace scgpt
