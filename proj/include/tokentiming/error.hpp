#pragma once

#include <stdexcept>
#include <string>

namespace tokentiming {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something outside an operation's domain.
class InputError : public Error {
 public:
  using Error::Error;
};

// Sakoe-Chiba window too narrow to connect (1,1) to (m,n).
class BandError : public Error {
 public:
  using Error::Error;
};

// Draft and target vocabularies share no surface, so TLI cannot project.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

// Enumeration or brute-force search would exceed its configured budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Strategy requires a model pairing it cannot work with (e.g. SD across vocabularies).
class InterfaceError : public Error {
 public:
  using Error::Error;
};

class DegenerateVocabularyError : public Error {
 public:
  using Error::Error;
};

}  // namespace tokentiming
