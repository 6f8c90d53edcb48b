// latrescore/error.hpp

// Copyright 2026 The latrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LATRESCORE_ERROR_HPP_
#define LATRESCORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace latrescore {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Configuration / argument errors (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Internal failures such as exhausted retries (CLI exit code 4).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

// --- lattice structure ---

class CyclicLatticeError : public DataError {
 public:
  using DataError::DataError;
};

class NoInitialStateError : public DataError {
 public:
  using DataError::DataError;
};

class NoFinalStateError : public DataError {
 public:
  using DataError::DataError;
};

class AlreadyAugmentedError : public DataError {
 public:
  using DataError::DataError;
};

class TooManyPathsError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedLatticeError : public DataError {
 public:
  using DataError::DataError;
};

// Lattice too large for the positional embedding table.
class PositionOverflowError : public DataError {
 public:
  using DataError::DataError;
};

// --- text formats ---

class SyntaxError : public DataError {
 public:
  SyntaxError(int line, int col, const std::string &msg)
      : DataError("line " + std::to_string(line) + ", col " +
                  std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
  int line;
  int col;
};

class DuplicateUtteranceIdError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownSymbolError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateTokenError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateIdError : public DataError {
 public:
  using DataError::DataError;
};

class ReservedIdViolationError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedArpaError : public DataError {
 public:
  using DataError::DataError;
};

// --- metrics / training data ---

class MissingReferenceError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyCorpusError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

// --- tensor ---

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class NonFiniteValueError : public Error {
 public:
  using Error::Error;
};

class DisconnectedLossError : public Error {
 public:
  using Error::Error;
};

// --- generation ---

class FrameCountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class UnpronounceableWordError : public DataError {
 public:
  using DataError::DataError;
};

// All decoder tokens pruned; caller may retry with a larger beam.
class DeadEndError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class MismatchedUtteranceSetsError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace latrescore

#endif  // LATRESCORE_ERROR_HPP_
