// Copyright 2026 The gdrift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GDRIFT_ERROR_H_
#define GDRIFT_ERROR_H_

#include <stdexcept>
#include <string>

namespace gdrift {

// Root of every error raised by the library. Subclasses carry the category so
// callers (and the CLI) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A tensor primitive received operands of incompatible shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value produced by a primitive was NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied input (empty prompt, bad fractions, unknown template).
class InputError : public Error {
 public:
  using Error::Error;
};

// Token id or similar index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Caller violated an API contract (non-scalar loss, mismatched name sets).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Checksum or configuration mismatch found while restoring or loading.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Training diverged. `epoch()` is the zero-based epoch that produced it.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Dataset construction impossible with the requested parameters.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

}  // namespace gdrift

#endif  // GDRIFT_ERROR_H_
