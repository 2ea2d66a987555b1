/*
 * Copyright 2026 The ppgrisk Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PPGRISK_ERRORS_H_
#define PPGRISK_ERRORS_H_

#include <stdexcept>
#include <string>

namespace ppgrisk {

// Base of every error raised by the library. The CLI maps the concrete
// subclass onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed files, invalid configuration, unknown names.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed cell in a CSV input. Always names the row and column.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t row, const std::string& column,
             const std::string& detail)
      : ValidationError("row " + std::to_string(row) + ", column \"" + column +
                        "\": " + detail),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

// A pipeline stage was invoked before the stage producing its input.
class DependencyError : public Error {
 public:
  using Error::Error;
};

// Non-finite objective, divergent training, singular systems.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppgrisk

#endif  // PPGRISK_ERRORS_H_
