// Copyright 2026 The M3D Attack Lab Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace m3d {

// Base of every error raised by the library. The C API maps each subclass to
// a distinct status code; the CLI maps those to process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or incomplete configuration input (missing key, duplicate key,
// unparsable value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value parsed fine but lies outside its permitted range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint manifest/payload inconsistency.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ArchMismatchError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace m3d
