// Copyright 2026 The AICT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace aict {

// Invalid module configuration or tensor shape that violates a layer contract.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input (image too small, unreadable file, out-of-range argument).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Container magic/version mismatch or malformed header.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Entropy-coded payload that cannot be decoded (truncation, corruption).
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Autoregressive protocol violated (wrong number of conditioning slices).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aict
