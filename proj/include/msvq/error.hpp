// Copyright 2026 The msvq Authors.
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

namespace msvq {

enum class ErrorKind {
  ZeroVector,
  DimMismatch,
  EmptyInput,
  BatchMismatch,
  NonPositiveTemperature,
  BatchTooSmall,
  CodebookTooSmall,
  MissingAlignTerm,
  CorruptContainer,
  InvalidSpec,
  ConfigError,
  MissingSpecific,
  IncompleteTrace,
  ShapeMismatch,
  MissingPrototype,
  DegenerateLabels,
  Io,
};

const char* to_string(ErrorKind kind);

// Every library failure is reported through this type; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::BatchMismatch: return "BatchMismatch";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::CodebookTooSmall: return "CodebookTooSmall";
    case ErrorKind::MissingAlignTerm: return "MissingAlignTerm";
    case ErrorKind::CorruptContainer: return "CorruptContainer";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingSpecific: return "MissingSpecific";
    case ErrorKind::IncompleteTrace: return "IncompleteTrace";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingPrototype: return "MissingPrototype";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace msvq
