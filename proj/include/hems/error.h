// Copyright 2026 The DDT-HEMS Authors. All Rights Reserved.
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

#ifndef HEMS_ERROR_H_
#define HEMS_ERROR_H_

#include <stdexcept>
#include <string>

namespace hems {

// Invalid parameters or mismatched shapes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (e.g. action index out of
// range).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or missing input file. `line` is 0 when not line-specific.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, int line = 0)
      : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Training diverged (NaN/Inf loss or gradient).
// An input produced by an earlier pipeline stage is absent.
class MissingArtifactError : public LoadError {
 public:
  MissingArtifactError(const std::string& path, const std::string& producer)
      : LoadError("missing '" + path + "'; run `hems " + producer +
                  "` first to produce it"),
        path_(path),
        producer_(producer) {}
  const std::string& path() const { return path_; }
  const std::string& producer() const { return producer_; }

 private:
  std::string path_;
  std::string producer_;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line or config usage; reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hems

#endif  // HEMS_ERROR_H_
