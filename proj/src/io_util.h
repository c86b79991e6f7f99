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

// File and CSV helpers shared by the loaders. Not part of the public API.

#ifndef HEMS_SRC_IO_UTIL_H_
#define HEMS_SRC_IO_UTIL_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hems::io {

std::string read_file(const std::filesystem::path& path);
// Creates parent directories; throws LoadError on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view line, char sep);
// Non-empty, trimmed lines with their 1-based line numbers.
std::vector<std::pair<int, std::string_view>> lines(std::string_view text);

// Strict parsers: the whole field must be consumed and the value finite.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, int& out);
bool parse_u64(std::string_view s, unsigned long long& out);

}  // namespace hems::io

#endif  // HEMS_SRC_IO_UTIL_H_
