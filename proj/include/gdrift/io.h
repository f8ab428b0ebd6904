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

#ifndef GDRIFT_IO_H_
#define GDRIFT_IO_H_

#include <filesystem>
#include <string>
#include <string_view>

namespace gdrift {

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes);
std::string ReadFile(const std::filesystem::path& path);

// Shortest decimal text that round-trips to the same double.
std::string FormatDouble(double value);

}  // namespace gdrift

#endif  // GDRIFT_IO_H_
