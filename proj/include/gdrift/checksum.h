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

#ifndef GDRIFT_CHECKSUM_H_
#define GDRIFT_CHECKSUM_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "gdrift/tensor.h"

namespace gdrift {

// Incremental SHA-256. Digest() may be called once.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void Update(std::span<const unsigned char> bytes);
  void Update(std::string_view text);
  void UpdateU64(std::uint64_t value);  // little-endian
  // Lowercase hex digest.
  std::string HexDigest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string Sha256Hex(std::string_view bytes);
std::string Sha256File(const std::filesystem::path& path);

// Content checksum over every tensor's header (name and shape) and its raw
// IEEE-754 bytes.
std::string TensorChecksum(const TensorMap& tensors);

}  // namespace gdrift

#endif  // GDRIFT_CHECKSUM_H_
