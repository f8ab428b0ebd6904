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

#ifndef GDRIFT_CHECKPOINT_H_
#define GDRIFT_CHECKPOINT_H_

// Binary checkpoint container, format version 1. All integers and doubles are
// little-endian.
//
//   offset  field
//   0       magic "GDRIFTCK" (8 bytes)
//   8       u32 format version (= 1)
//   12      i32 vocab_size, model_dim, n_layers, n_heads, ffn_dim, max_seq_len
//   36      u64 rng_seed
//   44      u64 metadata length L, then L bytes of UTF-8 metadata (JSON text)
//   ...     u64 tensor count N, then N records sorted by name:
//             u64 name length, name bytes, u64 rank, rank x u64 dims,
//             prod(dims) x f64 row-major values
//   end-64  64 ASCII hex chars: SHA-256 of every preceding byte
//
// Load(Save(p)) reproduces every tensor bitwise.

#include <filesystem>
#include <string>
#include <string_view>

#include "gdrift/model.h"
#include "gdrift/tensor.h"

namespace gdrift {

inline constexpr std::string_view kCheckpointMagic = "GDRIFTCK";
inline constexpr unsigned kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  TensorMap params;
  std::string metadata;  // free-form JSON object text
};

std::string SerializeCheckpoint(const Checkpoint& checkpoint);
// Throws IntegrityError when the header is malformed or the payload does not
// match its checksum.
Checkpoint ParseCheckpoint(std::string_view bytes);

void SaveCheckpoint(const std::filesystem::path& path,
                    const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace gdrift

#endif  // GDRIFT_CHECKPOINT_H_
