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

#include "gdrift/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>

#include "gdrift/checksum.h"
#include "gdrift/error.h"
#include "gdrift/io.h"

namespace gdrift {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr std::size_t kDigestChars = 64;

template <typename T>
void Put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view Take(std::size_t n) {
    Need(n);
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw IntegrityError("checkpoint: truncated at byte " +
                           std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SerializeCheckpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic);
  Put<std::uint32_t>(out, kCheckpointVersion);
  const ModelConfig& c = ck.config;
  for (int v : {c.vocab_size, c.model_dim, c.n_layers, c.n_heads, c.ffn_dim,
                c.max_seq_len}) {
    Put<std::int32_t>(out, v);
  }
  Put<std::uint64_t>(out, c.rng_seed);
  Put<std::uint64_t>(out, ck.metadata.size());
  out += ck.metadata;
  Put<std::uint64_t>(out, ck.params.size());
  for (const auto& [name, t] : ck.params) {
    Put<std::uint64_t>(out, name.size());
    out += name;
    Put<std::uint64_t>(out, t.rank());
    for (std::size_t d : t.shape()) Put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data().data()),
               t.size() * sizeof(double));
  }
  out += Sha256Hex(out);
  return out;
}

Checkpoint ParseCheckpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + kDigestChars) {
    throw IntegrityError("checkpoint: file too short");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - kDigestChars);
  const std::string_view digest = bytes.substr(bytes.size() - kDigestChars);
  if (Sha256Hex(body) != digest) {
    throw IntegrityError("checkpoint: checksum mismatch");
  }
  Reader r(body);
  if (r.Take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw IntegrityError("checkpoint: bad magic");
  }
  const auto version = r.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IntegrityError("checkpoint: unsupported version " +
                         std::to_string(version));
  }
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.vocab_size = r.Get<std::int32_t>();
  c.model_dim = r.Get<std::int32_t>();
  c.n_layers = r.Get<std::int32_t>();
  c.n_heads = r.Get<std::int32_t>();
  c.ffn_dim = r.Get<std::int32_t>();
  c.max_seq_len = r.Get<std::int32_t>();
  c.rng_seed = r.Get<std::uint64_t>();
  ck.metadata = std::string(r.Take(r.Get<std::uint64_t>()));
  const auto count = r.Get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.Take(r.Get<std::uint64_t>()));
    const auto rank = r.Get<std::uint64_t>();
    if (rank > 8) throw IntegrityError("checkpoint: implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.Get<std::uint64_t>();
    const std::size_t n = ShapeSize(shape);
    std::string_view raw = r.Take(n * sizeof(double));
    std::vector<double> data(n);
    std::memcpy(data.data(), raw.data(), raw.size());
    ck.params.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw IntegrityError("checkpoint: trailing bytes");
  return ck;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  WriteFileAtomic(path, SerializeCheckpoint(ck));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return ParseCheckpoint(ReadFile(path));
}

}  // namespace gdrift
