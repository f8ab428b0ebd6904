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

#include "gdrift/checksum.h"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <fstream>

#include "gdrift/error.h"

namespace gdrift {

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr ||
      EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest initialisation failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(impl_->ctx); }

void Sha256::Update(std::span<const unsigned char> bytes) {
  if (bytes.empty()) return;
  EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
}

void Sha256::Update(std::string_view text) {
  Update(std::span(reinterpret_cast<const unsigned char*>(text.data()),
                   text.size()));
}

void Sha256::UpdateU64(std::uint64_t value) {
  std::array<unsigned char, 8> buf;
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  Update(buf);
}

std::string Sha256::HexDigest() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(impl_->ctx, md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string Sha256Hex(std::string_view bytes) {
  Sha256 h;
  h.Update(bytes);
  return h.HexDigest();
}

std::string Sha256File(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.Update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.HexDigest();
}

std::string TensorChecksum(const TensorMap& tensors) {
  static_assert(std::endian::native == std::endian::little,
                "checksums assume a little-endian host");
  Sha256 h;
  h.UpdateU64(tensors.size());
  for (const auto& [name, t] : tensors) {
    h.UpdateU64(name.size());
    h.Update(name);
    h.UpdateU64(t.rank());
    for (std::size_t d : t.shape()) h.UpdateU64(d);
    h.Update(std::span(reinterpret_cast<const unsigned char*>(t.data().data()),
                       t.size() * sizeof(double)));
  }
  return h.HexDigest();
}

}  // namespace gdrift
