#pragma once

#include <openssl/evp.h>

#include <string>

#include "peel/bytes.hpp"

namespace peel {

inline std::string digest_hex(ByteView data, const EVP_MD* md) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  static const unsigned char empty = 0;
  const unsigned char* p = data.empty() ? &empty : data.data();
  EVP_Digest(p, data.size(), out, &n, md, nullptr);
  return to_hex(ByteView(out, n));
}

inline std::string sha256_hex(ByteView data) { return digest_hex(data, EVP_sha256()); }
inline std::string md5_hex(ByteView data) { return digest_hex(data, EVP_md5()); }

}  // namespace peel
