#include "peel/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "peel/error.hpp"

namespace peel {

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

// nlohmann::json objects are std::map-backed, so dump() already emits keys in
// sorted order.
std::string canonical_json(const nlohmann::json& doc) { return doc.dump(); }

std::string digest_json(const nlohmann::json& doc) { return sha256_hex(canonical_json(doc)); }

}  // namespace peel
