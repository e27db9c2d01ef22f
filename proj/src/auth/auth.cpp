#include "dahl/auth.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <atomic>
#include <fstream>
#include <sstream>

namespace dahl {

namespace {

std::atomic<std::uint64_t> g_signs{0};
std::atomic<std::uint64_t> g_verifies{0};

const EVP_MD* mac_md(MacAlgorithm a) {
  switch (a) {
    case MacAlgorithm::kHmacSha256: return EVP_sha256();
    case MacAlgorithm::kHmacMd5: return EVP_md5();
  }
  throw std::invalid_argument("unknown MAC algorithm");
}

std::pair<std::string, std::string> pair_key(std::string_view a, std::string_view b) {
  if (b < a) std::swap(a, b);
  return {std::string(a), std::string(b)};
}

// u16 sender length, sender, payload: the length prefix keeps the split
// between sender and payload unambiguous.
Bytes mac_input(std::string_view sender, std::string_view payload) {
  if (sender.size() > 0xFFFF) throw std::invalid_argument("sender too long");
  Bytes in;
  in.reserve(2 + sender.size() + payload.size());
  in.push_back(static_cast<std::uint8_t>(sender.size() >> 8));
  in.push_back(static_cast<std::uint8_t>(sender.size() & 0xFF));
  in.insert(in.end(), sender.begin(), sender.end());
  in.insert(in.end(), payload.begin(), payload.end());
  return in;
}

Bytes compute(MacAlgorithm alg, const Bytes& key, std::string_view sender, std::string_view payload) {
  Bytes in = mac_input(sender, payload);
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (!HMAC(mac_md(alg), key.data(), static_cast<int>(key.size()), in.data(), in.size(), out.data(), &len)) {
    throw std::runtime_error("HMAC computation failed");
  }
  out.resize(len);
  return out;
}

}  // namespace

std::string_view mac_algorithm_name(MacAlgorithm a) {
  switch (a) {
    case MacAlgorithm::kHmacSha256: return "hmac-sha256";
    case MacAlgorithm::kHmacMd5: return "hmac-md5";
  }
  return "unknown";
}

MacAlgorithm parse_mac_algorithm(std::string_view name) {
  if (name == "hmac-sha256") return MacAlgorithm::kHmacSha256;
  if (name == "hmac-md5") return MacAlgorithm::kHmacMd5;
  throw std::invalid_argument("unknown MAC algorithm '" + std::string(name) + "'");
}

bool is_known_mac_algorithm(std::uint8_t id) { return id == 1 || id == 2; }

std::size_t mac_length(MacAlgorithm a) { return static_cast<std::size_t>(EVP_MD_get_size(mac_md(a))); }

KeyStore KeyStore::parse(std::string_view text, MacAlgorithm algorithm) {
  KeyStore ks(algorithm);
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string a, b, hex, extra;
    if (!(fields >> a) || a[0] == '#') continue;
    if (!(fields >> b >> hex) || (fields >> extra)) {
      throw std::invalid_argument("key file line " + std::to_string(lineno) + ": expected `nodeA nodeB hexkey`");
    }
    try {
      ks.add(a, b, from_hex(hex));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("key file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ks;
}

KeyStore KeyStore::load(const std::string& path, MacAlgorithm algorithm) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open key file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), algorithm);
}

void KeyStore::add(const std::string& a, const std::string& b, Bytes key) {
  if (key.empty()) throw std::invalid_argument("empty key");
  keys_[pair_key(a, b)] = std::move(key);
}

const Bytes* KeyStore::find(std::string_view a, std::string_view b) const {
  auto it = keys_.find(pair_key(a, b));
  return it == keys_.end() ? nullptr : &it->second;
}

Mac sign(const KeyStore& ks, std::string_view from, std::string_view to, std::string_view sender_bytes,
         std::string_view payload_bytes) {
  const Bytes* key = ks.find(from, to);
  if (!key) throw MissingKeyError("no key for " + std::string(from) + " <-> " + std::string(to));
  g_signs.fetch_add(1, std::memory_order_relaxed);
  return Mac{ks.algorithm(), compute(ks.algorithm(), *key, sender_bytes, payload_bytes)};
}

bool verify(const KeyStore& ks, std::string_view claimed_sender, std::string_view receiver,
            std::string_view sender_bytes, std::string_view payload_bytes, const Mac& mac) {
  g_verifies.fetch_add(1, std::memory_order_relaxed);
  const Bytes* key = ks.find(claimed_sender, receiver);
  if (!key || mac.algorithm != ks.algorithm()) return false;
  Bytes expect = compute(mac.algorithm, *key, sender_bytes, payload_bytes);
  return expect.size() == mac.bytes.size() && CRYPTO_memcmp(expect.data(), mac.bytes.data(), expect.size()) == 0;
}

Bytes digest(std::string_view payload, DigestAlgorithm algorithm) {
  const EVP_MD* md = algorithm == DigestAlgorithm::kMd5 ? EVP_md5() : EVP_sha256();
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (!EVP_Digest(payload.data(), payload.size(), out.data(), &len, md, nullptr)) {
    throw std::runtime_error("digest computation failed");
  }
  out.resize(len);
  return out;
}

std::uint64_t digest_id(std::string_view payload, unsigned bits, DigestAlgorithm algorithm) {
  if (bits == 0 || bits > 64) throw std::invalid_argument("identifier width must be 1..64 bits");
  Bytes d = digest(payload, algorithm);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | d[i];
  return bits == 64 ? v : v & ((std::uint64_t{1} << bits) - 1);
}

std::string to_hex(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (std::uint8_t x : b) {
    s.push_back(digits[x >> 4]);
    s.push_back(digits[x & 0xF]);
  }
  return s;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2) throw std::invalid_argument("hex string has odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument(std::string("bad hex digit '") + c + "'");
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
  }
  return out;
}

AuthCounters auth_counters() { return {g_signs.load(), g_verifies.load()}; }

void reset_auth_counters() {
  g_signs = 0;
  g_verifies = 0;
}

}  // namespace dahl
