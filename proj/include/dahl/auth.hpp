#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dahl {

using Bytes = std::vector<std::uint8_t>;

enum class MacAlgorithm : std::uint8_t {
  kHmacSha256 = 1,
  kHmacMd5 = 2,
};

enum class DigestAlgorithm : std::uint8_t { kSha256, kMd5 };

std::string_view mac_algorithm_name(MacAlgorithm a);
// Accepts "hmac-sha256" and "hmac-md5".
MacAlgorithm parse_mac_algorithm(std::string_view name);
bool is_known_mac_algorithm(std::uint8_t id);
std::size_t mac_length(MacAlgorithm a);

struct Mac {
  MacAlgorithm algorithm = MacAlgorithm::kHmacSha256;
  Bytes bytes;
};

class MissingKeyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pairwise symmetric keys: key(a, b) == key(b, a).
class KeyStore {
 public:
  explicit KeyStore(MacAlgorithm algorithm = MacAlgorithm::kHmacSha256) : algorithm_(algorithm) {}

  // Key file: one `nodeA nodeB hexkey` per line; blank lines and lines
  // starting with '#' are skipped.
  static KeyStore parse(std::string_view text, MacAlgorithm algorithm = MacAlgorithm::kHmacSha256);
  static KeyStore load(const std::string& path, MacAlgorithm algorithm = MacAlgorithm::kHmacSha256);

  void add(const std::string& a, const std::string& b, Bytes key);
  const Bytes* find(std::string_view a, std::string_view b) const;
  bool has_key(std::string_view a, std::string_view b) const { return find(a, b) != nullptr; }
  MacAlgorithm algorithm() const { return algorithm_; }
  std::size_t size() const { return keys_.size(); }

 private:
  MacAlgorithm algorithm_;
  std::map<std::pair<std::string, std::string>, Bytes, std::less<>> keys_;
};

// MAC under key(from, to) over the sender field and the payload. Throws
// MissingKeyError.
Mac sign(const KeyStore& ks, std::string_view from, std::string_view to, std::string_view sender_bytes,
         std::string_view payload_bytes);

// Recomputes under key(claimed_sender, receiver) and compares in constant
// time. A missing key or foreign algorithm verifies false.
bool verify(const KeyStore& ks, std::string_view claimed_sender, std::string_view receiver,
            std::string_view sender_bytes, std::string_view payload_bytes, const Mac& mac);

Bytes digest(std::string_view payload, DigestAlgorithm algorithm = DigestAlgorithm::kSha256);

// First 8 digest bytes, big-endian, reduced modulo 2^bits (bits <= 64).
std::uint64_t digest_id(std::string_view payload, unsigned bits, DigestAlgorithm algorithm = DigestAlgorithm::kSha256);

std::string to_hex(const Bytes& b);
// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

// Process-wide counts of MAC computations.
struct AuthCounters {
  std::uint64_t signs = 0;
  std::uint64_t verifies = 0;
};
AuthCounters auth_counters();
void reset_auth_counters();

}  // namespace dahl
