#include <random>

#include "dahl/auth.hpp"
#include "dahl/envelope.hpp"
#include "doctest.h"
#include "support/properties.hpp"

using namespace dahl;
using dahl::testing::random_bytes;
using dahl::testing::random_term;

namespace {

KeyStore two_party() {
  KeyStore ks;
  ks.add("n1", "n2", from_hex("000102030405060708090a0b0c0d0e0f"));
  ks.add("n1", "n3", from_hex("ffeeddccbbaa99887766554433221100"));
  return ks;
}

}  // namespace

TEST_CASE("sign and verify") {
  KeyStore ks = two_party();
  Mac m = sign(ks, "n1", "n2", "n1", "request(r)");
  CHECK(m.algorithm == MacAlgorithm::kHmacSha256);
  CHECK(m.bytes.size() == 32);
  CHECK(verify(ks, "n1", "n2", "n1", "request(r)", m));
  // Symmetric lookup.
  CHECK(verify(ks, "n2", "n1", "n1", "request(r)", m));
  CHECK(to_hex(sign(ks, "n1", "n2", "n1", "request(r)").bytes) == to_hex(m.bytes));
  // Different key.
  CHECK_FALSE(verify(ks, "n1", "n3", "n1", "request(r)", m));
  // Payload or sender altered.
  CHECK_FALSE(verify(ks, "n1", "n2", "n1", "request(s)", m));
  CHECK_FALSE(verify(ks, "n1", "n2", "n4", "request(r)", m));
  // Missing key.
  CHECK_THROWS_AS(sign(ks, "n1", "n7", "n1", "x"), MissingKeyError);
  CHECK_FALSE(verify(ks, "n1", "n7", "n1", "x", m));
}

TEST_CASE("the sender/payload split is unambiguous") {
  KeyStore ks;
  ks.add("ab", "x", Bytes{1, 2, 3});
  ks.add("a", "x", Bytes{1, 2, 3});
  Mac m = sign(ks, "ab", "x", "ab", "c");
  CHECK_FALSE(verify(ks, "a", "x", "a", "bc", m));
}

TEST_CASE("MAC and digest values match reference computations") {
  // Reference MACs computed with Python's hmac module over
  // u16 sender length || sender || payload.
  KeyStore ks;
  ks.add("n1", "n2", Bytes{'J', 'e', 'f', 'e'});
  CHECK(to_hex(sign(ks, "n1", "n2", "", "what do ya want for nothing?").bytes) ==
        "ccc801e53886eafc301be889a1c319f24fc7c1bc85f194b844c8b0f3accf4649");
  CHECK(to_hex(sign(ks, "n1", "n2", "n1", "ping").bytes) ==
        "59c2359f6eb4297fd346a4c63ad8446ee38855238d0fa4445fb10ff21e45f532");
  KeyStore md5(MacAlgorithm::kHmacMd5);
  md5.add("n1", "n2", Bytes{'J', 'e', 'f', 'e'});
  CHECK(to_hex(sign(md5, "n1", "n2", "n1", "ping").bytes) == "93e2efbbff92c0d7d018ffc8d25fcae7");
  // Digest vectors (FIPS 180-2, RFC 1321).
  CHECK(to_hex(digest("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(digest("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(digest("", DigestAlgorithm::kMd5)) == "d41d8cd98f00b204e9800998ecf8427e");
  CHECK(to_hex(digest("abc", DigestAlgorithm::kMd5)) == "900150983cd24fb0d6963f7d28e17f72");
}

TEST_CASE("MD5 algorithm id") {
  KeyStore ks(MacAlgorithm::kHmacMd5);
  ks.add("a", "b", Bytes{9, 9});
  Mac m = sign(ks, "a", "b", "a", "p");
  CHECK(m.algorithm == MacAlgorithm::kHmacMd5);
  CHECK(m.bytes.size() == 16);
  CHECK(verify(ks, "a", "b", "a", "p", m));
  // A store configured for another algorithm rejects it.
  KeyStore other;
  other.add("a", "b", Bytes{9, 9});
  CHECK_FALSE(verify(other, "a", "b", "a", "p", m));
}

TEST_CASE("digest ids") {
  CHECK(digest("x") == digest("x"));
  for (unsigned bits : {1u, 7u, 16u, 62u}) {
    CHECK(digest_id("10.0.0.1:4000", bits) < (std::uint64_t{1} << bits));
  }
  // Big-endian prefix of sha256("abc") = ba7816bf...
  CHECK(digest_id("abc", 16) == 0xcfea);
  CHECK(digest_id("abc", 64) == 0xba7816bf8f01cfeaULL);
}

TEST_CASE("key file parsing") {
  KeyStore ks = KeyStore::parse("# pairs\nn1 n2 0a0b\n\n n2 n3 FF00  \n");
  CHECK(ks.size() == 2);
  REQUIRE(ks.find("n2", "n1"));
  CHECK(*ks.find("n2", "n1") == Bytes{0x0a, 0x0b});
  CHECK(*ks.find("n3", "n2") == Bytes{0xff, 0x00});
  CHECK_THROWS_AS(KeyStore::parse("n1 n2\n"), std::invalid_argument);
  CHECK_THROWS_AS(KeyStore::parse("n1 n2 abc\n"), std::invalid_argument);
  CHECK_THROWS_AS(KeyStore::parse("n1 n2 zz\n"), std::invalid_argument);
}

TEST_CASE("auth counters") {
  KeyStore ks = two_party();
  reset_auth_counters();
  Mac m = sign(ks, "n1", "n2", "n1", "p");
  verify(ks, "n1", "n2", "n1", "p", m);
  verify(ks, "n1", "n2", "n1", "p", m);
  CHECK(auth_counters().signs == 1);
  CHECK(auth_counters().verifies == 2);
}

TEST_CASE("property: sign/verify with single-bit flips") {
  CHECK(dahl::testing::sign_verify_failures(5, 1000) == 0);
}

TEST_CASE("frame layout is bit-exact") {
  Envelope e{"n1", "ping", std::nullopt, Origin::kNetwork};
  std::string f = encode_frame(e);
  // length 1 + 2 + 2 + 4 = 9
  CHECK(f == std::string("\x00\x00\x00\x09\x00\x00\x02n1ping", 13));

  Envelope s{"ab", "x", Mac{MacAlgorithm::kHmacSha256, Bytes{0xde, 0xad}}, Origin::kNetwork};
  std::string g = encode_frame(s);
  CHECK(g == std::string("\x00\x00\x00\x0b\x01\x00\x02" "ab" "\x01\x00\x02\xde\xad" "x", 15));
  Envelope back = decode_frame(g);
  CHECK(back.sender == "ab");
  CHECK(back.payload == "x");
  REQUIRE(back.signature);
  CHECK(back.signature->bytes == Bytes{0xde, 0xad});
}

TEST_CASE("frame decoding rejects malformed input") {
  std::string f = encode_frame(Envelope{"n1", "ping", std::nullopt, Origin::kNetwork});
  CHECK_THROWS_AS(decode_frame(f.substr(0, f.size() - 1)), FrameError);
  CHECK_THROWS_AS(decode_frame(f + "x"), FrameError);
  std::string bad_flags = f;
  bad_flags[4] = '\x02';
  CHECK_THROWS_AS(decode_frame(bad_flags), FrameError);
  std::string bad_sender = f;
  bad_sender[6] = '\x40';
  CHECK_THROWS_AS(decode_frame(bad_sender), FrameError);
  CHECK_THROWS_AS(encode_frame(Envelope{"", "p", std::nullopt, Origin::kNetwork}), FrameError);
}

TEST_CASE("property: stream decoding of concatenated frames") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Envelope> sent;
    std::string stream;
    int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      Envelope e;
      e.sender = "n" + std::to_string(rng() % 100);
      e.payload = random_bytes(rng, 300);
      if (rng() % 2) e.signature = Mac{MacAlgorithm::kHmacSha256, Bytes(32, static_cast<std::uint8_t>(i))};
      stream += encode_frame(e);
      sent.push_back(e);
    }
    bool truncate = !stream.empty() && rng() % 3 == 0;
    if (truncate) stream.pop_back();
    FrameDecoder dec;
    std::vector<Envelope> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      std::size_t chunk = 1 + rng() % 64;
      dec.feed(std::string_view(stream).substr(pos, chunk));
      pos += chunk;
      while (auto e = dec.next()) got.push_back(*e);
    }
    std::size_t expect = truncate ? sent.size() - 1 : sent.size();
    REQUIRE(got.size() == expect);
    for (std::size_t i = 0; i < expect; ++i) {
      CHECK(got[i].sender == sent[i].sender);
      CHECK(got[i].payload == sent[i].payload);
      CHECK(got[i].signature.has_value() == sent[i].signature.has_value());
    }
    CHECK(dec.has_partial() == truncate);
  }
}
