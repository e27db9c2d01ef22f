#include "dahl/envelope.hpp"

namespace dahl {

namespace {

void put_u16(std::string& out, std::size_t v) {
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

std::uint32_t get_u32(std::string_view s, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at])) << 24 |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at + 1])) << 16 |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at + 2])) << 8 |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at + 3]));
}

std::size_t get_u16(std::string_view s, std::size_t at) {
  return static_cast<std::size_t>(static_cast<std::uint8_t>(s[at])) << 8 | static_cast<std::uint8_t>(s[at + 1]);
}

Envelope decode_body(std::string_view body) {
  Envelope env;
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (body.size() - pos < n) throw FrameError("frame body truncated");
  };
  need(1);
  auto flags = static_cast<std::uint8_t>(body[pos++]);
  if (flags & ~1u) throw FrameError("unknown frame flags");
  need(2);
  std::size_t slen = get_u16(body, pos);
  pos += 2;
  need(slen);
  env.sender.assign(body.substr(pos, slen));
  pos += slen;
  if (env.sender.empty()) throw FrameError("empty sender address");
  if (flags & 1u) {
    need(3);
    auto alg = static_cast<std::uint8_t>(body[pos++]);
    if (!is_known_mac_algorithm(alg)) throw FrameError("unknown MAC algorithm id " + std::to_string(alg));
    std::size_t mlen = get_u16(body, pos);
    pos += 2;
    need(mlen);
    auto mac_bytes = body.substr(pos, mlen);
    env.signature = Mac{static_cast<MacAlgorithm>(alg), Bytes(mac_bytes.begin(), mac_bytes.end())};
    pos += mlen;
  }
  env.payload.assign(body.substr(pos));
  return env;
}

}  // namespace

std::string_view origin_name(Origin o) { return o == Origin::kAlarm ? "alarm" : "network"; }

std::string encode_frame(const Envelope& env) {
  if (env.sender.empty() || env.sender.size() > 0xFFFF) throw FrameError("sender address length out of range");
  std::string body;
  body.push_back(static_cast<char>(env.signature ? 1 : 0));
  put_u16(body, env.sender.size());
  body += env.sender;
  if (env.signature) {
    if (env.signature->bytes.size() > 0xFFFF) throw FrameError("MAC too long");
    body.push_back(static_cast<char>(env.signature->algorithm));
    put_u16(body, env.signature->bytes.size());
    body.append(env.signature->bytes.begin(), env.signature->bytes.end());
  }
  body += env.payload;
  if (body.size() > kMaxFrameBody) throw FrameError("frame too large");
  std::string out;
  out.reserve(4 + body.size());
  auto n = static_cast<std::uint32_t>(body.size());
  out.push_back(static_cast<char>(n >> 24));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out += body;
  return out;
}

Envelope decode_frame(std::string_view frame) {
  if (frame.size() < 4) throw FrameError("frame shorter than its length prefix");
  std::uint32_t n = get_u32(frame, 0);
  if (n > kMaxFrameBody) throw FrameError("frame too large");
  if (frame.size() - 4 != n) throw FrameError("frame length mismatch");
  return decode_body(frame.substr(4));
}

void FrameDecoder::feed(std::string_view bytes) {
  if (start_ > 0 && start_ >= buf_.size() / 2) {
    buf_.erase(0, start_);
    start_ = 0;
  }
  buf_.append(bytes);
}

std::optional<Envelope> FrameDecoder::next() {
  std::string_view avail(buf_);
  avail.remove_prefix(start_);
  if (avail.size() < 4) return std::nullopt;
  std::uint32_t n = get_u32(avail, 0);
  if (n > kMaxFrameBody) throw FrameError("frame too large");
  if (avail.size() - 4 < n) return std::nullopt;
  Envelope env = decode_body(avail.substr(4, n));
  start_ += 4 + n;
  return env;
}

}  // namespace dahl
