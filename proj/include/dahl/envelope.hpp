#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dahl/auth.hpp"

namespace dahl {

enum class Origin : std::uint8_t { kNetwork, kAlarm };

std::string_view origin_name(Origin o);

struct Envelope {
  std::string sender;
  std::string payload;  // canonical serialized term
  std::optional<Mac> signature;
  Origin origin = Origin::kNetwork;  // not on the wire
};

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Frames larger than this are rejected as malformed.
inline constexpr std::uint32_t kMaxFrameBody = 16u << 20;

// Wire layout, big-endian:
//   u32 length of everything after this field
//   u8  flags (bit0: signed; other bits zero)
//   u16 sender length, sender bytes
//   if signed: u8 algorithm id, u16 MAC length, MAC bytes
//   payload bytes (the remainder)
std::string encode_frame(const Envelope& env);

// Exactly one complete frame. Throws FrameError.
Envelope decode_frame(std::string_view frame);

// Incremental decoder for a byte stream of concatenated frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  // Next complete frame, if buffered. Throws FrameError on a malformed one.
  std::optional<Envelope> next();
  // True when bytes of an incomplete frame are buffered; at end of stream
  // this means a truncated trailing frame.
  bool has_partial() const { return start_ < buf_.size(); }

 private:
  std::string buf_;
  std::size_t start_ = 0;
};

}  // namespace dahl
