#ifndef ACV_BITSTREAM_HPP_
#define ACV_BITSTREAM_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "acv/common.hpp"

namespace acv {

// Container layout, all integers little-endian:
//   magic "ACV1"
//   width u16, height u16          original (pre-padding) dims
//   frame_count u16
//   intra_period u8                0 means a single leading intra frame
//   patch u8                       alpha granularity in pixels
//   model_hash u64                 architecture fingerprint
//   lambda_index u8                which trained operating point
//   then per frame: type u8, followed by the type's fixed substream list,
//   each framed as [u32 length][body].
inline constexpr std::uint8_t kStreamMagic[4] = {'A', 'C', 'V', '1'};

struct StreamHeader {
  std::uint16_t width = 0, height = 0;
  std::uint16_t frame_count = 0;
  std::uint8_t intra_period = 0;
  std::uint8_t patch = 16;
  std::uint64_t model_hash = 0;
  std::uint8_t lambda_index = 0;
};

enum class FrameType : std::uint8_t { kIntra = 0, kPred = 1 };

// Substreams in order: intra -> {hyper, main};
// pred -> {motion hyper, motion main, inter hyper, inter main}.
inline int substream_count(FrameType t) {
  return t == FrameType::kIntra ? 2 : 4;
}

struct FrameRecord {
  FrameType type = FrameType::kIntra;
  std::vector<std::vector<std::uint8_t>> substreams;
};

struct VideoStream {
  StreamHeader header;
  std::vector<FrameRecord> frames;
};

namespace detail {

inline void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

// Bounds-checked cursor; any overrun is a corrupt stream, not UB.
struct ByteReader {
  const std::uint8_t* p = nullptr;
  std::size_t n = 0, pos = 0;

  void need(std::size_t k, const char* what) const {
    ACV_CHECK_STREAM(pos + k <= n, "stream truncated reading ", what, " at ",
                     pos, "/", n);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return p[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = std::uint16_t(p[pos] | (std::uint16_t(p[pos + 1]) << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t k, const char* what) {
    need(k, what);
    std::vector<std::uint8_t> v(p + pos, p + pos + k);
    pos += k;
    return v;
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_stream(const VideoStream& vs) {
  ACV_CHECK(vs.frames.size() == vs.header.frame_count,
            "serialize_stream: header says ", vs.header.frame_count,
            " frames, got ", vs.frames.size());
  std::vector<std::uint8_t> out(kStreamMagic, kStreamMagic + 4);
  detail::put_u16le(out, vs.header.width);
  detail::put_u16le(out, vs.header.height);
  detail::put_u16le(out, vs.header.frame_count);
  out.push_back(vs.header.intra_period);
  out.push_back(vs.header.patch);
  detail::put_u64le(out, vs.header.model_hash);
  out.push_back(vs.header.lambda_index);
  for (const FrameRecord& f : vs.frames) {
    ACV_CHECK(int(f.substreams.size()) == substream_count(f.type),
              "serialize_stream: frame with ", f.substreams.size(),
              " substreams for type ", int(f.type));
    out.push_back(std::uint8_t(f.type));
    for (const auto& s : f.substreams) {
      ACV_CHECK(s.size() <= 0xffffffffull, "serialize_stream: substream of ",
                s.size(), " bytes");
      detail::put_u32le(out, std::uint32_t(s.size()));
      out.insert(out.end(), s.begin(), s.end());
    }
  }
  return out;
}

inline VideoStream parse_stream(const std::uint8_t* data, std::size_t n) {
  detail::ByteReader r{data, n};
  ACV_CHECK_STREAM(n >= 4 && std::equal(kStreamMagic, kStreamMagic + 4, data),
                   "bad stream magic");
  r.pos = 4;
  VideoStream vs;
  vs.header.width = r.u16("width");
  vs.header.height = r.u16("height");
  vs.header.frame_count = r.u16("frame count");
  vs.header.intra_period = r.u8("intra period");
  vs.header.patch = r.u8("patch");
  vs.header.model_hash = r.u64("model hash");
  vs.header.lambda_index = r.u8("lambda index");
  for (int i = 0; i < int(vs.header.frame_count); ++i) {
    FrameRecord f;
    const std::uint8_t t = r.u8("frame type");
    ACV_CHECK_STREAM(t <= 1, "unknown frame type ", int(t), " at frame ", i);
    f.type = FrameType(t);
    for (int s = 0; s < substream_count(f.type); ++s) {
      const std::uint32_t len = r.u32("substream length");
      f.substreams.push_back(r.bytes(len, "substream body"));
    }
    vs.frames.push_back(std::move(f));
  }
  ACV_CHECK_STREAM(r.pos == n, "trailing bytes after frame ",
                   int(vs.header.frame_count) - 1, ": ", n - r.pos);
  return vs;
}

inline VideoStream parse_stream(const std::vector<std::uint8_t>& data) {
  return parse_stream(data.data(), data.size());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ACV_CHECK_IO(in.good(), "cannot open ", path);
  in.seekg(0, std::ios::end);
  const std::streamoff n = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  if (n > 0) in.read(reinterpret_cast<char*>(out.data()), n);
  ACV_CHECK_IO(in.good(), "short read: ", path);
  return out;
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  ACV_CHECK_IO(out.good(), "cannot open ", path, " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  ACV_CHECK_IO(out.good(), "write failed: ", path);
}

}  // namespace acv

#endif  // ACV_BITSTREAM_HPP_
