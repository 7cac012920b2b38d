#ifndef ACV_RANGE_CODER_HPP_
#define ACV_RANGE_CODER_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace acv {

// Byte-oriented carry-less range coder (the LZMA construction: 64-bit low with
// a pending 0xFF run, 32-bit range, renormalization at 2^24). All state
// transitions are exact integer arithmetic, so output bytes are identical on
// every platform. Frequencies are 16-bit: total <= 65536.
class RangeEncoder {
 public:
  RangeEncoder();

  // Appends one symbol occupying [cum, cum + freq) of [0, total).
  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total);

  // Flushes the final bytes; the encoder is spent afterwards.
  std::vector<std::uint8_t> finish();

  std::size_t bytes_pending() const { return out_.size(); }

 private:
  void shift_low();

  std::vector<std::uint8_t> out_;
  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  // Stream must hold at least the 5 priming bytes. Reading past the end or
  // hitting an impossible coding state throws CorruptStreamError.
  RangeDecoder(const std::uint8_t* data, std::size_t size);

  // Phase 1: narrows range to 1/total and returns the target value in
  // [0, total); the caller locates the symbol whose [cum, cum+freq) spans it.
  std::uint32_t decode_target(std::uint32_t total);

  // Phase 2: commits the located symbol.
  void consume(std::uint32_t cum, std::uint32_t freq);

  std::size_t bytes_read() const { return pos_; }

 private:
  std::uint8_t next_byte();

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace acv

#endif  // ACV_RANGE_CODER_HPP_
