#include "acv/range_coder.hpp"

#include "acv/common.hpp"

namespace acv {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kMaxTotal = 1u << 16;
}  // namespace

RangeEncoder::RangeEncoder() { out_.reserve(1024); }

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq,
                          std::uint32_t total) {
  ACV_CHECK(!finished_, "RangeEncoder::encode: already finished");
  ACV_CHECK(total >= 1 && total <= kMaxTotal && freq >= 1 &&
                cum + freq <= total,
            "RangeEncoder::encode: bad interval [", cum, ",", cum + freq,
            ") of ", total);
  range_ /= total;
  low_ += std::uint64_t(cum) * range_;
  range_ *= freq;
  while (range_ < kTop) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::shift_low() {
  if (std::uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    std::uint8_t carry = std::uint8_t(low_ >> 32);
    std::uint8_t b = cache_;
    do {
      out_.push_back(std::uint8_t(b + carry));
      b = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = std::uint8_t(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  ACV_CHECK(!finished_, "RangeEncoder::finish: already finished");
  finished_ = true;
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size)
    : data_(data), size_(size) {
  ACV_CHECK_STREAM(size_ >= 5, "range stream truncated: ", size_, " bytes");
  // The first byte is the encoder's initial zero cache and carries no payload.
  ACV_CHECK_STREAM(data_[0] == 0, "range stream preamble byte ", int(data_[0]));
  ++pos_;
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  ACV_CHECK_STREAM(pos_ < size_, "range stream truncated at byte ", pos_);
  return data_[pos_++];
}

std::uint32_t RangeDecoder::decode_target(std::uint32_t total) {
  ACV_CHECK(total >= 1 && total <= kMaxTotal,
            "RangeDecoder::decode_target: total ", total);
  range_ /= total;
  std::uint32_t target = code_ / range_;
  ACV_CHECK_STREAM(target < total, "range stream target ", target,
                   " outside alphabet total ", total);
  return target;
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  code_ -= cum * range_;
  range_ *= freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

}  // namespace acv
