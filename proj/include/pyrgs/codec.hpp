#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pyrgs/core.hpp"
#include "pyrgs/ggd.hpp"

namespace pyrgs {

constexpr int kFreqBits = 16;
constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;  // fixed coder precision
constexpr std::uint64_t kWindowMask = (1ull << 48) - 1;
constexpr std::uint64_t kRenormThreshold = 1ull << 40;

// Round to nearest, ties to even. Symbols must fit int32 or the step is too
// small for the data range.
inline std::vector<std::int32_t> quantize(std::span<const double> values, double q) {
  if (!(q > 0.0)) throw Error(Errc::invalid_argument, "quantization step must be positive");
  std::vector<std::int32_t> out;
  out.reserve(values.size());
  for (double v : values) {
    const double s = std::nearbyint(v / q);
    if (!(std::abs(s) <= 2147483647.0))
      throw Error(Errc::quant_overflow, "quantized symbol exceeds 32-bit range (step too small)");
    out.push_back(static_cast<std::int32_t>(s));
  }
  return out;
}

inline std::vector<std::int32_t> quantize(std::span<const float> values, double q) {
  std::vector<double> tmp(values.begin(), values.end());
  return quantize(std::span<const double>(tmp), q);
}

inline double dequantize(std::int32_t s, double q) { return static_cast<double>(s) * q; }

// Cumulative frequency table over a contiguous symbol alphabet
// [s_min, s_max], frequencies always positive and summing to exactly 2^16.
class FrequencyTable {
 public:
  static FrequencyTable from_ggd(const GgdParams& params, double q, std::int32_t s_min, std::int32_t s_max) {
    check_alphabet(s_min, s_max);
    const std::size_t n = alphabet_size(s_min, s_max);
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i)
      probs[i] = bin_probability(dequantize(s_min + static_cast<std::int32_t>(i), q), q, params);
    return FrequencyTable(s_min, renormalize(probs));
  }

  static FrequencyTable from_counts(std::span<const std::uint64_t> counts, std::int32_t s_min) {
    if (counts.empty()) throw Error(Errc::invalid_argument, "empty count table");
    check_alphabet(s_min, s_min + static_cast<std::int32_t>(counts.size()) - 1);
    const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    std::vector<double> probs(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      probs[i] = total == 0 ? 1.0 / static_cast<double>(counts.size())
                            : static_cast<double>(counts[i]) / static_cast<double>(total);
    return FrequencyTable(s_min, renormalize(probs));
  }

  std::int32_t s_min() const { return s_min_; }
  std::int32_t s_max() const { return s_min_ + static_cast<std::int32_t>(freq_.size()) - 1; }
  std::size_t alphabet() const { return freq_.size(); }

  bool contains(std::int32_t s) const { return s >= s_min() && s <= s_max(); }

  std::uint32_t freq_of(std::int32_t s) const { return freq_[slot(s)]; }
  std::uint32_t cum_of(std::int32_t s) const { return cum_[slot(s)]; }

  // Symbol whose cumulative range covers scaled frequency f in [0, 2^16).
  std::int32_t symbol_from_scaled(std::uint32_t f) const {
    auto it = std::upper_bound(cum_.begin(), cum_.end(), f);
    const std::size_t idx = static_cast<std::size_t>(it - cum_.begin()) - 1;
    return s_min_ + static_cast<std::int32_t>(idx);
  }

  // Ideal code length under this table, in bits.
  double bits_estimate(std::span<const std::int32_t> symbols) const {
    double bits = 0.0;
    for (std::int32_t s : symbols)
      bits -= std::log2(static_cast<double>(freq_of(s)) / static_cast<double>(kFreqTotal));
    return bits;
  }

 private:
  FrequencyTable(std::int32_t s_min, std::vector<std::uint32_t> freq)
      : s_min_(s_min), freq_(std::move(freq)), cum_(freq_.size() + 1, 0) {
    for (std::size_t i = 0; i < freq_.size(); ++i) cum_[i + 1] = cum_[i] + freq_[i];
  }

  static std::size_t alphabet_size(std::int32_t s_min, std::int32_t s_max) {
    return static_cast<std::size_t>(static_cast<std::int64_t>(s_max) - s_min + 1);
  }

  static void check_alphabet(std::int32_t s_min, std::int32_t s_max) {
    if (s_min > s_max) throw Error(Errc::invalid_argument, "empty symbol alphabet");
    if (alphabet_size(s_min, s_max) > static_cast<std::size_t>(kFreqTotal))
      throw Error(Errc::alphabet_too_wide,
                  "alphabet of " + std::to_string(alphabet_size(s_min, s_max)) +
                      " symbols exceeds 65536 (raise the quantization step)");
  }

  // Round probabilities to 16-bit frequencies, at least 1 each, then settle
  // the total to exactly 2^16 by largest-remainder adjustment. Ties and
  // cycling order are fixed so tables are bit-stable.
  static std::vector<std::uint32_t> renormalize(const std::vector<double>& probs) {
    const std::size_t n = probs.size();
    std::vector<std::uint32_t> freq(n);
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ideal = static_cast<double>(kFreqTotal) * probs[i];
      freq[i] = static_cast<std::uint32_t>(std::max<long long>(1, std::llround(std::min(ideal, 65536.0))));
      sum += freq[i];
    }
    std::int64_t deficit = static_cast<std::int64_t>(kFreqTotal) - sum;
    if (deficit != 0) {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::vector<double> residual(n);
      for (std::size_t i = 0; i < n; ++i)
        residual[i] = static_cast<double>(kFreqTotal) * probs[i] - static_cast<double>(freq[i]);
      if (deficit > 0) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (residual[a] != residual[b]) return residual[a] > residual[b];
          return a < b;
        });
        std::size_t k = 0;
        while (deficit > 0) {
          ++freq[order[k]];
          --deficit;
          k = (k + 1) % n;
        }
      } else {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (residual[a] != residual[b]) return residual[a] < residual[b];
          return a < b;
        });
        std::size_t k = 0;
        while (deficit < 0) {
          if (freq[order[k]] > 1) {
            --freq[order[k]];
            ++deficit;
          }
          k = (k + 1) % n;
        }
      }
    }
    return freq;
  }

  std::size_t slot(std::int32_t s) const {
    if (!contains(s))
      throw Error(Errc::symbol_out_of_range,
                  "symbol " + std::to_string(s) + " outside alphabet [" + std::to_string(s_min()) + ", " +
                      std::to_string(s_max()) + "]");
    return static_cast<std::size_t>(static_cast<std::int64_t>(s) - s_min_);
  }

  std::int32_t s_min_;
  std::vector<std::uint32_t> freq_;
  std::vector<std::uint32_t> cum_;
};

// Byte-wise renormalizing range coder over a 48-bit window. Carries are
// resolved through a cache byte plus a run of pending 0xFF bytes, so encoder
// output equals the infinite-precision arithmetic code prefix. The stream
// always starts with one spacer byte and ends after exactly seven flush
// shifts, which the decoder mirrors, so encoded length and decoded
// consumption agree byte for byte.
class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq) {
    const std::uint64_t r = range_ >> kFreqBits;
    low_ += r * cum;
    range_ = r * freq;
    while (range_ < kRenormThreshold) {
      shift_low();
      range_ <<= 8;
    }
  }

  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 7; ++i) shift_low();
    return std::move(out_);
  }

 private:
  void shift_low() {
    const std::uint8_t carry = static_cast<std::uint8_t>(low_ >> 48);
    if ((low_ & kWindowMask) < (0xFFull << 40) || carry) {
      std::uint8_t b = cache_;
      do {
        out_.push_back(static_cast<std::uint8_t>(b + carry));
        b = 0xFF;
      } while (--pending_ != 0);
      cache_ = static_cast<std::uint8_t>((low_ & kWindowMask) >> 40);
    }
    ++pending_;
    low_ = (low_ << 8) & kWindowMask;
  }

  std::uint64_t low_ = 0;
  std::uint64_t range_ = kWindowMask;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(ByteReader& in) : in_(in) {
    in_.u8();  // spacer
    for (int i = 0; i < 6; ++i) code_ = (code_ << 8) | in_.u8();
  }

  // Scaled cumulative frequency of the next symbol, capped into [0, 2^16).
  std::uint32_t decode_freq() {
    r_ = range_ >> kFreqBits;
    const std::uint64_t f = code_ / r_;
    return f >= kFreqTotal ? kFreqTotal - 1 : static_cast<std::uint32_t>(f);
  }

  void decode_update(std::uint32_t cum, std::uint32_t freq) {
    code_ -= r_ * cum;
    range_ = r_ * freq;
    while (range_ < kRenormThreshold) {
      code_ = ((code_ << 8) | in_.u8()) & kWindowMask;
      range_ <<= 8;
    }
  }

 private:
  ByteReader& in_;
  std::uint64_t range_ = kWindowMask;
  std::uint64_t code_ = 0;
  std::uint64_t r_ = 0;
};

inline std::vector<std::uint8_t> encode_channel(std::span<const std::int32_t> symbols,
                                                const FrequencyTable& table) {
  RangeEncoder enc;
  for (std::int32_t s : symbols) enc.encode(table.cum_of(s), table.freq_of(s));
  return enc.finish();
}

inline std::vector<std::int32_t> decode_channel(std::span<const std::uint8_t> stream, std::size_t count,
                                                const FrequencyTable& table) {
  ByteReader reader(stream);
  RangeDecoder dec(reader);
  std::vector<std::int32_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int32_t s = table.symbol_from_scaled(dec.decode_freq());
    dec.decode_update(table.cum_of(s), table.freq_of(s));
    out.push_back(s);
  }
  if (reader.remaining() != 0)
    throw Error(Errc::malformed_payload,
                "segment has " + std::to_string(reader.remaining()) + " undecoded trailing bytes");
  return out;
}

}  // namespace pyrgs
