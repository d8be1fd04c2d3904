#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mclink/bits.hpp"
#include "mclink/channel.hpp"
#include "mclink/receive.hpp"

namespace mclink {

/// ITA2 letters-mode codebook over A-Z and space. Codes are transmitted
/// least-significant bit first, five bits per character.
struct Ita2Codebook {
  struct Entry {
    char letter;
    int code;  // 5-bit value
  };
  std::vector<Entry> entries;  // sorted by code; decoding ties resolve to the
                               // earliest entry in this order

  static const Ita2Codebook& instance() {
    static const Ita2Codebook cb = make();
    return cb;
  }

  static Ita2Codebook make() {
    Ita2Codebook cb;
    cb.entries = {{'E', 1},  {'A', 3},  {' ', 4},  {'S', 5},  {'I', 6},  {'U', 7},
                  {'D', 9},  {'R', 10}, {'J', 11}, {'N', 12}, {'F', 13}, {'C', 14},
                  {'K', 15}, {'T', 16}, {'Z', 17}, {'L', 18}, {'W', 19}, {'H', 20},
                  {'Y', 21}, {'P', 22}, {'Q', 23}, {'O', 24}, {'B', 25}, {'G', 26},
                  {'M', 28}, {'X', 29}, {'V', 30}};
    return cb;
  }

  int code_for(char letter) const {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
    for (const Entry& e : entries)
      if (e.letter == up) return e.code;
    return -1;
  }
};

inline std::vector<int> ita2_code_bits(int code) {
  std::vector<int> bits(5);
  for (int i = 0; i < 5; ++i) bits[static_cast<size_t>(i)] = (code >> i) & 1;
  return bits;
}

/// Encodes text as pilot + 5 bits per character, LSB first.
inline BitSequence ita2_encode(const std::string& text) {
  const Ita2Codebook& cb = Ita2Codebook::instance();
  std::vector<int> payload;
  for (size_t i = 0; i < text.size(); ++i) {
    int code = cb.code_for(text[i]);
    if (code < 0)
      throw std::invalid_argument("ita2_encode: unsupported character at position " +
                                  std::to_string(i));
    std::vector<int> bits = ita2_code_bits(code);
    payload.insert(payload.end(), bits.begin(), bits.end());
  }
  return with_pilot(payload);
}

/// Nearest-codeword decoding of one 5-bit group.
inline char ita2_decode_group(const std::vector<int>& group) {
  const Ita2Codebook& cb = Ita2Codebook::instance();
  int value = 0;
  for (int i = 0; i < 5; ++i) value |= group[static_cast<size_t>(i)] << i;
  char best = '?';
  int best_dist = 6;
  for (const auto& e : cb.entries) {
    int dist = std::popcount(static_cast<unsigned>(value ^ e.code));
    if (dist < best_dist) {
      best_dist = dist;
      best = e.letter;
    }
  }
  return best;
}

/// Decodes the payload (pilot excluded when present) in 5-bit groups.
inline std::string ita2_decode(const BitSequence& bits) {
  auto payload = bits.payload();
  if (payload.size() % 5 != 0)
    throw std::invalid_argument("ita2_decode: payload length not divisible by 5");
  std::string text;
  for (size_t g = 0; g < payload.size() / 5; ++g) {
    std::vector<int> group(payload.begin() + static_cast<long>(5 * g),
                           payload.begin() + static_cast<long>(5 * g + 5));
    text.push_back(ita2_decode_group(group));
  }
  return text;
}

/// Outcome of one end-to-end text transmission.
struct TransmissionReport {
  std::string sent_text;
  std::string decoded_text;
  size_t payload_bits = 0;
  size_t bit_errors = 0;
  size_t pilot_bit_errors = 0;
  size_t letter_errors = 0;
  double ber = 0.0;
  double accuracy = 0.0;              // over payload bits
  double accuracy_with_pilot = 0.0;   // over pilot + payload bits
  struct LetterDiag {
    char sent;
    char decoded;
    size_t bit_distance;
  };
  std::vector<LetterDiag> letters;
};

inline void to_json(nlohmann::json& j, const TransmissionReport& r) {
  nlohmann::json letters = nlohmann::json::array();
  for (const auto& d : r.letters)
    letters.push_back({{"sent", std::string(1, d.sent)},
                       {"decoded", std::string(1, d.decoded)},
                       {"bit_distance", d.bit_distance}});
  j = {{"sent_text", r.sent_text},
       {"decoded_text", r.decoded_text},
       {"payload_bits", r.payload_bits},
       {"bit_errors", r.bit_errors},
       {"pilot_bit_errors", r.pilot_bit_errors},
       {"letter_errors", r.letter_errors},
       {"ber", r.ber},
       {"accuracy", r.accuracy},
       {"accuracy_with_pilot", r.accuracy_with_pilot},
       {"letters", letters}};
}

/// Full pipeline: encode, simulate, decode with the chosen receiver, map
/// back to text, and tally the damage.
inline TransmissionReport send_message(const std::string& text, const LinkConfig& link,
                                       const ChannelModel& chan, const AnyDecoder& decoder,
                                       uint64_t seed) {
  BitSequence sent = ita2_encode(text);
  Trace trace = simulate_trace(sent, link, chan, seed);
  std::vector<int> decoded = decode_payload(trace, link, decoder, trace.origin_sample);

  auto sent_payload = sent.payload();
  if (decoded.size() != sent_payload.size())
    throw std::runtime_error("send_message: decoded payload length mismatch");

  TransmissionReport rep;
  rep.sent_text = text;
  rep.payload_bits = sent_payload.size();
  rep.bit_errors = hamming_distance(sent_payload, decoded);
  rep.decoded_text = ita2_decode(BitSequence(decoded));

  std::vector<int> pilot_dec;
  if (std::holds_alternative<UniversalModel>(decoder)) {
    DecodeResult full =
        decode_at(trace, link, std::get<UniversalModel>(decoder), trace.origin_sample);
    pilot_dec = full.pilot_decisions;
  } else {
    // nst/ann treat the pilot as known; count it error-free.
    pilot_dec.assign(kPilot.begin(), kPilot.end());
  }
  rep.pilot_bit_errors =
      hamming_distance(std::span<const int>(pilot_dec), std::span<const int>(kPilot));

  for (size_t i = 0; i < text.size(); ++i) {
    char s = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    char d = rep.decoded_text[i];
    std::vector<int> gs(sent_payload.begin() + static_cast<long>(5 * i),
                        sent_payload.begin() + static_cast<long>(5 * i + 5));
    std::vector<int> gd(decoded.begin() + static_cast<long>(5 * i),
                        decoded.begin() + static_cast<long>(5 * i + 5));
    size_t dist = hamming_distance(gs, gd);
    if (d != s) ++rep.letter_errors;
    rep.letters.push_back({s, d, dist});
  }

  size_t total = rep.payload_bits + kPilot.size();
  rep.ber = rep.payload_bits > 0
                ? static_cast<double>(rep.bit_errors) / static_cast<double>(rep.payload_bits)
                : 0.0;
  rep.accuracy = 1.0 - rep.ber;
  rep.accuracy_with_pilot =
      1.0 - static_cast<double>(rep.bit_errors + rep.pilot_bit_errors) / static_cast<double>(total);
  return rep;
}

}  // namespace mclink
