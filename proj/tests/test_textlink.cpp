#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <string>

#include "mclink/textlink.hpp"

using namespace mclink;

TEST_CASE("codebook covers the alphabet and space with distinct codes") {
  const auto& cb = Ita2Codebook::instance();
  REQUIRE(cb.entries.size() == 27);
  for (size_t i = 1; i < cb.entries.size(); ++i)
    CHECK(cb.entries[i - 1].code < cb.entries[i].code);  // sorted, so distinct
  for (char c = 'A'; c <= 'Z'; ++c) CHECK(cb.code_for(c) >= 0);
  CHECK(cb.code_for(' ') == 4);
  CHECK(cb.code_for('e') == 1);  // case-insensitive
  CHECK(cb.code_for('3') == -1);
}

TEST_CASE("codes are transmitted least-significant bit first") {
  CHECK(ita2_code_bits(1) == std::vector<int>{1, 0, 0, 0, 0});
  CHECK(ita2_code_bits(20) == std::vector<int>{0, 0, 1, 0, 1});

  BitSequence e = ita2_encode("E");
  REQUIRE(e.size() == 10);
  CHECK(e.pilot_len == 5);
  CHECK(std::vector<int>(e.payload().begin(), e.payload().end()) ==
        std::vector<int>{1, 0, 0, 0, 0});

  BitSequence word = ita2_encode("HTECH");
  CHECK(word.payload().size() == 25);
}

TEST_CASE("encode/decode roundtrip is exact for every letter and a full pangram") {
  const auto& cb = Ita2Codebook::instance();
  for (const auto& entry : cb.entries) {
    std::string s(1, entry.letter);
    CHECK(ita2_decode(ita2_encode(s)) == s);
  }
  std::string pangram = "SPHINX OF BLACK QUARTZ JUDGE MY VOW";
  CHECK(ita2_decode(ita2_encode(pangram)) == pangram);
}

TEST_CASE("single bit flips decode to a codeword within Hamming distance one") {
  const auto& cb = Ita2Codebook::instance();
  for (const auto& entry : cb.entries) {
    for (int flip = 0; flip < 5; ++flip) {
      std::vector<int> group = ita2_code_bits(entry.code);
      group[static_cast<size_t>(flip)] ^= 1;
      char decoded = ita2_decode_group(group);
      int decoded_code = cb.code_for(decoded);
      REQUIRE(decoded_code >= 0);
      int corrupted = entry.code ^ (1 << flip);
      CHECK(std::popcount(static_cast<unsigned>(decoded_code ^ corrupted)) <= 1);
    }
  }
}

TEST_CASE("flipping the second bit of E lands on A") {
  std::vector<int> group = ita2_code_bits(1);  // E
  group[1] ^= 1;                               // 10000 -> 11000, code 3
  CHECK(ita2_decode_group(group) == 'A');
}

TEST_CASE("equidistant corruptions resolve to the earliest codebook entry") {
  // 00000 sits at distance 1 from E(1), space(4) and T(16); E comes first.
  CHECK(ita2_decode_group({0, 0, 0, 0, 0}) == 'E');
}

TEST_CASE("decode validates group alignment") {
  CHECK_THROWS(ita2_decode(BitSequence({1, 0, 1}, 0)));
  CHECK_THROWS(ita2_encode("No."));
}

TEST_CASE("noiseless transmission reports a clean message") {
  LinkConfig link = make_link(1.0);
  ChannelModel chan;
  chan.isi_tap = 0.3;
  chan.wash_gain = 0.1;

  TransmissionReport rep = send_message("hello world", link, chan, NstDecoder{0.5}, 9);
  CHECK(rep.decoded_text == "HELLO WORLD");
  CHECK(rep.payload_bits == 55);
  CHECK(rep.bit_errors == 0);
  CHECK(rep.letter_errors == 0);
  CHECK(rep.ber == 0.0);
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.accuracy_with_pilot == 1.0);
  REQUIRE(rep.letters.size() == 11);
  CHECK(rep.letters[0].sent == 'H');
  CHECK(rep.letters[0].decoded == 'H');
  CHECK(rep.letters[0].bit_distance == 0);
}

TEST_CASE("report arithmetic stays internally consistent under noise") {
  LinkConfig link = make_link(1.0);
  ChannelModel chan;
  chan.isi_tap = 0.4;
  chan.wash_gain = 0.1;
  chan.sensor_noise_std = 0.6;
  chan.drift_walk_std = 0.05;

  TransmissionReport rep = send_message("HTECH", link, chan, NstDecoder{0.4}, 77);
  CHECK(rep.payload_bits == 25);
  CHECK(rep.ber == Catch::Approx(rep.bit_errors / 25.0));
  CHECK(rep.accuracy == Catch::Approx(1.0 - rep.ber));
  CHECK(rep.accuracy_with_pilot ==
        Catch::Approx(1.0 - (rep.bit_errors + rep.pilot_bit_errors) / 30.0));
  CHECK(rep.letters.size() == 5);
  size_t dist_sum = 0;
  for (const auto& d : rep.letters) dist_sum += d.bit_distance;
  CHECK(dist_sum == rep.bit_errors);
}

TEST_CASE("decoder names follow the variant") {
  CHECK(decoder_name(NstDecoder{}) == "nst");
  CHECK(decoder_name(AnnDecoder{}) == "ann");
  CHECK(decoder_name(make_universal(1.0, 8.0, 1)) == "universal");
}

TEST_CASE("transmission report serializes") {
  LinkConfig link = make_link(0.5);
  ChannelModel chan;
  TransmissionReport rep = send_message("SOS", link, chan, NstDecoder{0.5}, 4);
  nlohmann::json j = rep;
  CHECK(j.at("sent_text") == "SOS");
  CHECK(j.at("decoded_text") == "SOS");
  CHECK(j.at("payload_bits") == 15);
  CHECK(j.at("letters").size() == 3);
}
