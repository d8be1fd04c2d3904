#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mclink/framing.hpp"

using namespace mclink;

namespace {

ChannelPreset mild_preset() {
  ChannelPreset p;
  p.name = "mild";
  p.channel = ChannelModel{};
  p.channel.sensor_noise_std = 0.15;
  p.channel.drift_walk_std = 0.03;
  p.channel.delay_jitter_std = 0.05;
  p.drift_slope_min = -0.004;
  p.drift_slope_max = -0.001;
  return p;
}

}  // namespace

TEST_CASE("segment produces floor((len-origin)/W) full windows") {
  LinkConfig link = make_link(1.0);
  Trace tr;
  tr.samples.assign(80, 1.0);
  auto w = segment(tr, link, 0);
  REQUIRE(w.size() == 10);
  for (const auto& win : w) CHECK(win.values.size() == 8);

  tr.samples.push_back(2.0);  // 81 samples: final sample dropped
  auto w2 = segment(tr, link, 0);
  CHECK(w2.size() == 10);

  LinkConfig half = make_link(0.5);
  auto w3 = segment(tr, half, 0);
  CHECK(w3.size() == 20);
  CHECK(w3[0].values.size() == 4);
}

TEST_CASE("segment then concatenate reproduces the covered samples") {
  LinkConfig link = make_link(2.0);
  Trace tr;
  for (int i = 0; i < 100; ++i) tr.samples.push_back(std::sin(0.37 * i) + i * 0.01);
  long origin = 7;
  auto windows = segment(tr, link, origin);
  REQUIRE(!windows.empty());
  size_t pos = static_cast<size_t>(origin);
  for (const auto& win : windows) {
    CHECK(win.index == &win - windows.data());
    for (double v : win.values) {
      CHECK(v == tr.samples[pos]);
      ++pos;
    }
  }
  // Exactly floor((100-7)/16) = 5 windows, covering samples [7, 87).
  CHECK(windows.size() == 5);
  CHECK(pos == 87);
}

TEST_CASE("segment rejects out-of-range origins") {
  LinkConfig link = make_link(1.0);
  Trace tr;
  tr.samples.assign(16, 0.0);
  CHECK_THROWS(segment(tr, link, -1));
  CHECK_THROWS(segment(tr, link, 17));
  CHECK(segment(tr, link, 16).empty());
}

TEST_CASE("detect_origin finds the pilot at the trace start") {
  LinkConfig link = make_link(1.0);
  ChannelModel chan;
  BitSequence bits = with_pilot(random_payload(10, 4));
  Trace tr = perfect_trace(bits, link, chan);
  CHECK(detect_origin(tr, link) == 0);
}

TEST_CASE("detect_origin is shift-equivariant on noiseless traces") {
  LinkConfig link = make_link(1.0);
  ChannelModel chan;
  BitSequence bits = with_pilot(random_payload(10, 4));
  for (int lead : {5, 16, 23}) {
    Trace tr = perfect_trace(bits, link, chan, lead, 0);
    CHECK(detect_origin(tr, link) == lead);
  }
}

TEST_CASE("detect_origin works across symbol intervals and mild noise") {
  ChannelPreset preset = mild_preset();
  for (double t_s : kSymbolIntervals) {
    LinkConfig link = make_link(t_s);
    ChannelModel chan = preset.instantiate(link, 77);
    BitSequence bits = with_pilot(random_payload(8, 5));
    Trace tr = simulate_trace(bits, link, chan, 31, 12, 0);
    long got = detect_origin(tr, link);
    CHECK(std::abs(got - 12) <= 1);
  }
}

TEST_CASE("detect_origin refuses an all-baseline trace") {
  LinkConfig link = make_link(1.0);
  Trace flat;
  flat.samples.assign(200, 7.0);
  CHECK_THROWS_AS(detect_origin(flat, link), NoPilotError);
  Trace tiny;
  tiny.samples.assign(10, 7.0);
  CHECK_THROWS(detect_origin(tiny, link));
}

TEST_CASE("estimate_symbol_interval validates the 10 s span") {
  IntervalClassifier c;
  c.net = make_mlp({kPilotSpanSamples, 32, 4}, Act::Sigmoid, Act::Softmax, 1);
  Trace bad;
  bad.samples.assign(79, 0.0);
  CHECK_THROWS(estimate_symbol_interval(bad, c));
  Trace ok;
  ok.samples.assign(80, 0.0);
  double t = estimate_symbol_interval(ok, c);
  CHECK(is_supported_interval(t));
}

TEST_CASE("interval classifier separates the four classes") {
  ChannelPreset preset = mild_preset();
  PilotDataset train = make_pilot_dataset(preset, 40, 100);

  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 150;
  cfg.batch_size = 8;
  cfg.seed = 9;
  IntervalClassifier clf = train_interval_classifier(train, cfg);

  // Noiseless pilots must classify exactly.
  for (double t_s : kSymbolIntervals) {
    LinkConfig link = make_link(t_s);
    Trace tr = perfect_trace(with_pilot(random_payload(16, 77)), link,
                             preset.instantiate(link));
    Trace span;
    span.samples.assign(tr.samples.begin(), tr.samples.begin() + kPilotSpanSamples);
    CHECK(estimate_symbol_interval(span, clf) == t_s);
  }

  // Held-out noisy pilots: mostly right.
  int correct = 0, total = 0;
  for (size_t ci = 0; ci < kSymbolIntervals.size(); ++ci) {
    LinkConfig link = make_link(kSymbolIntervals[ci]);
    for (int k = 0; k < 15; ++k) {
      uint64_t trial = derive_seed(5000, ci, static_cast<uint64_t>(k));
      ChannelModel chan = preset.instantiate(link, trial);
      Trace tr = simulate_trace(with_pilot(random_payload(16, trial)), link, chan, trial);
      Trace span;
      span.samples.assign(tr.samples.begin(), tr.samples.begin() + kPilotSpanSamples);
      if (estimate_symbol_interval(span, clf) == kSymbolIntervals[ci]) ++correct;
      ++total;
    }
  }
  CHECK(correct >= static_cast<int>(0.8 * total));
}

TEST_CASE("interval classifier JSON roundtrip") {
  IntervalClassifier c;
  c.net = make_mlp({kPilotSpanSamples, 32, 4}, Act::Sigmoid, Act::Softmax, 3);
  nlohmann::json j = c;
  IntervalClassifier back = j.get<IntervalClassifier>();
  Vec in(kPilotSpanSamples, 0.3);
  CHECK(mlp_forward(c.net, in) == mlp_forward(back.net, in));
  j["kind"] = "other";
  CHECK_THROWS(j.get<IntervalClassifier>());
}
