#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mclink/channel.hpp"
#include "mclink/generator.hpp"

using namespace mclink;

namespace {

GeneratorModel scalar_linear_model(double a, double c = 0.0) {
  GeneratorModel g;
  g.rnn = make_rnn(1, 1, 1, Act::Identity, Act::Identity, 0);
  g.rnn.w_xh(0, 0) = 0.5;
  g.rnn.w_hh(0, 0) = a;
  g.rnn.w_hy(0, 0) = 1.0;
  g.rnn.b_h[0] = c;
  g.rnn.b_y[0] = 0.0;
  return g;
}

GeneratorModel random_tanh_model(int hidden, uint64_t seed) {
  GeneratorModel g;
  g.rnn = make_rnn(1, hidden, 1, Act::Tanh, Act::Identity, seed);
  return g;
}

std::vector<GenExample> memorization_dataset() {
  LinkConfig link = make_link(1.0);
  ChannelModel chan;
  chan.isi_tap = 0.3;
  chan.wash_gain = 0.1;
  BitSequence bits = with_pilot({1, 0, 1, 1, 0, 0});
  GenExample ex;
  ex.bits = bits;
  ex.trace = perfect_trace(bits, link, chan);
  ex.link = link;
  return {ex};
}

GeneratorModel fit_small_model() {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 800;
  cfg.seed = 14;
  return fit_forward_model(memorization_dataset(), 10, cfg);
}

}  // namespace

TEST_CASE("injection waveform follows the duty cycle") {
  GeneratorModel g = scalar_linear_model(0.5);
  Vec x = injection_waveform(g, BitSequence({1, 0}, 0));
  REQUIRE(x.size() == 16);
  for (int s = 0; s < 4; ++s) CHECK(x[static_cast<size_t>(s)] == 1.0);
  for (int s = 4; s < 16; ++s) CHECK(x[static_cast<size_t>(s)] == 0.0);
}

TEST_CASE("scaling by 1 is the identity") {
  GeneratorModel g = random_tanh_model(6, 2);
  ScaleResult r = scale_interval(g, 1.0);
  CHECK_FALSE(r.used_learned_root);
  BitSequence bits({1, 0, 1}, 0);
  Trace a = generate_response(g, bits, 7);
  Trace b = generate_response(r.model, bits, 7);
  CHECK(a.samples == b.samples);
}

TEST_CASE("integer scaling composes the hidden step exactly") {
  GeneratorModel g = random_tanh_model(5, 3);
  for (int k : {2, 3}) {
    ScaleResult r = scale_interval(g, static_cast<double>(k));
    CHECK(r.model.steps_per_sample == k);
    CHECK(r.model.k == Catch::Approx(static_cast<double>(k)));

    Vec h0(5, 0.0);
    Rng rng = make_rng(55);
    for (double& v : h0) v = normal(rng, 0.3);
    double input = 1.0;

    Vec h_scaled = h0;
    generator_step(r.model, h_scaled, input);
    Vec h_base = h0;
    for (int s = 0; s < k; ++s) generator_step(g, h_base, input);
    for (size_t i = 0; i < h0.size(); ++i) CHECK(h_scaled[i] == h_base[i]);
  }
}

TEST_CASE("k = 2 on a linear scalar model squares the transition") {
  GeneratorModel g = scalar_linear_model(0.81);
  ScaleResult r = scale_interval(g, 2.0);
  Vec h = {1.0};
  generator_step(r.model, h, 0.0);
  CHECK(h[0] == Catch::Approx(0.6561).epsilon(1e-15));
}

TEST_CASE("k = 1/2 on a linear scalar model takes the square root") {
  GeneratorModel g = scalar_linear_model(0.64);
  ScaleResult r = scale_interval(g, 0.5);
  CHECK_FALSE(r.used_learned_root);
  CHECK(r.model.rnn.w_hh(0, 0) == Catch::Approx(0.8).epsilon(1e-10));
  CHECK(r.model.rnn.hidden_act == Act::Identity);
  CHECK(r.model.k == Catch::Approx(0.5));
  // Composing twice recovers the original transition.
  CHECK(r.model.rnn.w_hh(0, 0) * r.model.rnn.w_hh(0, 0) == Catch::Approx(0.64).epsilon(1e-12));
}

TEST_CASE("matrix half-interval root recomposes within 1e-8") {
  // Symmetric, positive-definite transition: the principal root is real.
  GeneratorModel g;
  g.rnn = make_rnn(1, 4, 1, Act::Tanh, Act::Identity, 9);
  Rng rng = make_rng(21);
  Mat a(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j <= i; ++j) {
      double v = normal(rng, 0.05);
      a(i, j) = v;
      a(j, i) = v;
    }
    a(i, i) += 0.45;
  }
  g.rnn.w_hh = a;
  for (double& b : g.rnn.b_h) b = normal(rng, 0.2);
  Vec c = g.rnn.b_h;

  ScaleResult r = scale_interval(g, 0.5, 77);
  CHECK_FALSE(r.used_learned_root);
  CHECK(detail::recompose_error(r.model.rnn.w_hh, a, 2) < 1e-8);

  // Affine composition: two scaled steps equal one original affine step.
  Vec h = {0.3, -0.2, 0.5, 0.1};
  Vec twice = h;
  generator_step(r.model, twice, 0.0);
  generator_step(r.model, twice, 0.0);
  Vec once = affine(a, h, c);
  for (size_t i = 0; i < h.size(); ++i)
    CHECK(twice[i] == Catch::Approx(once[i]).margin(1e-8));
}

TEST_CASE("negative-spectrum transition falls back to the learned root") {
  GeneratorModel g;
  g.rnn = make_rnn(1, 2, 1, Act::Tanh, Act::Identity, 4);
  g.rnn.w_hh.fill(0.0);
  g.rnn.w_hh(0, 0) = -0.49;
  g.rnn.w_hh(1, 1) = -0.49;
  g.rnn.b_h = {0.1, -0.2};

  ScaleResult r = scale_interval(g, 0.5, 5);
  CHECK(r.used_learned_root);
  CHECK(detail::recompose_error(r.model.rnn.w_hh, g.rnn.w_hh, 2) < 1e-3);
}

TEST_CASE("invalid scale factors are rejected") {
  GeneratorModel g = random_tanh_model(3, 6);
  CHECK_THROWS(scale_interval(g, 0.4));   // 1/k not an integer
  CHECK_THROWS(scale_interval(g, -1.0));
  CHECK_THROWS(scale_interval(g, 2.5));
  ScaleResult doubled = scale_interval(g, 2.0);
  CHECK_THROWS(scale_interval(doubled.model, 0.5));  // composed model has no affine step
}

TEST_CASE("generated trace lengths follow f_p * t_s * k * bits") {
  GeneratorModel g = random_tanh_model(4, 8);
  BitSequence bits({1, 0, 1, 0}, 0);
  CHECK(generate_response(g, bits, 1).size() == 32);

  ScaleResult doubled = scale_interval(g, 2.0);
  CHECK(generate_response(doubled.model, bits, 1).size() == 64);

  ScaleResult half = scale_interval(g, 0.5, 3);
  CHECK(generate_response(half.model, bits, 1).size() == 16);
}

TEST_CASE("all-zero bits give a constant trace at the resting response") {
  GeneratorModel g = random_tanh_model(6, 10);
  g.out_mean = 7.0;
  g.out_std = 2.0;
  Trace tr = generate_response(g, BitSequence(std::vector<int>(5, 0), 0), 3);
  for (int i = 1; i < tr.size(); ++i) CHECK(tr[i] == Catch::Approx(tr[0]).margin(1e-8));
}

TEST_CASE("output noise is seeded and optional") {
  GeneratorModel g = random_tanh_model(4, 11);
  BitSequence bits({1, 0}, 0);
  Trace clean1 = generate_response(g, bits, 5);
  Trace clean2 = generate_response(g, bits, 6);
  CHECK(clean1.samples == clean2.samples);  // zero noise: seed-independent

  Trace n1 = generate_response(g, bits, 5, 0.05);
  Trace n2 = generate_response(g, bits, 5, 0.05);
  Trace n3 = generate_response(g, bits, 6, 0.05);
  CHECK(n1.samples == n2.samples);
  CHECK(n1.samples != n3.samples);
}

TEST_CASE("weight noise: sigma 0 identical, seeds differ, deterministic") {
  GeneratorModel g = random_tanh_model(5, 12);
  GeneratorModel same = augment_weight_noise(g, 0.0, 9);
  BitSequence bits({1, 1, 0}, 0);
  CHECK(generate_response(same, bits, 1).samples == generate_response(g, bits, 1).samples);

  GeneratorModel a = augment_weight_noise(g, 0.01, 1);
  GeneratorModel b = augment_weight_noise(g, 0.01, 1);
  GeneratorModel c = augment_weight_noise(g, 0.01, 2);
  CHECK(a.rnn.w_hh.a == b.rnn.w_hh.a);
  CHECK(a.rnn.w_hh.a != c.rnn.w_hh.a);
  CHECK(a.rnn.w_hh.a != g.rnn.w_hh.a);
}

TEST_CASE("group mixing draws whole matrices from the chosen sources") {
  GeneratorModel a = random_tanh_model(4, 20);
  GeneratorModel b = random_tanh_model(4, 21);

  GroupMixChoice choice;
  choice.source = {0, 1, 0, 1, 0};  // W_xh:A, W_hh:B, W_hy:A, b_h:B, b_y:A
  GeneratorModel mixed = augment_group_mix({a, b}, choice);
  CHECK(mixed.rnn.w_xh.a == a.rnn.w_xh.a);
  CHECK(mixed.rnn.w_hh.a == b.rnn.w_hh.a);
  CHECK(mixed.rnn.w_hy.a == a.rnn.w_hy.a);
  CHECK(mixed.rnn.b_h == b.rnn.b_h);
  CHECK(mixed.rnn.b_y == a.rnn.b_y);

  // Two identical models mix to either one.
  GeneratorModel same = augment_group_mix({a, a}, 99);
  BitSequence bits({1, 0}, 0);
  CHECK(generate_response(same, bits, 1).samples == generate_response(a, bits, 1).samples);

  GeneratorModel tall = random_tanh_model(5, 22);
  CHECK_THROWS(augment_group_mix({a, tall}, 1));
  CHECK_THROWS(augment_group_mix({a}, 1));
}

TEST_CASE("forward model memorizes a noiseless trace") {
  auto dataset = memorization_dataset();
  GeneratorModel g = fit_small_model();

  Trace gen = generate_response(g, dataset[0].bits, 0);
  const Trace& ref = dataset[0].trace;
  REQUIRE(gen.size() == ref.size());

  double se = 0.0, range_lo = ref[0], range_hi = ref[0];
  for (int i = 0; i < ref.size(); ++i) {
    se += (gen[i] - ref[i]) * (gen[i] - ref[i]);
    range_lo = std::min(range_lo, ref[i]);
    range_hi = std::max(range_hi, ref[i]);
  }
  double nrmse = std::sqrt(se / ref.size()) / (range_hi - range_lo);
  INFO("normalized RMSE " << nrmse);
  CHECK(nrmse < 0.05);
  CHECK(pearson(gen.samples, ref.samples) > 0.9);
}

TEST_CASE("fitted model discriminates pulse windows from quiet ones") {
  GeneratorModel g = fit_small_model();
  BitSequence held_out = with_pilot(random_payload(8, 123));
  CHECK(peak_discrimination(g, held_out, 1) >= 0.95);
}

TEST_CASE("weight-noise augmentation keeps generations plausible") {
  GeneratorModel g = fit_small_model();
  BitSequence bits = with_pilot(random_payload(8, 321));
  int pass = 0;
  for (uint64_t s = 0; s < 10; ++s) {
    GeneratorModel aug = augment_weight_noise(g, 0.01, s);
    if (peak_discrimination(aug, bits, s) >= 0.95) ++pass;
  }
  CHECK(pass >= 9);
}

TEST_CASE("fit rejects empty and mixed-interval datasets") {
  TrainConfig cfg;
  CHECK_THROWS(fit_forward_model({}, 4, cfg));

  auto ds = memorization_dataset();
  GenExample other = ds[0];
  other.link = make_link(2.0);
  other.trace = perfect_trace(other.bits, other.link, ChannelModel{});
  ds.push_back(other);
  CHECK_THROWS(fit_forward_model(ds, 4, cfg));
}

TEST_CASE("generator JSON roundtrip preserves generation") {
  GeneratorModel g = random_tanh_model(5, 30);
  g.out_mean = 6.5;
  g.out_std = 1.75;
  ScaleResult scaled = scale_interval(g, 2.0);
  nlohmann::json j = scaled.model;
  GeneratorModel back = j.get<GeneratorModel>();
  BitSequence bits({1, 0, 1}, 0);
  CHECK(generate_response(back, bits, 4).samples ==
        generate_response(scaled.model, bits, 4).samples);
  j["kind"] = "other";
  CHECK_THROWS(j.get<GeneratorModel>());
}
