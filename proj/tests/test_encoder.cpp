#include <doctest.h>

#include <random>

#include "ifib/encoder.hpp"

using namespace ifib::models;
namespace ad = ifib::ad;

namespace {

EncoderConfig small_cfg() {
  EncoderConfig cfg;
  cfg.mark_kind = ifib::data::MarkKind::Categorical;
  cfg.num_marks = 3;
  cfg.d_embed = 4;
  cfg.d_hidden = 5;
  return cfg;
}

ifib::data::EventSequence demo_seq() {
  ifib::data::EventSequence s;
  s.times = {0.4, 1.1, 1.9, 3.0};
  s.marks = {0, 2, 1, 0};
  return s;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("empty prefix returns the learned initial state") {
  ad::ParamStore store;
  std::mt19937_64 rng(1);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);
  auto states = encode_prefix(store, cfg, demo_seq(), 0);
  REQUIRE(states.size() == 1);
  Eigen::RowVectorXd expect =
      store.at("enc.h0_raw").raw.unaryExpr([](double v) { return std::tanh(v); }).row(0);
  CHECK(states[0].h.isApprox(expect));
  CHECK(states[0].t_last == doctest::Approx(0.0));
}

TEST_CASE("encoding is deterministic") {
  ad::ParamStore store;
  std::mt19937_64 rng(2);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);
  auto a = encode_prefix(store, cfg, demo_seq(), 4);
  auto b = encode_prefix(store, cfg, demo_seq(), 4);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK((a[i].h - b[i].h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("swapping two events changes the state for generic params") {
  ad::ParamStore store;
  std::mt19937_64 rng(3);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);
  auto s1 = demo_seq();
  auto s2 = demo_seq();
  std::swap(s2.marks[1], s2.marks[2]);
  auto a = encode_prefix(store, cfg, s1, 4);
  auto b = encode_prefix(store, cfg, s2, 4);
  CHECK((a.back().h - b.back().h).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("state at step i ignores later events") {
  ad::ParamStore store;
  std::mt19937_64 rng(4);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);
  auto s1 = demo_seq();
  auto s2 = demo_seq();
  s2.times[3] = 9.0;
  s2.marks[3] = 2;
  auto a = encode_prefix(store, cfg, s1, 2);
  auto b = encode_prefix(store, cfg, s2, 2);
  for (size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].h - b[i].h).cwiseAbs().maxCoeff() == 0.0);  // bit-identical
}

TEST_CASE("index out of range is rejected") {
  ad::ParamStore store;
  std::mt19937_64 rng(5);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);
  CHECK_THROWS_AS(encode_prefix(store, cfg, demo_seq(), 5), std::out_of_range);
}

TEST_CASE("all state components stay inside (-1, 1)") {
  ad::ParamStore store;
  std::mt19937_64 rng(6);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);
  // amplify a few weights to push activations toward the rails
  store.at("enc.Wx").raw *= 9.0;
  store.at("enc.Wh").raw *= 9.0;
  auto states = encode_prefix(store, cfg, demo_seq(), 4);
  for (const auto& st : states)
    for (int j = 0; j < st.h.cols(); ++j) {
      CHECK(st.h(j) > -1.0);
      CHECK(st.h(j) < 1.0);
    }
}

TEST_CASE("batched encoding matches the sequential path and masks padding") {
  ad::ParamStore store;
  std::mt19937_64 rng(7);
  EncoderConfig cfg = small_cfg();
  add_encoder_params(store, cfg, rng);

  ifib::data::EventSequence sa = demo_seq();
  ifib::data::EventSequence sb;
  sb.times = {0.9, 1.4};
  sb.marks = {1, 1};
  ifib::data::DatasetMeta meta;
  meta.mark_kind = ifib::data::MarkKind::Categorical;
  meta.num_marks = 3;
  std::vector<ifib::data::EventSequence> seqs{sa, sb};

  Batch batch = make_batch(meta, seqs, {0, 1});
  REQUIRE(batch.positions == 4);
  CHECK(batch.valid[2](1) == 0.0);

  ad::Tape tape(&store);
  EncodedBatch enc = encode_batch(tape, cfg, batch);

  auto sa_states = encode_prefix(store, cfg, sa, 4);
  auto sb_states = encode_prefix(store, cfg, sb, 2);
  for (int p = 0; p < 4; ++p) {
    Eigen::RowVectorXd row_a = tape.value(enc.before[p].h).row(0);
    CHECK((row_a - sa_states[p].h).cwiseAbs().maxCoeff() < 1e-14);
  }
  // padded rows freeze the short sequence's last state
  Eigen::RowVectorXd row_b3 = tape.value(enc.before[3].h).row(1);
  CHECK((row_b3 - sb_states[2].h).cwiseAbs().maxCoeff() < 1e-14);

  // flat-row bookkeeping: 4 + 2 valid events
  CHECK(batch.valid_count() == 6);
  CHECK(batch.valid_flat_rows().size() == 6);
}

TEST_CASE("numeric marks enter through the learned linear map") {
  ad::ParamStore store;
  std::mt19937_64 rng(8);
  EncoderConfig cfg;
  cfg.mark_kind = ifib::data::MarkKind::Numeric;
  cfg.mark_dims = 2;
  cfg.d_embed = 4;
  cfg.d_hidden = 3;
  add_encoder_params(store, cfg, rng);

  ifib::data::EventSequence s;
  s.times = {0.5, 1.0};
  s.vec_marks = {{0.1, 0.9}, {0.4, 0.2}};
  auto states = encode_prefix(store, cfg, s, 2);
  CHECK(states.size() == 3);
  CHECK(states[2].t_last == doctest::Approx(1.0));
}

}  // TEST_SUITE
