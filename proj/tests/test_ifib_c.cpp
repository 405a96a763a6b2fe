#include <doctest.h>

#include <cmath>
#include <random>

#include "ifib/ifib_c.hpp"
#include "ifib/synth.hpp"

using namespace ifib::models;
namespace ad = ifib::ad;

namespace {

IfibCConfig toy_cfg(int k = 5) {
  IfibCConfig cfg;
  cfg.encoder.mark_kind = ifib::data::MarkKind::Categorical;
  cfg.encoder.num_marks = k;
  cfg.encoder.d_embed = 6;
  cfg.encoder.d_hidden = 8;
  cfg.d_f = 10;
  cfg.iem_hidden = 12;
  cfg.iem_layers = 3;
  return cfg;
}

ifib::data::EventSequence toy_seq() {
  ifib::data::EventSequence s;
  s.times = {0.7, 1.5, 2.1};
  s.marks = {1, 4, 0};
  return s;
}

}  // namespace

TEST_SUITE("ifib_c") {

TEST_CASE("scores live in (0,1) and decrease strictly in t") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    IfibCModel model(toy_cfg(), seed);
    HistoryState h = model.encode(toy_seq(), 3).back();
    for (int trial = 0; trial < 333; ++trial) {
      double d1 = u(rng), d2 = u(rng);
      if (d1 > d2) std::swap(d1, d2);
      if (d2 - d1 < 1e-6) continue;
      int m = trial % 5;
      double s1 = model.score(h, m, h.t_last + d1);
      double s2 = model.score(h, m, h.t_last + d2);
      CHECK(s1 > 0.0);
      CHECK(s1 < 1.0);
      CHECK(s2 < s1);
    }
  }
}

TEST_CASE("score rejects t before the last event") {
  IfibCModel model(toy_cfg(), 1);
  HistoryState h = model.encode(toy_seq(), 3).back();
  CHECK_THROWS_AS(model.score(h, 0, h.t_last - 0.1), std::invalid_argument);
  CHECK_THROWS_AS(model.density(h, 0, h.t_last - 0.1), std::invalid_argument);
}

TEST_CASE("mark marginals sum to one and match gamma at t_l") {
  IfibCModel model(toy_cfg(), 5);
  for (size_t upto : {0u, 1u, 3u}) {
    HistoryState h = model.encode(toy_seq(), upto).back();
    double total = 0.0;
    for (int m = 0; m < 5; ++m) {
      double marg = model.mark_marginal(h, m);
      CHECK(marg == model.gamma(h, m, h.t_last));  // bitwise, same code path
      total += marg;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("single-mark model self-normalizes to gamma = 1 at t_l") {
  IfibCModel model(toy_cfg(1), 7);
  HistoryState h = model.encode(toy_seq(), 0).back();
  CHECK(model.gamma(h, 0, h.t_last) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tail over all marks is exactly one at t_l") {
  IfibCModel model(toy_cfg(), 9);
  HistoryState h = model.encode(toy_seq(), 2).back();
  CHECK(model.tail_all_marks(h, h.t_last) == 1.0);  // exact by construction
}

TEST_CASE("symmetric two-mark initialization splits the marginal evenly") {
  IfibCConfig cfg = toy_cfg(2);
  IfibCModel model(cfg, 13);
  auto& store = model.params();
  store.at("v").raw.row(1) = store.at("v").raw.row(0);
  store.at("head.W").raw.row(1) = store.at("head.W").raw.row(0);
  store.at("head.b").raw(1, 0) = store.at("head.b").raw(0, 0);
  HistoryState h = model.encode(toy_seq(), 1).back();
  CHECK(model.mark_marginal(h, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(model.mark_marginal(h, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gamma is monotone nonincreasing with random parameters") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  IfibCModel model(toy_cfg(), 31);
  HistoryState h = model.encode(toy_seq(), 3).back();
  for (int trial = 0; trial < 1000; ++trial) {
    double d1 = u(rng), d2 = u(rng);
    if (d1 > d2) std::swap(d1, d2);
    int m = trial % 5;
    double g1 = model.gamma(h, m, h.t_last + d1);
    double g2 = model.gamma(h, m, h.t_last + d2);
    CHECK(g2 <= g1 + 1e-15);
    CHECK(g1 <= model.gamma(h, m, h.t_last) + 1e-15);
  }
}

TEST_CASE("density matches the central finite difference of gamma") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (std::uint64_t seed : {3u, 5u}) {
    IfibCModel model(toy_cfg(), seed);
    HistoryState h = model.encode(toy_seq(), 2).back();
    for (int trial = 0; trial < 60; ++trial) {
      int m = trial % 5;
      double t = h.t_last + u(rng);
      double fd = -(model.gamma(h, m, t + 1e-5) - model.gamma(h, m, t - 1e-5)) / 2e-5;
      double p = model.density(h, m, t);
      CHECK(std::abs(p - fd) <= 1e-4 * std::max({1e-2, std::abs(p), std::abs(fd)}));
    }
  }
}

TEST_CASE("density is nonnegative at 1000 random probes") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 12.0);
  IfibCModel model(toy_cfg(), 43);
  HistoryState h = model.encode(toy_seq(), 3).back();
  for (int trial = 0; trial < 1000; ++trial) {
    CHECK(model.density(h, trial % 5, h.t_last + u(rng)) >= 0.0);
  }
}

TEST_CASE("densities integrate to one with the gamma tail added") {
  // Simpson over [t_l, t_l+T] plus the exact tail sum_m gamma(m, t_l+T);
  // consistency of p = -dGamma/dt makes this 1 for any parameters.
  IfibCModel model(toy_cfg(), 47);
  HistoryState h = model.encode(toy_seq(), 3).back();
  double T = 25.0;
  int n = 4000;
  double hstep = T / n;
  double acc = 0.0;
  for (int m = 0; m < 5; ++m) {
    double f0 = model.density(h, m, h.t_last);
    double fT = model.density(h, m, h.t_last + T);
    double s = f0 + fT;
    for (int i = 1; i < n; ++i)
      s += model.density(h, m, h.t_last + i * hstep) * (i % 2 ? 4.0 : 2.0);
    acc += s * hstep / 3.0;
    acc += model.gamma(h, m, h.t_last + T);  // tail mass
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("grid queries agree with scalar queries") {
  IfibCModel model(toy_cfg(), 53);
  HistoryState h = model.encode(toy_seq(), 1).back();
  std::vector<double> ts{h.t_last, h.t_last + 0.5, h.t_last + 2.0};
  Mat g = model.gamma_grid(h, ts);
  Mat d = model.density_grid(h, ts);
  for (int m = 0; m < 5; ++m)
    for (int j = 0; j < 3; ++j) {
      CHECK(g(m, j) == doctest::Approx(model.gamma(h, m, ts[j])).epsilon(1e-12));
      CHECK(d(m, j) == doctest::Approx(model.density(h, m, ts[j])).epsilon(1e-12));
    }
}

TEST_CASE("batch nll equals the per-event scalar-path average") {
  IfibCConfig cfg = toy_cfg();
  IfibCModel model(cfg, 59);
  ifib::data::DatasetMeta meta;
  meta.mark_kind = ifib::data::MarkKind::Categorical;
  meta.num_marks = 5;
  ifib::data::EventSequence sa = toy_seq();
  ifib::data::EventSequence sb;
  sb.times = {0.4, 2.2};
  sb.marks = {2, 3};
  std::vector<ifib::data::EventSequence> seqs{sa, sb};

  ad::Tape tape(&model.params());
  Batch batch = make_batch(meta, seqs, {0, 1});
  double loss = tape.scalar_value(model.batch_nll(tape, batch));

  double manual = 0.0;
  int events = 0;
  for (const auto& s : seqs) {
    auto states = model.encode(s, s.size());
    for (size_t i = 0; i < s.size(); ++i) {
      manual += -std::log(model.density(states[i], s.marks[i], s.times[i]));
      ++events;
    }
  }
  manual /= events;
  CHECK(loss == doctest::Approx(manual).epsilon(1e-9));
}

TEST_CASE("single event loss is -log density") {
  IfibCModel model(toy_cfg(), 61);
  ifib::data::DatasetMeta meta;
  meta.mark_kind = ifib::data::MarkKind::Categorical;
  meta.num_marks = 5;
  ifib::data::EventSequence s;
  s.times = {0.9};
  s.marks = {3};
  std::vector<ifib::data::EventSequence> seqs{s};
  ad::Tape tape(&model.params());
  double loss = tape.scalar_value(model.batch_nll(tape, make_batch(meta, seqs, {0})));
  HistoryState h0 = model.encode(s, 0)[0];
  CHECK(loss == doctest::Approx(-std::log(model.density(h0, 3, 0.9))).epsilon(1e-9));
}

TEST_CASE("nll gradients match finite differences") {
  IfibCConfig cfg = toy_cfg(3);
  cfg.encoder.d_embed = 3;
  cfg.encoder.d_hidden = 4;
  cfg.d_f = 4;
  cfg.iem_hidden = 5;
  cfg.iem_layers = 2;
  IfibCModel model(cfg, 67);
  ifib::data::DatasetMeta meta;
  meta.mark_kind = ifib::data::MarkKind::Categorical;
  meta.num_marks = 3;
  ifib::data::EventSequence s;
  s.times = {0.5, 1.8, 2.0};
  s.marks = {0, 2, 1};
  std::vector<ifib::data::EventSequence> seqs{s};
  Batch batch = make_batch(meta, seqs, {0});

  auto loss_value = [&]() {
    ad::Tape tape(&model.params());
    return tape.scalar_value(model.batch_nll(tape, batch));
  };
  model.params().zero_grad();
  {
    ad::Tape tape(&model.params());
    tape.backward(model.batch_nll(tape, batch));
  }
  double h = 1e-6;
  for (int p = 0; p < model.params().size(); ++p) {
    auto& arr = model.params().at(p);
    for (int i = 0; i < arr.raw.rows(); ++i)
      for (int j = 0; j < arr.raw.cols(); ++j) {
        double keep = arr.raw(i, j);
        arr.raw(i, j) = keep + h;
        double fp = loss_value();
        arr.raw(i, j) = keep - h;
        double fm = loss_value();
        arr.raw(i, j) = keep;
        double fd = (fp - fm) / (2 * h);
        double g = arr.grad(i, j);
        INFO(arr.name, "(", i, ",", j, ")");
        CHECK(std::abs(g - fd) <= 1e-5 + 1e-3 * std::max(std::abs(g), std::abs(fd)));
      }
  }
}

}  // TEST_SUITE
