#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "ifib/inference.hpp"

using namespace ifib::infer;
using namespace ifib::models;
namespace synth = ifib::synth;

namespace {

// Hand-rolled law for predictor unit tests: exponential time, fixed weights.
class StubLaw : public CondLaw {
 public:
  StubLaw(std::vector<double> weights, double rate, double t_l = 0.0, double scale = 1.0)
      : w_(std::move(weights)), rate_(rate), t_l_(t_l), scale_(scale) {}
  int num_marks() const override { return static_cast<int>(w_.size()); }
  double t_last() const override { return t_l_; }
  double density(int mark, double t) const override {
    return scale_ * w_[mark] * rate_ * std::exp(-rate_ * (t - t_l_));
  }
  double tail_mass(int mark, double t) const override {
    return scale_ * w_[mark] * std::exp(-rate_ * (t - t_l_));
  }

 private:
  std::vector<double> w_;
  double rate_, t_l_, scale_;
};

IfibCConfig small_ifibc(int k = 5) {
  IfibCConfig cfg;
  cfg.encoder.mark_kind = ifib::data::MarkKind::Categorical;
  cfg.encoder.num_marks = k;
  cfg.encoder.d_embed = 4;
  cfg.encoder.d_hidden = 5;
  cfg.d_f = 6;
  cfg.iem_hidden = 7;
  cfg.iem_layers = 2;
  return cfg;
}

FennConfig small_fenn(int k = 4) {
  FennConfig cfg;
  cfg.encoder.mark_kind = ifib::data::MarkKind::Categorical;
  cfg.encoder.num_marks = k;
  cfg.encoder.d_embed = 4;
  cfg.encoder.d_hidden = 5;
  cfg.d_f = 6;
  cfg.iem_hidden = 7;
  cfg.iem_layers = 2;
  return cfg;
}

ifib::data::EventSequence cat_seq() {
  ifib::data::EventSequence s;
  s.times = {0.5, 1.4, 2.2};
  s.marks = {1, 3, 0};
  return s;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("truth poisson cdf and predicted time are analytic") {
  synth::TruthProcess p = synth::TruthProcess::poisson(1.0);
  TruthLaw law(p, {2.0});
  CHECK(law.cdf_time(2.0) == doctest::Approx(0.0));
  CHECK(law.cdf_time(2.0 + std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-12));

  PredictorConfig cfg;
  TimePrediction tp = predict_time(law, cfg);
  CHECK(tp.crossed);
  CHECK(tp.t_p == doctest::Approx(2.0 + std::log(2.0)).epsilon(1e-6));

  cfg.q = 0.25;
  TimePrediction tq = predict_time(law, cfg);
  CHECK(tq.t_p == doctest::Approx(2.0 + std::log(4.0 / 3.0)).epsilon(1e-6));
}

TEST_CASE("bisection keeps the bracketing guarantee on random monotone laws") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> urate(0.2, 3.0), uq(0.05, 0.95);
  PredictorConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    double rate = urate(rng);
    synth::TruthProcess p = synth::TruthProcess::poisson(rate);
    TruthLaw law(p, {0.5});
    cfg.q = uq(rng);
    TimePrediction tp = predict_time(law, cfg);
    REQUIRE(tp.crossed);
    CHECK(law.cdf_time(std::max(law.t_last(), tp.t_p - cfg.tol)) < cfg.q);
    CHECK(law.cdf_time(tp.t_p + cfg.tol) >= cfg.q);
  }
}

TEST_CASE("flat laws cap at t_max with the crossing flag cleared") {
  // tail mass that barely decays keeps the CDF below q forever
  StubLaw law({0.495, 0.495}, 1e-9);
  PredictorConfig cfg;
  cfg.t_max = 50.0;
  TimePrediction tp = predict_time(law, cfg);
  CHECK_FALSE(tp.crossed);
  CHECK(tp.t_p == doctest::Approx(50.0));
}

TEST_CASE("mark argmax picks the densest mark with low-index ties") {
  StubLaw law({0.3, 0.7}, 1.0);
  CHECK(predict_mark_at_time(law, 0.5).mark == 1);
  StubLaw tie({0.5, 0.5}, 1.0);
  CHECK(predict_mark_at_time(tie, 0.5).mark == 0);
  StubLaw zero({0.0, 0.0}, 1.0);
  MarkPrediction mp = predict_mark_at_time(zero, 0.5);
  CHECK(mp.mark == 0);
  CHECK(mp.degenerate);
}

TEST_CASE("mark argmax is invariant under uniform positive rescaling") {
  StubLaw law({0.2, 0.5, 0.3}, 1.3, 0.0, 1.0);
  StubLaw scaled({0.2, 0.5, 0.3}, 1.3, 0.0, 7.7);
  for (double t : {0.1, 1.0, 3.0})
    CHECK(predict_mark_at_time(law, t).mark == predict_mark_at_time(scaled, t).mark);
}

TEST_CASE("ifib-c cdf is exactly zero at t_l and its marginal argmax matches gamma") {
  IfibCModel model(small_ifibc(), 7);
  HistoryState h = model.encode(cat_seq(), 3).back();
  IfibCLaw law(model, h);
  CHECK(law.cdf_time(h.t_last) == 0.0);

  MarkPrediction mp = predict_mark_marginal(law);
  int best = 0;
  for (int m = 1; m < 5; ++m)
    if (model.gamma(h, m, h.t_last) > model.gamma(h, best, h.t_last)) best = m;
  CHECK(mp.mark == best);
}

TEST_CASE("ifib-c sum of marginals is one within 1e-9; K=1 is exact") {
  IfibCModel model(small_ifibc(), 11);
  HistoryState h = model.encode(cat_seq(), 2).back();
  CHECK(std::abs(sum_mark_marginals(IfibCLaw(model, h)) - 1.0) <= 1e-9);

  IfibCModel one(small_ifibc(1), 13);
  ifib::data::EventSequence s;
  s.times = {0.4};
  s.marks = {0};
  HistoryState h1 = one.encode(s, 1).back();
  CHECK(sum_mark_marginals(IfibCLaw(one, h1)) == 1.0);
}

TEST_CASE("ifib-c conditional time cdf is exact against quadrature") {
  IfibCModel model(small_ifibc(), 17);
  HistoryState h = model.encode(cat_seq(), 3).back();
  IfibCLaw law(model, h);
  int mark = 2;
  double p_m = law.tail_mass(mark, h.t_last);
  for (double dt : {0.4, 1.5, 4.0}) {
    double t = h.t_last + dt;
    // quadrature of the density over [t_l, t]
    int n = 2000;
    double step = dt / n;
    double acc = law.density(mark, h.t_last) + law.density(mark, t);
    for (int i = 1; i < n; ++i)
      acc += law.density(mark, h.t_last + i * step) * (i % 2 ? 4.0 : 2.0);
    acc *= step / 3.0;
    double cdf = 1.0 - law.tail_mass(mark, t) / p_m;
    CHECK(std::abs(cdf - acc / p_m) <= 1e-4);
  }
}

TEST_CASE("truth poisson conditional time equals the unconditional answer") {
  synth::TruthProcess p = synth::TruthProcess::poisson(1.0);
  TruthLaw law(p, {1.0});
  PredictorConfig cfg;
  for (int m = 0; m < 5; ++m) {
    TimePrediction tp = predict_time_given_mark(law, m, cfg);
    CHECK(tp.t_p == doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-6));
  }
}

TEST_CASE("fenn cdf at t_l is strictly positive (the documented defect)") {
  FennModel model(small_fenn(), 19);
  HistoryState h = model.encode(cat_seq(), 3).back();
  FennLaw law(model, h, 50.0, 256);
  CHECK(law.cdf_time(h.t_last) > 0.0);
}

TEST_CASE("fenn conditional time prediction shifts with the sampling density") {
  FennModel model(small_fenn(), 23);
  HistoryState h = model.encode(cat_seq(), 2).back();
  PredictorConfig cfg;
  FennLaw coarse(model, h, 40.0, 24);
  FennLaw fine(model, h, 40.0, 4096);
  TimePrediction tc = predict_time_given_mark(coarse, 1, cfg);
  TimePrediction tf = predict_time_given_mark(fine, 1, cfg);
  CHECK(tc.t_p != tf.t_p);  // the Appendix-F sensitivity, resolved by more samples
  FennLaw finer(model, h, 40.0, 8192);
  TimePrediction tff = predict_time_given_mark(finer, 1, cfg);
  CHECK(std::abs(tff.t_p - tf.t_p) < std::abs(tf.t_p - tc.t_p) + 1e-9);
}

TEST_CASE("fenn marginal-sum sweep converges monotonically toward its limit") {
  FennModel model(small_fenn(), 29);
  HistoryState h = model.encode(cat_seq(), 3).back();
  std::vector<int> counts{16, 64, 256, 1024, 4096};
  auto rows = marginal_sum_sweep(model, h, 60.0, counts);
  REQUIRE(rows.size() == counts.size());
  double limit = rows.back().sum;
  double prev_gap = std::abs(rows[0].sum - limit);
  for (size_t i = 1; i + 1 < rows.size(); ++i) {
    double gap = std::abs(rows[i].sum - limit);
    CHECK(gap <= prev_gap + 1e-9);
    prev_gap = gap;
  }
  // bounded-Lambda defect: the limit stays strictly below 1
  CHECK(limit < 1.0);
}

TEST_CASE("probe curves carry the analytic truth values and the right shape") {
  synth::TruthProcess p = synth::TruthProcess::poisson(1.0);
  TruthLaw law(p, {0.0});
  std::vector<double> ts{0.0, 1.0};
  DensityCurve curve = probe_density_curve(law, ts);
  REQUIRE(curve.values.rows() == 5);
  REQUIRE(curve.values.cols() == 2);
  CHECK(curve.values(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(curve.values(3, 1) == doctest::Approx(0.2 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(curve.mark_labels.size() == 5);
}

TEST_CASE("csv export writes one row per mark and grid point") {
  synth::TruthProcess p = synth::TruthProcess::poisson(1.0);
  TruthLaw law(p, {0.0});
  std::vector<double> ts{0.0, 0.5, 1.0};
  DensityCurve curve = probe_density_curve(law, ts);
  std::string path = "/tmp/ifib_curve_test.csv";
  write_csv(curve, path);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 1 + 5 * 3);
}

TEST_CASE("fidelity report is perfect when the model is the truth") {
  synth::TruthProcess p = synth::TruthProcess::hawkes1();
  synth::SimulateOptions opt;
  opt.horizon = 8.0;
  std::vector<ifib::data::EventSequence> test;
  for (int i = 0; i < 4; ++i) {
    auto s = synth::simulate_sequence(p, opt, 100 + i);
    if (s.size() > 0) test.push_back(s);
  }
  REQUIRE(!test.empty());
  auto factory = [&](const ifib::data::EventSequence& seq, size_t prefix) {
    std::vector<double> hist(seq.times.begin(), seq.times.begin() + prefix);
    return std::make_unique<TruthLaw>(p, hist);
  };
  FidelityOptions fopt;
  fopt.grid_points = 60;
  fopt.window = 6.0;
  auto report = fidelity_report(factory, factory, test, fopt);
  CHECK(report.spearman == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.l1 == doctest::Approx(0.0));
  CHECK(report.relative_nll == doctest::Approx(0.0));
  CHECK(report.per_sequence.size() == test.size());
}

TEST_CASE("prediction report on the truth oracle has sane shapes and ranges") {
  synth::TruthProcess p = synth::TruthProcess::poisson(1.0);
  synth::SimulateOptions opt;
  opt.horizon = 6.0;
  std::vector<ifib::data::EventSequence> test;
  for (int i = 0; i < 3; ++i) {
    auto s = synth::simulate_sequence(p, opt, 55 + i);
    if (s.size() > 0) test.push_back(s);
  }
  REQUIRE(!test.empty());
  auto factory = [&](const ifib::data::EventSequence& seq, size_t prefix) {
    std::vector<double> hist(seq.times.begin(), seq.times.begin() + prefix);
    return std::make_unique<TruthLaw>(p, hist);
  };
  PredictorConfig cfg;
  cfg.t_max = 100.0;
  auto report = prediction_report(factory, test, cfg);
  CHECK(report.mae.q25 <= report.mae.q50);
  CHECK(report.mae.q50 <= report.mae.q75);
  CHECK(report.mae_e.q25 <= report.mae_e.q75);
  CHECK(report.macro_f1_time_event >= 0.0);
  CHECK(report.macro_f1_time_event <= 1.0);
}

TEST_CASE("numeric law predictions work end to end on the truth oracle") {
  synth::TruthProcess p = synth::TruthProcess::poisson(0.75);
  p.marks.kind = synth::MarkScheme::Kind::UniformBox;
  p.marks.bounds = {{0, 1}, {0, 1}};
  TruthLawN law(p, {1.0});
  PredictorConfig cfg;
  cfg.mark_grid = 8;
  TimePrediction tp = predict_time_n(law, cfg);
  CHECK(tp.t_p == doctest::Approx(1.0 + std::log(2.0) / 0.75).epsilon(1e-5));
  std::vector<double> mark{0.5, 0.5};
  TimePrediction tpe = predict_time_given_mark_n(law, mark, cfg);
  CHECK(tpe.t_p == doctest::Approx(tp.t_p).epsilon(1e-5));  // marks independent of time
  auto probe = predict_mark_marginal_n(law, cfg);
  CHECK(probe.size() == 2);
}

TEST_CASE("ifib-n law composes with the numeric predictors") {
  IfibNConfig cfg;
  cfg.encoder.mark_kind = ifib::data::MarkKind::Numeric;
  cfg.encoder.mark_dims = 1;
  cfg.encoder.d_embed = 4;
  cfg.encoder.d_hidden = 5;
  cfg.d_u = 5;
  cfg.d_f = 6;
  cfg.iem_hidden = 6;
  cfg.iem_layers = 2;
  cfg.bounds = {{0.0, 1.0}};
  IfibNModel model(cfg, 31);
  ifib::data::EventSequence s;
  s.times = {0.6, 1.1};
  s.vec_marks = {{0.3}, {0.7}};
  HistoryState h = model.encode(s, 2).back();
  IfibNLaw law(model, h);
  CHECK(law.cdf_time(h.t_last) == 0.0);
  PredictorConfig pc;
  pc.t_max = 1e4;
  pc.mark_grid = 8;
  TimePrediction tp = predict_time_n(law, pc);
  CHECK(tp.crossed);
  CHECK(law.cdf_time(tp.t_p + pc.tol) >= 0.5);
  std::vector<double> mark{0.45};
  TimePrediction tpe = predict_time_given_mark_n(law, mark, pc);
  CHECK(tpe.t_p >= h.t_last);
}

TEST_CASE("horizon cap follows mean + 10 std capped at 1e6") {
  ifib::data::EventSequence s;
  s.times = {1.0, 2.0, 4.0};  // gaps 1, 1, 2
  std::vector<ifib::data::EventSequence> train{s};
  double mean = 4.0 / 3.0;
  double var = (1.0 + 1.0 + 4.0) / 3.0 - mean * mean;
  CHECK(horizon_cap(train) == doctest::Approx(mean + 10.0 * std::sqrt(var)).epsilon(1e-12));
  CHECK(horizon_cap({}) == doctest::Approx(1e6));
}

}  // TEST_SUITE
