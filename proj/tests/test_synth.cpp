#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ifib/synth.hpp"

using namespace ifib::synth;

namespace {

// Simpson quadrature, fine enough for 1e-7 accuracy on these smooth kernels.
template <typename F>
double simpson(F f, double a, double b, int n = 2000) {
  if (n % 2) ++n;
  double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

std::vector<TruthProcess> all_kinds() {
  TruthProcess pw = TruthProcess::poisson(0.75);
  pw.marks.kind = MarkScheme::Kind::UniformBox;
  pw.marks.bounds = {{0, 1}, {0, 1}};
  return {TruthProcess::hawkes1(), TruthProcess::hawkes2(), TruthProcess::poisson(1.0),
          TruthProcess::self_correct(), TruthProcess::renewal(), pw};
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("hawkes1 baseline intensity with empty history") {
  TruthProcess p = TruthProcess::hawkes1();
  CHECK(truth_intensity(p, {}, 3.0) == doctest::Approx(0.2));
}

TEST_CASE("hawkes1 intensity just after one event") {
  TruthProcess p = TruthProcess::hawkes1();
  std::vector<double> h{0.0};
  CHECK(truth_intensity(p, h, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("self-correct intensity at the last event") {
  TruthProcess p = TruthProcess::self_correct(1.0, 1.0);
  std::vector<double> h{0.4, 1.1};
  CHECK(truth_intensity(p, h, 1.1) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("rejects time before the last event") {
  TruthProcess p = TruthProcess::hawkes1();
  std::vector<double> h{1.0};
  CHECK_THROWS_AS(truth_intensity(p, h, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(truth_cumulative_intensity(p, h, 0.5), std::invalid_argument);
}

TEST_CASE("poisson cumulative intensity is rate times gap") {
  TruthProcess p = TruthProcess::poisson(1.0);
  std::vector<double> h{1.0};
  CHECK(truth_cumulative_intensity(p, h, 3.0) == doctest::Approx(2.0));
}

TEST_CASE("hawkes excitation integral converges to a/b") {
  TruthProcess p = TruthProcess::hawkes1();
  std::vector<double> h{0.0};
  double t = 50.0;
  CHECK(truth_cumulative_intensity(p, h, t) - p.mu * t == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("cumulative intensity vanishes at t_l for every kind") {
  for (const auto& p : all_kinds()) {
    std::vector<double> h{0.3, 0.9};
    CHECK(truth_cumulative_intensity(p, h, 0.9) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(truth_survival(p, h, 0.9) == doctest::Approx(1.0));
  }
}

TEST_CASE("survival is nonincreasing in t") {
  for (const auto& p : all_kinds()) {
    std::vector<double> h{0.2, 1.4};
    double prev = 1.0;
    for (double dt = 0.0; dt < 6.0; dt += 0.137) {
      double s = truth_survival(p, h, 1.4 + dt);
      CHECK(s <= prev + 1e-15);
      prev = s;
    }
  }
}

TEST_CASE("poisson joint density examples with K=5") {
  TruthProcess p = TruthProcess::poisson(1.0);
  std::vector<double> h{2.0};
  CHECK(truth_joint_density(p, h, 3, 2.0) == doctest::Approx(0.2));
  CHECK(truth_joint_density(p, h, 0, 2.0 + std::log(2.0)) == doctest::Approx(0.1));
  CHECK_THROWS_AS(truth_joint_density(p, h, 7, 2.5), std::invalid_argument);
}

TEST_CASE("closed-form cumulative matches quadrature of the intensity") {
  for (const auto& p : all_kinds()) {
    std::vector<double> h{0.1, 0.8, 1.3};
    double tl = 1.3;
    for (double dt : {0.4, 1.7, 3.0}) {
      double quad = simpson([&](double u) { return truth_intensity(p, h, u); }, tl, tl + dt);
      double closed = truth_cumulative_intensity(p, h, tl + dt);
      CHECK(closed == doctest::Approx(quad).epsilon(1e-6));
    }
  }
}

TEST_CASE("hawkes joint density agrees with quadrature-based survival") {
  TruthProcess p = TruthProcess::hawkes1();
  std::vector<double> h{0.0, 0.6};
  for (double dt : {0.1, 0.9, 2.3}) {
    double t = 0.6 + dt;
    double lam = truth_intensity(p, h, t);
    double quad = simpson([&](double u) { return truth_intensity(p, h, u); }, 0.6, t);
    double expect = 0.2 * lam * std::exp(-quad);
    CHECK(truth_joint_density(p, h, 0, t) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("derivative of cumulative intensity is the intensity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 4.0);
  for (const auto& p : all_kinds()) {
    std::vector<double> h{0.5, 1.9};
    for (int i = 0; i < 40; ++i) {
      double t = 1.9 + u(rng);
      double fd = (truth_cumulative_intensity(p, h, t + 1e-5) -
                   truth_cumulative_intensity(p, h, t - 1e-5)) /
                  2e-5;
      double lam = truth_intensity(p, h, t);
      CHECK(std::abs(fd - lam) <= 1e-4 * std::max(1.0, std::abs(lam)));
    }
  }
}

TEST_CASE("joint density integrates to one over marks and time") {
  for (const auto& p : all_kinds()) {
    if (p.marks.kind != MarkScheme::Kind::UniformCategorical) continue;
    std::vector<double> h{0.2, 1.0};
    // dt = 45 comfortably exceeds mean + 10 std of the conditional gap even
    // for the slow mu = 0.2 Hawkes tail
    double total = 0.0;
    for (int m = 0; m < p.marks.num_marks; ++m)
      total += simpson([&](double u) { return truth_joint_density(p, h, m, u); }, 1.0, 46.0, 9000);
    CHECK(total >= 0.999);
    CHECK(total <= 1.0 + 1e-6);
  }
}

TEST_CASE("renewal joint density is the log-normal pdf over K") {
  TruthProcess p = TruthProcess::renewal(1.0);
  std::vector<double> h{1.0};
  for (double dt : {0.2, 1.0, 2.5}) {
    double lg = std::log(dt);
    double pdf = std::exp(-lg * lg / 2.0) / (dt * std::sqrt(2.0 * std::numbers::pi));
    CHECK(truth_joint_density(p, h, 0, 1.0 + dt) == doctest::Approx(pdf / 5.0).epsilon(1e-10));
  }
}

TEST_CASE("renewal hazard matches the paper's erf expression") {
  TruthProcess p = TruthProcess::renewal(1.0);
  std::vector<double> h{0.0};
  for (double t : {0.3, 0.8, 1.5, 3.0}) {
    double formula = (-0.797885 * std::exp(-0.5 * std::log(t) * std::log(t))) /
                     (-t + t * std::erf(0.707107 * std::log(t)));
    CHECK(truth_intensity(p, h, t) == doctest::Approx(formula).epsilon(1e-5));
  }
}

TEST_CASE("zero horizon yields an empty sequence") {
  SimulateOptions opt;
  opt.horizon = 0.0;
  CHECK(simulate_sequence(TruthProcess::poisson(1.0), opt, 42).size() == 0);
}

TEST_CASE("unstable hawkes parameters are rejected") {
  TruthProcess p = TruthProcess::hawkes1(0.2, 1.2, 1.0);
  SimulateOptions opt;
  CHECK_THROWS_WITH_AS(simulate_sequence(p, opt, 1), doctest::Contains("unstable"),
                       std::invalid_argument);
}

TEST_CASE("poisson event count obeys the law of large numbers") {
  TruthProcess p = TruthProcess::poisson(1.0);
  SimulateOptions opt;
  opt.horizon = 1000.0;
  // 10k replications of horizon-1000 runs would be slow in CI; 400 runs give
  // sigma/mean ~ 0.16%, plenty to catch a broken sampler at 3 sigma.
  const int reps = 400;
  double total = 0.0;
  for (int r = 0; r < reps; ++r) total += static_cast<double>(simulate_sequence(p, opt, r).size());
  double mean = total / reps;
  double sigma = std::sqrt(1000.0 / reps);
  CHECK(std::abs(mean - 1000.0) <= 3.0 * sigma);
}

TEST_CASE("hawkes long-run rate matches branching theory") {
  TruthProcess p = TruthProcess::hawkes1();
  SimulateOptions opt;
  opt.horizon = 20000.0;
  double count = static_cast<double>(simulate_sequence(p, opt, 7).size());
  // stationary rate mu/(1-a/b) = 1; count std ~ sqrt(T mu/(1-rho)^3) = 5 sqrt(T)
  double sigma = 5.0 * std::sqrt(opt.horizon);
  CHECK(std::abs(count - opt.horizon) <= 3.0 * sigma);
}

TEST_CASE("renewal mean inter-event time matches exp(sigma^2/2)") {
  TruthProcess p = TruthProcess::renewal(1.0);
  SimulateOptions opt;
  opt.horizon = 30000.0;
  auto seq = simulate_sequence(p, opt, 11);
  double rate = static_cast<double>(seq.size()) / opt.horizon;
  CHECK(rate == doctest::Approx(std::exp(-0.5)).epsilon(0.05));
}

TEST_CASE("marks fall in their declared domains") {
  TruthProcess pc = TruthProcess::poisson(1.0);
  SimulateOptions opt;
  opt.horizon = 200.0;
  auto seq = simulate_sequence(pc, opt, 5);
  for (int m : seq.marks) {
    CHECK(m >= 0);
    CHECK(m < 5);
  }

  TruthProcess pn = TruthProcess::poisson(0.75);
  pn.marks.kind = MarkScheme::Kind::UniformBox;
  pn.marks.bounds = {{0, 1}, {-1, 2}};
  auto nseq = simulate_sequence(pn, opt, 6);
  for (const auto& v : nseq.vec_marks) {
    CHECK(v[0] >= 0.0);
    CHECK(v[0] <= 1.0);
    CHECK(v[1] >= -1.0);
    CHECK(v[1] <= 2.0);
  }
}

TEST_CASE("spinning wheel density integrates to one over the box") {
  MarkScheme s;
  s.kind = MarkScheme::Kind::SpinningWheel;
  s.bounds = {{-2, 2}, {-2, 2}};
  s.leaves = 7;
  int n = 400;
  double hstep = 4.0 / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double x = -2.0 + (i + 0.5) * hstep;
      double y = -2.0 + (j + 0.5) * hstep;
      double pt[2] = {x, y};
      acc += mark_density(s, std::span<const double>(pt, 2));
    }
  }
  acc *= hstep * hstep;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("generate_dataset is deterministic and honors the counts") {
  TruthProcess p = TruthProcess::hawkes1();
  GenerateCounts counts{20, 5, 5};
  SimulateOptions opt;
  opt.horizon = 15.0;
  auto a = generate_dataset(p, counts, opt, 99);
  auto b = generate_dataset(p, counts, opt, 99);
  REQUIRE(a.train.size() == 20);
  REQUIRE(a.validation.size() == 5);
  REQUIRE(a.test.size() == 5);
  for (size_t i = 0; i < a.train.size(); ++i) {
    REQUIRE(a.train[i].size() == b.train[i].size());
    for (size_t j = 0; j < a.train[i].size(); ++j) {
      CHECK(a.train[i].times[j] == b.train[i].times[j]);
      CHECK(a.train[i].marks[j] == b.train[i].marks[j]);
    }
  }
  // different splits see different streams
  bool differs = a.train[0].size() != a.validation[0].size();
  if (!differs && a.train[0].size() > 0) differs = a.train[0].times[0] != a.validation[0].times[0];
  CHECK(differs);

  auto empty = generate_dataset(p, GenerateCounts{0, 2, 2}, opt, 1);
  CHECK(empty.train.empty());
}

TEST_CASE("truth process json round-trips") {
  TruthProcess p = TruthProcess::hawkes2();
  p.marks.kind = MarkScheme::Kind::UniformBox;
  p.marks.bounds = {{0, 1}, {0, 1}};
  std::string path = "/tmp/ifib_truth_test.json";
  save_truth(p, path);
  TruthProcess q = load_truth(path);
  CHECK(q.kind == ProcessKind::Hawkes2);
  CHECK(q.a2 == doctest::Approx(0.4));
  CHECK(q.b2 == doctest::Approx(20.0));
  CHECK(q.marks.kind == MarkScheme::Kind::UniformBox);
}

}  // TEST_SUITE
