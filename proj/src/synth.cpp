#include "ifib/synth.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

using nlohmann::json;

namespace ifib::synth {

ProcessKind process_kind_from_string(const std::string& s) {
  if (s == "hawkes1") return ProcessKind::Hawkes1;
  if (s == "hawkes2") return ProcessKind::Hawkes2;
  if (s == "poisson") return ProcessKind::Poisson;
  if (s == "selfcorrect") return ProcessKind::SelfCorrect;
  if (s == "renewal") return ProcessKind::StationaryRenewal;
  throw std::invalid_argument("unknown process kind: " + s);
}

std::string to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::Hawkes1: return "hawkes1";
    case ProcessKind::Hawkes2: return "hawkes2";
    case ProcessKind::Poisson: return "poisson";
    case ProcessKind::SelfCorrect: return "selfcorrect";
    case ProcessKind::StationaryRenewal: return "renewal";
  }
  throw std::logic_error("bad ProcessKind");
}

void TruthProcess::validate() const {
  switch (kind) {
    case ProcessKind::Hawkes1:
    case ProcessKind::Hawkes2: {
      if (mu <= 0.0 || a1 <= 0.0 || b1 <= 0.0) throw std::invalid_argument("hawkes params > 0");
      double branching = a1 / b1;
      if (kind == ProcessKind::Hawkes2) {
        if (a2 <= 0.0 || b2 <= 0.0) throw std::invalid_argument("hawkes params > 0");
        branching += a2 / b2;
      }
      if (branching >= 1.0)
        throw std::invalid_argument("unstable Hawkes parameters (branching ratio >= 1)");
      break;
    }
    case ProcessKind::Poisson:
      if (poisson_rate <= 0.0) throw std::invalid_argument("poisson rate > 0");
      break;
    case ProcessKind::SelfCorrect:
      if (sc_mu <= 0.0 || sc_alpha <= 0.0) throw std::invalid_argument("self-correct params > 0");
      break;
    case ProcessKind::StationaryRenewal:
      if (renewal_sigma <= 0.0) throw std::invalid_argument("renewal sigma > 0");
      break;
  }
  if (marks.kind == MarkScheme::Kind::UniformCategorical) {
    if (marks.num_marks < 1) throw std::invalid_argument("num_marks >= 1");
  } else {
    if (marks.bounds.empty()) throw std::invalid_argument("numeric scheme needs bounds");
    for (auto& [a, b] : marks.bounds)
      if (!(a < b)) throw std::invalid_argument("bounds require a < b");
    if (marks.kind == MarkScheme::Kind::SpinningWheel && marks.bounds.size() != 2)
      throw std::invalid_argument("spinning wheel is 2-d");
  }
}

TruthProcess TruthProcess::hawkes1(double mu, double a, double b) {
  TruthProcess p;
  p.kind = ProcessKind::Hawkes1;
  p.mu = mu;
  p.a1 = a;
  p.b1 = b;
  return p;
}

TruthProcess TruthProcess::hawkes2() {
  TruthProcess p;
  p.kind = ProcessKind::Hawkes2;
  p.mu = 0.2;
  p.a1 = 0.4;
  p.b1 = 1.0;
  p.a2 = 0.4;
  p.b2 = 20.0;
  return p;
}

TruthProcess TruthProcess::poisson(double rate) {
  TruthProcess p;
  p.kind = ProcessKind::Poisson;
  p.poisson_rate = rate;
  return p;
}

TruthProcess TruthProcess::self_correct(double mu, double alpha) {
  TruthProcess p;
  p.kind = ProcessKind::SelfCorrect;
  p.sc_mu = mu;
  p.sc_alpha = alpha;
  return p;
}

TruthProcess TruthProcess::renewal(double sigma) {
  TruthProcess p;
  p.kind = ProcessKind::StationaryRenewal;
  p.renewal_sigma = sigma;
  return p;
}

namespace {

double t_last_of(std::span<const double> history) {
  return history.empty() ? 0.0 : history.back();
}

double lognormal_pdf(double x, double sigma) {
  if (x <= 0.0) return 0.0;
  double lg = std::log(x);
  return std::exp(-lg * lg / (2.0 * sigma * sigma)) /
         (sigma * x * std::sqrt(2.0 * std::numbers::pi));
}

// P(T > x) for the log-normal inter-event time, via erfc for tail accuracy.
double lognormal_sf(double x, double sigma) {
  if (x <= 0.0) return 1.0;
  return 0.5 * std::erfc(std::log(x) / (sigma * std::numbers::sqrt2));
}

}  // namespace

double truth_intensity(const TruthProcess& p, std::span<const double> history, double t) {
  double tl = t_last_of(history);
  if (t < tl) throw std::invalid_argument("truth_intensity: t before last event");
  switch (p.kind) {
    case ProcessKind::Hawkes1:
    case ProcessKind::Hawkes2: {
      double lam = p.mu;
      for (double ti : history) {
        double dt = t - ti;
        lam += p.a1 * std::exp(-p.b1 * dt);
        if (p.kind == ProcessKind::Hawkes2) lam += p.a2 * std::exp(-p.b2 * dt);
      }
      return lam;
    }
    case ProcessKind::Poisson:
      return p.poisson_rate;
    case ProcessKind::SelfCorrect:
      return std::exp(p.sc_mu * (t - tl) - p.sc_alpha * static_cast<double>(history.size()));
    case ProcessKind::StationaryRenewal: {
      double dt = t - tl;
      double sf = lognormal_sf(dt, p.renewal_sigma);
      return lognormal_pdf(dt, p.renewal_sigma) / sf;
    }
  }
  throw std::logic_error("bad ProcessKind");
}

double truth_cumulative_intensity(const TruthProcess& p, std::span<const double> history,
                                  double t) {
  double tl = t_last_of(history);
  if (t < tl) throw std::invalid_argument("truth_cumulative_intensity: t before last event");
  double dt = t - tl;
  switch (p.kind) {
    case ProcessKind::Hawkes1:
    case ProcessKind::Hawkes2: {
      double acc = p.mu * dt;
      for (double ti : history) {
        acc += (p.a1 / p.b1) *
               (std::exp(-p.b1 * (tl - ti)) - std::exp(-p.b1 * (t - ti)));
        if (p.kind == ProcessKind::Hawkes2)
          acc += (p.a2 / p.b2) *
                 (std::exp(-p.b2 * (tl - ti)) - std::exp(-p.b2 * (t - ti)));
      }
      return acc;
    }
    case ProcessKind::Poisson:
      return p.poisson_rate * dt;
    case ProcessKind::SelfCorrect: {
      double n = static_cast<double>(history.size());
      return std::exp(-p.sc_alpha * n) * std::expm1(p.sc_mu * dt) / p.sc_mu;
    }
    case ProcessKind::StationaryRenewal:
      return -std::log(lognormal_sf(dt, p.renewal_sigma));
  }
  throw std::logic_error("bad ProcessKind");
}

double truth_survival(const TruthProcess& p, std::span<const double> history, double t) {
  return std::exp(-truth_cumulative_intensity(p, history, t));
}

double mark_density(const MarkScheme& s, int mark) {
  if (s.kind != MarkScheme::Kind::UniformCategorical)
    throw std::invalid_argument("categorical mark on a numeric scheme");
  if (mark < 0 || mark >= s.num_marks) throw std::invalid_argument("mark out of range");
  return 1.0 / static_cast<double>(s.num_marks);
}

namespace {

struct WheelLeaf {
  double cx, cy;       // component mean
  double ur_x, ur_y;   // radial unit vector
  double ut_x, ut_y;   // tangential unit vector
};

constexpr double kWheelRadius = 1.0;
constexpr double kWheelSigmaR = 0.1;
constexpr double kWheelSigmaT = 0.35;

WheelLeaf wheel_leaf(int k, int leaves) {
  double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(leaves);
  WheelLeaf l;
  l.ur_x = std::cos(th);
  l.ur_y = std::sin(th);
  l.ut_x = -l.ur_y;
  l.ut_y = l.ur_x;
  l.cx = kWheelRadius * l.ur_x;
  l.cy = kWheelRadius * l.ur_y;
  return l;
}

double wheel_density(const MarkScheme& s, double x, double y) {
  double dens = 0.0;
  for (int k = 0; k < s.leaves; ++k) {
    WheelLeaf l = wheel_leaf(k, s.leaves);
    double dx = x - l.cx, dy = y - l.cy;
    double r = dx * l.ur_x + dy * l.ur_y;   // coordinates in the leaf frame
    double t = dx * l.ut_x + dy * l.ut_y;
    double q = (r * r) / (kWheelSigmaR * kWheelSigmaR) + (t * t) / (kWheelSigmaT * kWheelSigmaT);
    dens += std::exp(-0.5 * q) / (2.0 * std::numbers::pi * kWheelSigmaR * kWheelSigmaT);
  }
  return dens / static_cast<double>(s.leaves);
}

}  // namespace

double mark_density(const MarkScheme& s, std::span<const double> mark) {
  switch (s.kind) {
    case MarkScheme::Kind::UniformCategorical:
      throw std::invalid_argument("numeric mark on a categorical scheme");
    case MarkScheme::Kind::UniformBox: {
      if (mark.size() != s.bounds.size()) throw std::invalid_argument("mark dim mismatch");
      double vol = 1.0;
      for (size_t d = 0; d < s.bounds.size(); ++d) {
        if (mark[d] < s.bounds[d].first || mark[d] > s.bounds[d].second)
          throw std::invalid_argument("mark outside bounds");
        vol *= s.bounds[d].second - s.bounds[d].first;
      }
      return 1.0 / vol;
    }
    case MarkScheme::Kind::SpinningWheel: {
      if (mark.size() != 2) throw std::invalid_argument("spinning wheel marks are 2-d");
      return wheel_density(s, mark[0], mark[1]);
    }
  }
  throw std::logic_error("bad MarkScheme");
}

double truth_joint_density(const TruthProcess& p, std::span<const double> history, int mark,
                           double t) {
  return mark_density(p.marks, mark) * truth_intensity(p, history, t) *
         truth_survival(p, history, t);
}

double truth_joint_density(const TruthProcess& p, std::span<const double> history,
                           std::span<const double> mark, double t) {
  return mark_density(p.marks, mark) * truth_intensity(p, history, t) *
         truth_survival(p, history, t);
}

// ------------------------------------------------------------- simulation

namespace {

void attach_mark(const MarkScheme& s, std::mt19937_64& rng, data::EventSequence& seq) {
  switch (s.kind) {
    case MarkScheme::Kind::UniformCategorical: {
      std::uniform_int_distribution<int> u(0, s.num_marks - 1);
      seq.marks.push_back(u(rng));
      return;
    }
    case MarkScheme::Kind::UniformBox: {
      std::vector<double> m(s.bounds.size());
      for (size_t d = 0; d < s.bounds.size(); ++d) {
        std::uniform_real_distribution<double> u(s.bounds[d].first, s.bounds[d].second);
        m[d] = u(rng);
      }
      seq.vec_marks.push_back(std::move(m));
      return;
    }
    case MarkScheme::Kind::SpinningWheel: {
      std::uniform_int_distribution<int> leaf(0, s.leaves - 1);
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (;;) {  // resample the sliver of mass outside the box
        WheelLeaf l = wheel_leaf(leaf(rng), s.leaves);
        double r = kWheelSigmaR * gauss(rng);
        double t = kWheelSigmaT * gauss(rng);
        double x = l.cx + r * l.ur_x + t * l.ut_x;
        double y = l.cy + r * l.ur_y + t * l.ut_y;
        if (x >= s.bounds[0].first && x <= s.bounds[0].second && y >= s.bounds[1].first &&
            y <= s.bounds[1].second) {
          seq.vec_marks.push_back({x, y});
          return;
        }
      }
    }
  }
}

}  // namespace

data::EventSequence simulate_sequence(const TruthProcess& p, const SimulateOptions& opt,
                                      std::uint64_t seed) {
  p.validate();
  if (opt.horizon < 0.0) throw std::invalid_argument("horizon must be >= 0");
  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     0x5e9u};
  std::mt19937_64 rng(sseq);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  data::EventSequence seq;
  seq.t_origin = opt.t_origin;
  double end = opt.t_origin + opt.horizon;
  auto full = [&] { return opt.max_events > 0 && seq.times.size() >= opt.max_events; };

  if (p.kind == ProcessKind::StationaryRenewal) {
    double t = opt.t_origin;
    while (!full()) {
      t += std::exp(p.renewal_sigma * gauss(rng));
      if (t > end) break;
      seq.times.push_back(t);
      attach_mark(p.marks, rng, seq);
    }
    return seq;
  }

  if (p.kind == ProcessKind::SelfCorrect) {
    // Intensity grows between events, so the bound holds over a lookahead
    // window only; the window advances when the exponential overshoots it.
    double window = 1.0 / p.sc_mu;
    double s = opt.t_origin;
    double tl = opt.t_origin;
    while (!full()) {
      double n = static_cast<double>(seq.times.size());
      double bound = std::exp(p.sc_mu * (s + window - tl) - p.sc_alpha * n);
      double e = expo(rng) / bound;
      if (e > window) {
        s += window;
        if (s > end) break;
        continue;
      }
      double cand = s + e;
      if (cand > end) break;
      double lam = std::exp(p.sc_mu * (cand - tl) - p.sc_alpha * n);
      if (lam > bound * (1.0 + 1e-12))
        throw std::logic_error("thinning bound violated (self-correct)");
      s = cand;
      if (unif(rng) * bound <= lam) {
        seq.times.push_back(cand);
        attach_mark(p.marks, rng, seq);
        tl = cand;
      }
    }
    return seq;
  }

  // Hawkes / Poisson: the intensity decays between events, so the value just
  // after the current point dominates until the next accepted event. The
  // bound refreshes at every candidate.
  double t = opt.t_origin;
  while (!full()) {
    double bound = truth_intensity(p, seq.times, t);
    double cand = t + expo(rng) / bound;
    if (cand > end) break;
    double lam = truth_intensity(p, seq.times, cand);
    if (lam > bound * (1.0 + 1e-12)) throw std::logic_error("thinning bound violated");
    t = cand;
    if (unif(rng) * bound <= lam) {
      seq.times.push_back(cand);
      attach_mark(p.marks, rng, seq);
    }
  }
  return seq;
}

data::DatasetMeta dataset_meta_for(const TruthProcess& p) {
  data::DatasetMeta meta;
  if (p.marks.kind == MarkScheme::Kind::UniformCategorical) {
    meta.mark_kind = data::MarkKind::Categorical;
    meta.num_marks = p.marks.num_marks;
  } else {
    meta.mark_kind = data::MarkKind::Numeric;
    meta.dims = static_cast<int>(p.marks.bounds.size());
    meta.bounds = p.marks.bounds;
  }
  return meta;
}

data::SplitDataset generate_dataset(const TruthProcess& p, const GenerateCounts& counts,
                                    const SimulateOptions& opt, std::uint64_t seed) {
  data::SplitDataset ds;
  ds.meta = dataset_meta_for(p);
  auto fill = [&](std::vector<data::EventSequence>& out, size_t n, std::uint64_t split_tag) {
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      std::uint64_t s = seed ^ (split_tag * 0x9E3779B97F4A7C15ull) ^ (i * 0xBF58476D1CE4E5B9ull);
      out.push_back(simulate_sequence(p, opt, s));
    }
  };
  fill(ds.train, counts.n_train, 1);
  fill(ds.validation, counts.n_validation, 2);
  fill(ds.test, counts.n_test, 3);
  ds.validate();
  return ds;
}

// ------------------------------------------------------------- truth.json

void save_truth(const TruthProcess& p, const std::string& path) {
  json j;
  j["kind"] = to_string(p.kind);
  j["mu"] = p.mu;
  j["a1"] = p.a1;
  j["b1"] = p.b1;
  j["a2"] = p.a2;
  j["b2"] = p.b2;
  j["poisson_rate"] = p.poisson_rate;
  j["sc_mu"] = p.sc_mu;
  j["sc_alpha"] = p.sc_alpha;
  j["renewal_sigma"] = p.renewal_sigma;
  json m;
  switch (p.marks.kind) {
    case MarkScheme::Kind::UniformCategorical:
      m["kind"] = "uniform_categorical";
      m["num_marks"] = p.marks.num_marks;
      break;
    case MarkScheme::Kind::UniformBox:
      m["kind"] = "uniform_box";
      break;
    case MarkScheme::Kind::SpinningWheel:
      m["kind"] = "spinning_wheel";
      m["leaves"] = p.marks.leaves;
      break;
  }
  if (p.marks.kind != MarkScheme::Kind::UniformCategorical) {
    m["bounds"] = json::array();
    for (auto& [a, b] : p.marks.bounds) m["bounds"].push_back({a, b});
  }
  j["marks"] = m;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

TruthProcess load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  TruthProcess p;
  p.kind = process_kind_from_string(j.at("kind").get<std::string>());
  p.mu = j.at("mu").get<double>();
  p.a1 = j.at("a1").get<double>();
  p.b1 = j.at("b1").get<double>();
  p.a2 = j.at("a2").get<double>();
  p.b2 = j.at("b2").get<double>();
  p.poisson_rate = j.at("poisson_rate").get<double>();
  p.sc_mu = j.at("sc_mu").get<double>();
  p.sc_alpha = j.at("sc_alpha").get<double>();
  p.renewal_sigma = j.at("renewal_sigma").get<double>();
  const json& m = j.at("marks");
  std::string mk = m.at("kind").get<std::string>();
  if (mk == "uniform_categorical") {
    p.marks.kind = MarkScheme::Kind::UniformCategorical;
    p.marks.num_marks = m.at("num_marks").get<int>();
  } else {
    p.marks.kind = mk == "uniform_box" ? MarkScheme::Kind::UniformBox
                                       : MarkScheme::Kind::SpinningWheel;
    for (const auto& b : m.at("bounds"))
      p.marks.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    if (m.contains("leaves")) p.marks.leaves = m.at("leaves").get<int>();
  }
  p.validate();
  return p;
}

}  // namespace ifib::synth
