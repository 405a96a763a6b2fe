#include "ifib/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ifib/parallel.hpp"

namespace ifib::infer {

double horizon_cap(const std::vector<data::EventSequence>& train) {
  double sum = 0.0, sumsq = 0.0;
  size_t n = 0;
  for (const auto& s : train)
    for (double dt : data::inter_event_times(s)) {
      sum += dt;
      sumsq += dt * dt;
      ++n;
    }
  if (n == 0) return 1e6;
  double mean = sum / static_cast<double>(n);
  double var = std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
  return std::min(mean + 10.0 * std::sqrt(var), 1e6);
}

// ------------------------------------------------------------------- CondLaw

double CondLaw::cdf_time(double t) const {
  double tails = 0.0;
  for (int m = 0; m < num_marks(); ++m) tails += tail_mass(m, t);
  return 1.0 - tails;
}

Mat CondLaw::density_grid(std::span<const double> ts) const {
  Mat out(num_marks(), static_cast<Eigen::Index>(ts.size()));
  for (int m = 0; m < num_marks(); ++m)
    for (size_t j = 0; j < ts.size(); ++j) out(m, j) = density(m, ts[j]);
  return out;
}

IfibCLaw::IfibCLaw(const models::IfibCModel& model, models::HistoryState h)
    : model_(model), h_(std::move(h)) {}

int IfibCLaw::num_marks() const { return model_.config().num_marks(); }

double IfibCLaw::density(int mark, double t) const { return model_.density(h_, mark, t); }

double IfibCLaw::tail_mass(int mark, double t) const { return model_.gamma(h_, mark, t); }

double IfibCLaw::cdf_time(double t) const { return 1.0 - model_.tail_all_marks(h_, t); }

Mat IfibCLaw::density_grid(std::span<const double> ts) const {
  return model_.density_grid(h_, ts);
}

FennLaw::FennLaw(const models::FennModel& model, models::HistoryState h, double horizon,
                 int tail_samples)
    : model_(model), h_(std::move(h)), horizon_(horizon), samples_(std::max(2, tail_samples)) {}

int FennLaw::num_marks() const { return model_.config().num_marks(); }

double FennLaw::density(int mark, double t) const { return model_.density(h_, mark, t); }

void FennLaw::ensure_table() const {
  if (!grid_.empty()) return;
  grid_.resize(samples_);
  double step = horizon_ / (samples_ - 1);
  for (int i = 0; i < samples_; ++i) grid_[i] = h_.t_last + i * step;
  Mat dens = model_.density_grid(h_, grid_);
  tail_table_ = Mat::Zero(dens.rows(), samples_);
  for (int m = 0; m < dens.rows(); ++m)
    for (int i = samples_ - 2; i >= 0; --i)
      tail_table_(m, i) = tail_table_(m, i + 1) +
                          0.5 * (dens(m, i) + dens(m, i + 1)) * (grid_[i + 1] - grid_[i]);
}

double FennLaw::tail_mass(int mark, double t) const {
  ensure_table();
  if (t >= grid_.back()) return 0.0;
  if (t <= grid_.front()) return tail_table_(mark, 0);
  auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  int i = static_cast<int>(it - grid_.begin()) - 1;
  // remaining piece of the [t, grid_[i+1]] trapezoid with interpolated density
  double frac = (t - grid_[i]) / (grid_[i + 1] - grid_[i]);
  double p_t = density(mark, t);
  double p_next = density(mark, grid_[i + 1]);
  (void)frac;
  return tail_table_(mark, i + 1) + 0.5 * (p_t + p_next) * (grid_[i + 1] - t);
}

double FennLaw::cdf_time(double t) const { return 1.0 - std::exp(-model_.big_lambda(h_, t)); }

Mat FennLaw::density_grid(std::span<const double> ts) const {
  return model_.density_grid(h_, ts);
}

TruthLaw::TruthLaw(const synth::TruthProcess& process, std::vector<double> history)
    : process_(process), history_(std::move(history)) {
  if (process_.marks.kind != synth::MarkScheme::Kind::UniformCategorical)
    throw std::invalid_argument("TruthLaw needs a categorical mark scheme");
}

int TruthLaw::num_marks() const { return process_.marks.num_marks; }

double TruthLaw::t_last() const { return history_.empty() ? 0.0 : history_.back(); }

double TruthLaw::density(int mark, double t) const {
  return synth::truth_joint_density(process_, history_, mark, t);
}

double TruthLaw::tail_mass(int mark, double t) const {
  (void)mark;
  return synth::truth_survival(process_, history_, t) / num_marks();
}

double TruthLaw::cdf_time(double t) const {
  return 1.0 - synth::truth_survival(process_, history_, t);
}

Mat TruthLaw::density_grid(std::span<const double> ts) const {
  // marks are uniform: one intensity sweep serves every row
  Mat out(num_marks(), static_cast<Eigen::Index>(ts.size()));
  for (size_t j = 0; j < ts.size(); ++j) {
    double p = synth::truth_intensity(process_, history_, ts[j]) *
               synth::truth_survival(process_, history_, ts[j]) / num_marks();
    out.col(static_cast<Eigen::Index>(j)).setConstant(p);
  }
  return out;
}

// ------------------------------------------------------------------ CondLawN

Mat CondLawN::density_grid(const Mat& marks, std::span<const double> ts) const {
  Mat out(marks.rows(), static_cast<Eigen::Index>(ts.size()));
  for (Eigen::Index i = 0; i < marks.rows(); ++i) {
    std::vector<double> m(marks.cols());
    for (Eigen::Index d = 0; d < marks.cols(); ++d) m[d] = marks(i, d);
    for (size_t j = 0; j < ts.size(); ++j) out(i, j) = density(m, ts[j]);
  }
  return out;
}

IfibNLaw::IfibNLaw(const models::IfibNModel& model, models::HistoryState h)
    : model_(model), h_(std::move(h)) {}

int IfibNLaw::dims() const { return model_.config().dims(); }

std::pair<double, double> IfibNLaw::bounds(int dim) const { return model_.config().bounds[dim]; }

double IfibNLaw::density(std::span<const double> mark, double t) const {
  return model_.density(h_, mark, t);
}

double IfibNLaw::cube_tail(std::span<const double> lo, std::span<const double> hi,
                           double t) const {
  return model_.cube_tail(h_, lo, hi, t);
}

double IfibNLaw::cdf_time(double t) const { return 1.0 - model_.time_tail(h_, t); }

Mat IfibNLaw::density_grid(const Mat& marks, std::span<const double> ts) const {
  return model_.density_grid(h_, marks, ts);
}

TruthLawN::TruthLawN(const synth::TruthProcess& process, std::vector<double> history)
    : process_(process), history_(std::move(history)) {
  if (process_.marks.kind == synth::MarkScheme::Kind::UniformCategorical)
    throw std::invalid_argument("TruthLawN needs a numeric mark scheme");
}

int TruthLawN::dims() const { return static_cast<int>(process_.marks.bounds.size()); }

std::pair<double, double> TruthLawN::bounds(int dim) const { return process_.marks.bounds[dim]; }

double TruthLawN::t_last() const { return history_.empty() ? 0.0 : history_.back(); }

double TruthLawN::density(std::span<const double> mark, double t) const {
  return synth::truth_joint_density(process_, history_, mark, t);
}

double TruthLawN::mark_cube_mass(std::span<const double> lo, std::span<const double> hi) const {
  const synth::MarkScheme& s = process_.marks;
  if (s.kind == synth::MarkScheme::Kind::UniformBox) {
    double frac = 1.0;
    for (int d = 0; d < dims(); ++d)
      frac *= (hi[d] - lo[d]) / (s.bounds[d].second - s.bounds[d].first);
    return frac;
  }
  // spinning wheel: midpoint quadrature of the mixture density over the cube
  int n = 16;
  double acc = 0.0;
  double hx = (hi[0] - lo[0]) / n, hy = (hi[1] - lo[1]) / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double pt[2] = {lo[0] + (i + 0.5) * hx, lo[1] + (j + 0.5) * hy};
      acc += synth::mark_density(s, std::span<const double>(pt, 2));
    }
  return acc * hx * hy;
}

double TruthLawN::cube_tail(std::span<const double> lo, std::span<const double> hi,
                            double t) const {
  return mark_cube_mass(lo, hi) * synth::truth_survival(process_, history_, t);
}

double TruthLawN::cdf_time(double t) const {
  return 1.0 - synth::truth_survival(process_, history_, t);
}

// ---------------------------------------------------------------- predictors

TimePrediction bisect_min_time(const std::function<double(double)>& cdf, double t_l,
                               const PredictorConfig& cfg) {
  if (cdf(t_l) >= cfg.q) return {t_l, true};
  double cap = t_l + cfg.t_max;  // the horizon is measured from t_l
  double lo = t_l;
  double width = cfg.tol;
  double hi = t_l + width;
  int guard = 0;
  while (hi < cap && cdf(hi) < cfg.q) {
    lo = hi;
    width *= cfg.bracket_growth;
    hi = t_l + width;
    if (++guard > 4000) break;
  }
  if (hi >= cap) {
    if (cdf(cap) < cfg.q) return {cap, false};  // never crosses below the cap
    hi = cap;
  }
  for (int it = 0; it < cfg.max_iters && hi - lo > cfg.tol; ++it) {
    double mid = 0.5 * (lo + hi);
    if (cdf(mid) >= cfg.q)
      hi = mid;
    else
      lo = mid;
  }
  return {hi, true};
}

TimePrediction predict_time(const CondLaw& law, const PredictorConfig& cfg) {
  return bisect_min_time([&](double t) { return law.cdf_time(t); }, law.t_last(), cfg);
}

MarkPrediction predict_mark_at_time(const CondLaw& law, double t) {
  MarkPrediction out;
  double best = -1.0;
  for (int m = 0; m < law.num_marks(); ++m) {
    double p = law.density(m, t);
    if (p > best) {
      best = p;
      out.mark = m;
    }
  }
  out.degenerate = !(best > 0.0);
  if (out.degenerate) out.mark = 0;
  return out;
}

MarkPrediction predict_mark_marginal(const CondLaw& law) {
  MarkPrediction out;
  double best = -1.0;
  for (int m = 0; m < law.num_marks(); ++m) {
    double p = law.tail_mass(m, law.t_last());
    if (p > best) {
      best = p;
      out.mark = m;
    }
  }
  out.degenerate = !(best > 0.0);
  if (out.degenerate) out.mark = 0;
  return out;
}

TimePrediction predict_time_given_mark(const CondLaw& law, int mark,
                                       const PredictorConfig& cfg) {
  double p_m = law.tail_mass(mark, law.t_last());
  if (!(p_m > 1e-12)) throw std::runtime_error("predict_time_given_mark: mark has no mass");
  auto cdf = [&](double t) { return 1.0 - law.tail_mass(mark, t) / p_m; };
  return bisect_min_time(cdf, law.t_last(), cfg);
}

double sum_mark_marginals(const CondLaw& law) {
  double acc = 0.0;
  for (int m = 0; m < law.num_marks(); ++m) acc += law.tail_mass(m, law.t_last());
  return acc;
}

TimePrediction predict_time_n(const CondLawN& law, const PredictorConfig& cfg) {
  return bisect_min_time([&](double t) { return law.cdf_time(t); }, law.t_last(), cfg);
}

namespace {

Mat grid_cells(const CondLawN& law, int per_dim) {
  int n = law.dims();
  int total = 1;
  for (int d = 0; d < n; ++d) total *= per_dim;
  Mat cells(total, n);
  for (int i = 0; i < total; ++i) {
    int rem = i;
    for (int d = 0; d < n; ++d) {
      int idx = rem % per_dim;
      rem /= per_dim;
      auto [a, b] = law.bounds(d);
      cells(i, d) = a + (idx + 0.5) * (b - a) / per_dim;
    }
  }
  return cells;
}

void cube_around(const CondLawN& law, std::span<const double> center, double edge_frac,
                 std::vector<double>& lo, std::vector<double>& hi) {
  int n = law.dims();
  lo.resize(n);
  hi.resize(n);
  for (int d = 0; d < n; ++d) {
    auto [a, b] = law.bounds(d);
    double half = 0.5 * edge_frac * (b - a);
    lo[d] = std::max(a, center[d] - half);
    hi[d] = std::min(b, center[d] + half);
  }
}

}  // namespace

std::vector<double> predict_mark_at_time_n(const CondLawN& law, double t,
                                           const PredictorConfig& cfg) {
  Mat cells = grid_cells(law, cfg.mark_grid);
  std::vector<double> ts{t};
  Mat dens = law.density_grid(cells, ts);
  Eigen::Index best = 0;
  double best_v = dens(0, 0);
  for (Eigen::Index i = 1; i < dens.rows(); ++i)
    if (dens(i, 0) > best_v) {
      best_v = dens(i, 0);
      best = i;
    }
  std::vector<double> out(law.dims());
  for (int d = 0; d < law.dims(); ++d) out[d] = cells(best, d);
  return out;
}

std::vector<double> predict_mark_marginal_n(const CondLawN& law, const PredictorConfig& cfg) {
  Mat cells = grid_cells(law, cfg.mark_grid);
  std::vector<double> lo, hi;
  Eigen::Index best = 0;
  double best_v = -1.0;
  for (Eigen::Index i = 0; i < cells.rows(); ++i) {
    std::vector<double> center(law.dims());
    for (int d = 0; d < law.dims(); ++d) center[d] = cells(i, d);
    cube_around(law, center, cfg.cube_edge_frac, lo, hi);
    double p = law.cube_tail(lo, hi, law.t_last());
    if (p > best_v) {
      best_v = p;
      best = i;
    }
  }
  std::vector<double> out(law.dims());
  for (int d = 0; d < law.dims(); ++d) out[d] = cells(best, d);
  return out;
}

TimePrediction predict_time_given_mark_n(const CondLawN& law, std::span<const double> mark,
                                         const PredictorConfig& cfg) {
  std::vector<double> lo, hi;
  cube_around(law, mark, cfg.cube_edge_frac, lo, hi);
  double p_m = law.cube_tail(lo, hi, law.t_last());
  if (!(p_m > 1e-12)) throw std::runtime_error("predict_time_given_mark: mark has no mass");
  auto cdf = [&](double t) { return 1.0 - law.cube_tail(lo, hi, t) / p_m; };
  return bisect_min_time(cdf, law.t_last(), cfg);
}

// --------------------------------------------------------------- diagnostics

std::vector<MarginalSweepRow> marginal_sum_sweep(const models::FennModel& model,
                                                 const models::HistoryState& h, double horizon,
                                                 std::span<const int> sample_counts) {
  std::vector<MarginalSweepRow> out;
  for (int n : sample_counts) {
    FennLaw law(model, h, horizon, n);
    out.push_back({n, sum_mark_marginals(law)});
  }
  return out;
}

// ------------------------------------------------------------- density curves

DensityCurve probe_density_curve(const CondLaw& law, std::span<const double> ts) {
  DensityCurve curve;
  curve.ts.assign(ts.begin(), ts.end());
  curve.values = law.density_grid(ts);
  for (int m = 0; m < law.num_marks(); ++m) curve.mark_labels.push_back(std::to_string(m));
  return curve;
}

DensityCurve probe_density_curve_n(const CondLawN& law, const Mat& marks,
                                   std::span<const double> ts) {
  DensityCurve curve;
  curve.ts.assign(ts.begin(), ts.end());
  curve.values = law.density_grid(marks, ts);
  for (Eigen::Index i = 0; i < marks.rows(); ++i) {
    std::string label;
    for (Eigen::Index d = 0; d < marks.cols(); ++d) {
      if (d) label += ";";
      label += std::to_string(marks(i, d));
    }
    curve.mark_labels.push_back(label);
  }
  return curve;
}

void write_csv(const DensityCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "mark_id,t,value\n";
  out.precision(12);
  for (Eigen::Index m = 0; m < curve.values.rows(); ++m)
    for (size_t j = 0; j < curve.ts.size(); ++j)
      out << curve.mark_labels[m] << ',' << curve.ts[j] << ','
          << curve.values(m, static_cast<Eigen::Index>(j)) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

// ----------------------------------------------------- evaluation pipelines

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
  return out;
}

struct PrefixStats {
  double spearman_sum = 0.0, l1_sum = 0.0, nll_sum = 0.0;
  int prefixes = 0;
  int events = 0;
};

}  // namespace

metrics::FidelityReport fidelity_report(const LawFactory& model, const LawFactory& truth,
                                        const std::vector<data::EventSequence>& test,
                                        const FidelityOptions& opt) {
  std::vector<PrefixStats> per_seq(test.size());
  parallel_for(static_cast<int>(test.size()), [&](int si) {
    const data::EventSequence& seq = test[si];
    PrefixStats st;
    for (size_t i = 0; i < seq.size(); ++i) {
      auto law_m = model(seq, i);
      auto law_t = truth(seq, i);
      std::vector<double> ts = linspace(law_m->t_last(), law_m->t_last() + opt.window,
                                        opt.grid_points);
      Mat dm = law_m->density_grid(ts);
      Mat dt = law_t->density_grid(ts);
      std::vector<double> fm(dm.size()), ft(dt.size());
      Eigen::Map<Mat>(fm.data(), dm.rows(), dm.cols()) = dm;
      Eigen::Map<Mat>(ft.data(), dt.rows(), dt.cols()) = dt;
      st.spearman_sum += metrics::spearman(fm, ft);
      double l1 = 0.0;
      for (Eigen::Index m = 0; m < dm.rows(); ++m) {
        std::vector<double> rm(dm.cols()), rt(dt.cols());
        for (Eigen::Index c = 0; c < dm.cols(); ++c) {
          rm[c] = dm(m, c);
          rt[c] = dt(m, c);
        }
        l1 += metrics::l1_distance(rm, rt, ts);
      }
      st.l1_sum += l1;
      double pm = law_m->density(seq.marks[i], seq.times[i]);
      double pt = law_t->density(seq.marks[i], seq.times[i]);
      if (!(pm > 0.0) || !(pt > 0.0))
        throw std::runtime_error("fidelity: zero density at an observed event");
      st.nll_sum += std::abs(std::log(pm) - std::log(pt));
      st.prefixes += 1;
      st.events += 1;
    }
    per_seq[si] = st;
  });

  metrics::FidelityReport report;
  double sp = 0, l1 = 0, nll = 0;
  int total = 0, events = 0;
  for (size_t si = 0; si < per_seq.size(); ++si) {
    const PrefixStats& st = per_seq[si];
    if (st.prefixes == 0) continue;
    report.per_sequence.push_back({st.spearman_sum / st.prefixes, st.l1_sum / st.prefixes,
                                   st.nll_sum / std::max(1, st.events), st.prefixes});
    sp += st.spearman_sum;
    l1 += st.l1_sum;
    nll += st.nll_sum;
    total += st.prefixes;
    events += st.events;
  }
  if (total == 0) throw std::invalid_argument("fidelity: empty test split");
  report.spearman = sp / total;
  report.l1 = l1 / total;
  report.relative_nll = nll / events;
  return report;
}

metrics::FidelityReport fidelity_report_n(const LawFactoryN& model, const LawFactoryN& truth,
                                          const std::vector<data::EventSequence>& test,
                                          const FidelityOptions& opt) {
  std::vector<PrefixStats> per_seq(test.size());
  parallel_for(static_cast<int>(test.size()), [&](int si) {
    const data::EventSequence& seq = test[si];
    PrefixStats st;
    for (size_t i = 0; i < seq.size(); ++i) {
      auto law_m = model(seq, i);
      auto law_t = truth(seq, i);
      std::vector<double> ts = linspace(law_m->t_last(), law_m->t_last() + opt.window,
                                        opt.grid_points);
      // probe marks on a regular cell-center grid
      int n = law_m->dims();
      int g = opt.mark_grid_per_dim;
      int rows = 1;
      for (int d = 0; d < n; ++d) rows *= g;
      Mat cells(rows, n);
      for (int r = 0; r < rows; ++r) {
        int rem = r;
        for (int d = 0; d < n; ++d) {
          int idx = rem % g;
          rem /= g;
          auto [a, b] = law_m->bounds(d);
          cells(r, d) = a + (idx + 0.5) * (b - a) / g;
        }
      }
      Mat dm = law_m->density_grid(cells, ts);
      Mat dt = law_t->density_grid(cells, ts);
      std::vector<double> fm(dm.size()), ft(dt.size());
      Eigen::Map<Mat>(fm.data(), dm.rows(), dm.cols()) = dm;
      Eigen::Map<Mat>(ft.data(), dt.rows(), dt.cols()) = dt;
      st.spearman_sum += metrics::spearman(fm, ft);
      // averaged (not summed) over probe marks so the value does not scale
      // with the probe resolution
      double l1 = 0.0;
      for (Eigen::Index m = 0; m < dm.rows(); ++m) {
        std::vector<double> rm(dm.cols()), rt(dt.cols());
        for (Eigen::Index c = 0; c < dm.cols(); ++c) {
          rm[c] = dm(m, c);
          rt[c] = dt(m, c);
        }
        l1 += metrics::l1_distance(rm, rt, ts);
      }
      st.l1_sum += l1 / static_cast<double>(rows);
      double pm = law_m->density(seq.vec_marks[i], seq.times[i]);
      double pt = law_t->density(seq.vec_marks[i], seq.times[i]);
      if (!(pm > 0.0) || !(pt > 0.0))
        throw std::runtime_error("fidelity: zero density at an observed event");
      st.nll_sum += std::abs(std::log(pm) - std::log(pt));
      st.prefixes += 1;
      st.events += 1;
    }
    per_seq[si] = st;
  });

  metrics::FidelityReport report;
  double sp = 0, l1 = 0, nll = 0;
  int total = 0, events = 0;
  for (size_t si = 0; si < per_seq.size(); ++si) {
    const PrefixStats& st = per_seq[si];
    if (st.prefixes == 0) continue;
    report.per_sequence.push_back({st.spearman_sum / st.prefixes, st.l1_sum / st.prefixes,
                                   st.nll_sum / std::max(1, st.events), st.prefixes});
    sp += st.spearman_sum;
    l1 += st.l1_sum;
    nll += st.nll_sum;
    total += st.prefixes;
    events += st.events;
  }
  if (total == 0) throw std::invalid_argument("fidelity: empty test split");
  report.spearman = sp / total;
  report.l1 = l1 / total;
  report.relative_nll = nll / events;
  return report;
}

metrics::PredictionReport prediction_report(const LawFactory& model,
                                            const std::vector<data::EventSequence>& test,
                                            const PredictorConfig& cfg) {
  struct Slot {
    std::vector<double> mae, mae_e;
    std::vector<int> pred_te, pred_et, truth;
  };
  std::vector<Slot> slots(test.size());
  parallel_for(static_cast<int>(test.size()), [&](int si) {
    const data::EventSequence& seq = test[si];
    Slot& s = slots[si];
    for (size_t i = 0; i < seq.size(); ++i) {
      auto law = model(seq, i);
      TimePrediction tp = predict_time(*law, cfg);
      s.mae.push_back(std::abs(tp.t_p - seq.times[i]));
      s.pred_te.push_back(predict_mark_at_time(*law, tp.t_p).mark);
      TimePrediction tpe = predict_time_given_mark(*law, seq.marks[i], cfg);
      s.mae_e.push_back(std::abs(tpe.t_p - seq.times[i]));
      s.pred_et.push_back(predict_mark_marginal(*law).mark);
      s.truth.push_back(seq.marks[i]);
    }
  });
  std::vector<double> mae, mae_e;
  std::vector<int> pred_te, pred_et, truths;
  int k = 0;
  for (auto& s : slots) {
    mae.insert(mae.end(), s.mae.begin(), s.mae.end());
    mae_e.insert(mae_e.end(), s.mae_e.begin(), s.mae_e.end());
    pred_te.insert(pred_te.end(), s.pred_te.begin(), s.pred_te.end());
    pred_et.insert(pred_et.end(), s.pred_et.begin(), s.pred_et.end());
    truths.insert(truths.end(), s.truth.begin(), s.truth.end());
  }
  for (int t : truths) k = std::max(k, t + 1);
  if (!test.empty()) {
    auto law = model(test[0], 0);
    k = std::max(k, law->num_marks());
  }
  metrics::PredictionReport report;
  report.mae = metrics::error_quantiles(mae);
  report.mae_e = metrics::error_quantiles(mae_e);
  report.macro_f1_time_event = metrics::macro_f1(pred_te, truths, k);
  report.macro_f1_event_time = metrics::macro_f1(pred_et, truths, k);
  return report;
}

metrics::PredictionReport prediction_report_n(const LawFactoryN& model,
                                              const std::vector<data::EventSequence>& test,
                                              const PredictorConfig& cfg) {
  struct Slot {
    std::vector<double> mae, mae_e;
    std::vector<std::vector<double>> pred_te, pred_et, truth;
  };
  std::vector<Slot> slots(test.size());
  parallel_for(static_cast<int>(test.size()), [&](int si) {
    const data::EventSequence& seq = test[si];
    Slot& s = slots[si];
    for (size_t i = 0; i < seq.size(); ++i) {
      auto law = model(seq, i);
      TimePrediction tp = predict_time_n(*law, cfg);
      s.mae.push_back(std::abs(tp.t_p - seq.times[i]));
      s.pred_te.push_back(predict_mark_at_time_n(*law, tp.t_p, cfg));
      TimePrediction tpe = predict_time_given_mark_n(*law, seq.vec_marks[i], cfg);
      s.mae_e.push_back(std::abs(tpe.t_p - seq.times[i]));
      s.pred_et.push_back(predict_mark_marginal_n(*law, cfg));
      s.truth.push_back(seq.vec_marks[i]);
    }
  });
  std::vector<double> mae, mae_e;
  std::vector<std::vector<double>> pred_te, pred_et, truths;
  for (auto& s : slots) {
    mae.insert(mae.end(), s.mae.begin(), s.mae.end());
    mae_e.insert(mae_e.end(), s.mae_e.begin(), s.mae_e.end());
    pred_te.insert(pred_te.end(), s.pred_te.begin(), s.pred_te.end());
    pred_et.insert(pred_et.end(), s.pred_et.begin(), s.pred_et.end());
    truths.insert(truths.end(), s.truth.begin(), s.truth.end());
  }
  metrics::PredictionReport report;
  report.mae = metrics::error_quantiles(mae);
  report.mae_e = metrics::error_quantiles(mae_e);
  report.dv_time_event = metrics::dv_quantiles(pred_te, truths);
  report.dv_event_time = metrics::dv_quantiles(pred_et, truths);
  return report;
}

}  // namespace ifib::infer
