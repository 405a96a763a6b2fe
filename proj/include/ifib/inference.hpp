#pragma once

// Bisection-based predictors for the time-event and event-time problems,
// the sum-of-marginals diagnostic, density-curve probes, and the fidelity /
// prediction evaluation pipelines. Everything runs against conditional-law
// views so trained models and the exact truth oracle share one code path.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifib/baselines.hpp"
#include "ifib/ifib_c.hpp"
#include "ifib/ifib_n.hpp"
#include "ifib/metrics.hpp"
#include "ifib/synth.hpp"

namespace ifib::infer {

using models::Mat;

struct PredictorConfig {
  double q = 0.5;                 // CDF threshold
  double tol = 1e-6;              // absolute bisection tolerance (model time units)
  int max_iters = 200;
  double bracket_growth = 2.0;
  double t_max = 1e6;             // search horizon beyond t_l;
                                  // min(mean + 10 std, 1e6) of training gaps
  int mark_grid = 64;             // per-dimension argmax resolution (numeric)
  double cube_edge_frac = 1e-3;   // hypercube edge as a fraction of each range
  int tail_samples = 1000;        // trapezoid samples for intensity-based models
};

// t_max rule used throughout: min(mean + 10 std, 1e6) of training-split gaps.
double horizon_cap(const std::vector<data::EventSequence>& train);

// ------------------------------------------------- categorical conditional law

class CondLaw {
 public:
  virtual ~CondLaw() = default;
  virtual int num_marks() const = 0;
  virtual double t_last() const = 0;
  virtual double density(int mark, double t) const = 0;
  // integral of p(mark, tau) over [t, +inf)
  virtual double tail_mass(int mark, double t) const = 0;
  // P(next event time <= t); default 1 - sum of tails
  virtual double cdf_time(double t) const;
  // mark-major grid of densities, one row per mark
  virtual Mat density_grid(std::span<const double> ts) const;
};

class IfibCLaw : public CondLaw {
 public:
  IfibCLaw(const models::IfibCModel& model, models::HistoryState h);
  int num_marks() const override;
  double t_last() const override { return h_.t_last; }
  double density(int mark, double t) const override;
  double tail_mass(int mark, double t) const override;  // gamma, closed form
  double cdf_time(double t) const override;             // exactly 0 at t_l
  Mat density_grid(std::span<const double> ts) const override;

 private:
  const models::IfibCModel& model_;
  models::HistoryState h_;
};

// FENN / FullyNN: tails come from a cached cumulative-trapezoid table over
// [t_l, t_l + horizon] with `tail_samples` points, the Appendix-F style
// estimator whose accuracy depends on the sampling density.
class FennLaw : public CondLaw {
 public:
  FennLaw(const models::FennModel& model, models::HistoryState h, double horizon,
          int tail_samples);
  int num_marks() const override;
  double t_last() const override { return h_.t_last; }
  double density(int mark, double t) const override;
  double tail_mass(int mark, double t) const override;
  double cdf_time(double t) const override;  // 1 - exp(-Lambda), closed form
  Mat density_grid(std::span<const double> ts) const override;

 private:
  void ensure_table() const;
  const models::FennModel& model_;
  models::HistoryState h_;
  double horizon_;
  int samples_;
  mutable std::vector<double> grid_;
  mutable Mat tail_table_;  // K x samples, tail mass at each grid point
};

class TruthLaw : public CondLaw {
 public:
  TruthLaw(const synth::TruthProcess& process, std::vector<double> history);
  int num_marks() const override;
  double t_last() const override;
  double density(int mark, double t) const override;
  double tail_mass(int mark, double t) const override;  // survival / K
  double cdf_time(double t) const override;
  Mat density_grid(std::span<const double> ts) const override;

 private:
  synth::TruthProcess process_;
  std::vector<double> history_;
};

// ---------------------------------------------------- numeric conditional law

class CondLawN {
 public:
  virtual ~CondLawN() = default;
  virtual int dims() const = 0;
  virtual std::pair<double, double> bounds(int dim) const = 0;
  virtual double t_last() const = 0;
  virtual double density(std::span<const double> mark, double t) const = 0;
  virtual double cube_tail(std::span<const double> lo, std::span<const double> hi,
                           double t) const = 0;
  virtual double cdf_time(double t) const = 0;
  virtual Mat density_grid(const Mat& marks, std::span<const double> ts) const;
};

class IfibNLaw : public CondLawN {
 public:
  IfibNLaw(const models::IfibNModel& model, models::HistoryState h);
  int dims() const override;
  std::pair<double, double> bounds(int dim) const override;
  double t_last() const override { return h_.t_last; }
  double density(std::span<const double> mark, double t) const override;
  double cube_tail(std::span<const double> lo, std::span<const double> hi,
                   double t) const override;
  double cdf_time(double t) const override;  // 1 - time_tail, exactly 0 at t_l
  Mat density_grid(const Mat& marks, std::span<const double> ts) const override;

 private:
  const models::IfibNModel& model_;
  models::HistoryState h_;
};

class TruthLawN : public CondLawN {
 public:
  TruthLawN(const synth::TruthProcess& process, std::vector<double> history);
  int dims() const override;
  std::pair<double, double> bounds(int dim) const override;
  double t_last() const override;
  double density(std::span<const double> mark, double t) const override;
  double cube_tail(std::span<const double> lo, std::span<const double> hi,
                   double t) const override;
  double cdf_time(double t) const override;

 private:
  double mark_cube_mass(std::span<const double> lo, std::span<const double> hi) const;
  synth::TruthProcess process_;
  std::vector<double> history_;
};

// ------------------------------------------------------------------ predictors

struct TimePrediction {
  double t_p = 0.0;
  bool crossed = false;  // false: CDF never reached q below t_max (t_p = t_max)
};

// Minimum t with cdf(t) >= q via bracket doubling + bisection. Guarantees
// cdf(t_p - tol) < q <= cdf(t_p + tol) when a crossing exists below t_max.
TimePrediction bisect_min_time(const std::function<double(double)>& cdf, double t_l,
                               const PredictorConfig& cfg);

TimePrediction predict_time(const CondLaw& law, const PredictorConfig& cfg);

struct MarkPrediction {
  int mark = 0;
  bool degenerate = false;  // every candidate had zero mass
};

// argmax_m p(m, t); ties resolve to the lowest index.
MarkPrediction predict_mark_at_time(const CondLaw& law, double t);
// argmax_m of the mark marginal (tail mass at t_l).
MarkPrediction predict_mark_marginal(const CondLaw& law);
// Bisection on P(t|m) = 1 - tail(m,t)/tail(m,t_l); throws if P(m) < 1e-12.
TimePrediction predict_time_given_mark(const CondLaw& law, int mark,
                                       const PredictorConfig& cfg);

double sum_mark_marginals(const CondLaw& law);

// Numeric-mark counterparts (regular-grid probing at cell centers).
TimePrediction predict_time_n(const CondLawN& law, const PredictorConfig& cfg);
std::vector<double> predict_mark_at_time_n(const CondLawN& law, double t,
                                           const PredictorConfig& cfg);
std::vector<double> predict_mark_marginal_n(const CondLawN& law, const PredictorConfig& cfg);
TimePrediction predict_time_given_mark_n(const CondLawN& law, std::span<const double> mark,
                                         const PredictorConfig& cfg);

// --------------------------------------------------------------- diagnostics

// Sum of estimated mark marginals as the sampling density grows; one row per
// requested sample count (Appendix-F style sweep).
struct MarginalSweepRow {
  int samples = 0;
  double sum = 0.0;
};
std::vector<MarginalSweepRow> marginal_sum_sweep(const models::FennModel& model,
                                                 const models::HistoryState& h, double horizon,
                                                 std::span<const int> sample_counts);

// ------------------------------------------------------------- density curves

struct DensityCurve {
  std::vector<std::string> mark_labels;
  std::vector<double> ts;
  Mat values;  // marks x times
};

DensityCurve probe_density_curve(const CondLaw& law, std::span<const double> ts);
DensityCurve probe_density_curve_n(const CondLawN& law, const Mat& marks,
                                   std::span<const double> ts);
// columns: mark_id (or coordinates), t, value
void write_csv(const DensityCurve& curve, const std::string& path);

// ------------------------------------------------------- evaluation pipelines

using LawFactory =
    std::function<std::unique_ptr<CondLaw>(const data::EventSequence&, size_t prefix)>;
using LawFactoryN =
    std::function<std::unique_ptr<CondLawN>(const data::EventSequence&, size_t prefix)>;

struct FidelityOptions {
  int grid_points = 500;
  double window = 10.0;        // curves span [t_l, t_l + window]
  int mark_grid_per_dim = 3;   // numeric-mark probe resolution
};

// Curve-level comparison: for every sequence and event prefix, sample both
// densities on the grid for every mark, compute Spearman / L1 on the
// concatenated curves, and average over prefixes and sequences. Relative NLL
// compares log-densities at the observed events.
metrics::FidelityReport fidelity_report(const LawFactory& model, const LawFactory& truth,
                                        const std::vector<data::EventSequence>& test,
                                        const FidelityOptions& opt);
metrics::FidelityReport fidelity_report_n(const LawFactoryN& model, const LawFactoryN& truth,
                                          const std::vector<data::EventSequence>& test,
                                          const FidelityOptions& opt);

metrics::PredictionReport prediction_report(const LawFactory& model,
                                            const std::vector<data::EventSequence>& test,
                                            const PredictorConfig& cfg);
metrics::PredictionReport prediction_report_n(const LawFactoryN& model,
                                              const std::vector<data::EventSequence>& test,
                                              const PredictorConfig& cfg);

}  // namespace ifib::infer
