#pragma once

// Ogata-thinning simulator for the five synthetic processes and the exact
// truth oracle (intensity, cumulative intensity, joint density) behind the
// fidelity metrics.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ifib/data.hpp"

namespace ifib::synth {

enum class ProcessKind { Hawkes1, Hawkes2, Poisson, SelfCorrect, StationaryRenewal };

ProcessKind process_kind_from_string(const std::string& s);
std::string to_string(ProcessKind k);

struct MarkScheme {
  enum class Kind { UniformCategorical, UniformBox, SpinningWheel } kind =
      Kind::UniformCategorical;
  int num_marks = 5;                               // UniformCategorical
  std::vector<std::pair<double, double>> bounds;   // box for numeric schemes
  int leaves = 7;                                  // SpinningWheel
};

// Synthetic-process descriptor with closed-form conditionals.
struct TruthProcess {
  ProcessKind kind = ProcessKind::Poisson;

  // Hawkes_1: mu + sum a*exp(-b dt); Hawkes_2 adds a second exponential.
  double mu = 0.2;
  double a1 = 0.8, b1 = 1.0;
  double a2 = 0.0, b2 = 1.0;
  double poisson_rate = 1.0;
  double sc_mu = 1.0, sc_alpha = 1.0;   // self-correcting exp(mu dt - alpha N)
  double renewal_sigma = 1.0;           // log-normal inter-event scale

  MarkScheme marks;

  void validate() const;

  static TruthProcess hawkes1(double mu = 0.2, double a = 0.8, double b = 1.0);
  static TruthProcess hawkes2();  // mu 0.2, a1=a2=0.4, b1=1, b2=20
  static TruthProcess poisson(double rate);
  static TruthProcess self_correct(double mu = 1.0, double alpha = 1.0);
  static TruthProcess renewal(double sigma = 1.0);
};

// lambda*(t) given the history prefix (times of events before t).
// Requires t >= last history time.
double truth_intensity(const TruthProcess& p, std::span<const double> history, double t);

// Integral of the total intensity from t_l (= last history time, or 0 for an
// empty history) to t. Closed form per process kind.
double truth_cumulative_intensity(const TruthProcess& p, std::span<const double> history,
                                  double t);

// Density of the mark component under the scheme (1/K for categorical).
double mark_density(const MarkScheme& s, int mark);
double mark_density(const MarkScheme& s, std::span<const double> mark);

// p*(m, t) = mark-density * lambda*(t) * exp(-Lambda*(t)).
double truth_joint_density(const TruthProcess& p, std::span<const double> history, int mark,
                           double t);
double truth_joint_density(const TruthProcess& p, std::span<const double> history,
                           std::span<const double> mark, double t);

// Conditional probability that no event lands in (t_l, t]: exp(-Lambda).
double truth_survival(const TruthProcess& p, std::span<const double> history, double t);

struct SimulateOptions {
  double horizon = 40.0;
  size_t max_events = 0;      // 0 = unlimited
  double t_origin = 0.0;
};

// Draws one sequence exactly distributed per the process: thinning with a
// per-interval bound for Hawkes/Poisson/self-correcting, direct log-normal
// sampling for the renewal process. Marks attached per the scheme.
data::EventSequence simulate_sequence(const TruthProcess& p, const SimulateOptions& opt,
                                      std::uint64_t seed);

struct GenerateCounts {
  size_t n_train = 0, n_validation = 0, n_test = 0;
};

// Deterministic given the seed; every sequence owns an independent seed
// stream, so splits are disjoint by construction.
data::SplitDataset generate_dataset(const TruthProcess& p, const GenerateCounts& counts,
                                    const SimulateOptions& opt, std::uint64_t seed);

data::DatasetMeta dataset_meta_for(const TruthProcess& p);

// truth.json round-trip so evaluation can rebuild the oracle.
void save_truth(const TruthProcess& p, const std::string& path);
TruthProcess load_truth(const std::string& path);

}  // namespace ifib::synth
