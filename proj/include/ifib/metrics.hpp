#pragma once

// Evaluation metrics: Spearman rho, trapezoid L1 distance, relative NLL,
// nearest-rank error quantiles, macro-F1, and Euclidean mark distances.

#include <span>
#include <vector>

namespace ifib::metrics {

// Pearson correlation of average ranks; ties get the mean of their rank run.
// Throws on length mismatch, fewer than two points, or a constant sequence.
double spearman(std::span<const double> x, std::span<const double> y);

// Trapezoid integral of |f - g| over a shared grid.
double l1_distance(std::span<const double> f, std::span<const double> g,
                   std::span<const double> grid);

// Mean |log p_model - log p_truth| over event points.
double relative_nll(std::span<const double> model_density,
                    std::span<const double> truth_density);

struct Quantiles {
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;
};

// Nearest-rank (inclusive) quantiles of the values as given; used for MAE,
// MAE-E and DV reporting.
Quantiles error_quantiles(std::vector<double> errors);

// Per-class F1 averaged over all K classes; classes with an empty
// precision+recall denominator contribute zero.
double macro_f1(std::span<const int> predictions, std::span<const int> truths, int num_classes);

Quantiles dv_quantiles(const std::vector<std::vector<double>>& predicted,
                       const std::vector<std::vector<double>>& truth);

struct FidelityReport {
  double spearman = 0.0;
  double l1 = 0.0;
  double relative_nll = 0.0;
  struct PerSequence {
    double spearman = 0.0;
    double l1 = 0.0;
    double relative_nll = 0.0;
    int prefixes = 0;
  };
  std::vector<PerSequence> per_sequence;
};

struct PredictionReport {
  Quantiles mae;       // time-event task
  Quantiles mae_e;     // event-time task
  double macro_f1_time_event = 0.0;
  double macro_f1_event_time = 0.0;
  Quantiles dv_time_event;   // numeric marks
  Quantiles dv_event_time;
};

}  // namespace ifib::metrics
