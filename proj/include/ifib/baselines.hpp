#pragma once

// FENN (per-mark intensity-integral network) and FullyNN's naive multi-mark
// extension. Both model Lambda*(t), the intensity integral, with a softplus
// head; their structural defects (Lambda(t_l) > 0, bounded Lambda) are part
// of the contract and asserted as expected behavior in tests.

#include <cstdint>
#include <span>
#include <vector>

#include "ifib/encoder.hpp"
#include "ifib/iem.hpp"

namespace ifib::models {

struct FennConfig {
  EncoderConfig encoder;
  int d_f = 64;
  int iem_hidden = 32;
  int iem_layers = 3;
  // FullyNN naive multi-mark: every mark shares one v, hence one
  // computation graph and identical per-mark distributions.
  bool shared_v = false;

  int num_marks() const { return encoder.num_marks; }
  IemConfig iem() const { return {d_f + encoder.d_hidden, iem_hidden, iem_layers}; }
};

class FennModel {
 public:
  FennModel(const FennConfig& cfg, std::uint64_t seed);
  FennModel(const FennConfig& cfg, ad::ParamStore store);

  const FennConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }

  ad::Var batch_nll(ad::Tape& tape, const Batch& batch) const;

  std::vector<HistoryState> encode(const data::EventSequence& seq, size_t upto) const;

  // Lambda*(t): integral of the total intensity from t_l to t.
  double big_lambda(const HistoryState& h, double t) const;
  double intensity(const HistoryState& h, int mark, double t) const;   // lambda*(m,t)
  // p*(m,t) = lambda*(m,t) exp(-Lambda*(t)); unnormalized tail included.
  double density(const HistoryState& h, int mark, double t) const;

  Mat intensity_grid(const HistoryState& h, std::span<const double> ts) const;  // K x T
  Mat density_grid(const HistoryState& h, std::span<const double> ts) const;    // K x T
  std::vector<double> big_lambda_grid(const HistoryState& h, std::span<const double> ts) const;

  // sum_m softplus(w^T 1 + b): the structural ceiling on Lambda*(t).
  double lambda_upper_bound() const;

 private:
  ad::DVar omega_rows(ad::Tape& tape, ad::Var h_rows, int mark, const Vec& dts) const;
  void check_time(const HistoryState& h, double t) const;

  FennConfig cfg_;
  ad::ParamStore store_;
};

// Pairwise L1 distance between per-mark density curves sampled on a grid.
Mat pairwise_density_l1(const FennModel& model, const HistoryState& h,
                        std::span<const double> ts);

// The Fig. 3 probe: requires the naive multi-mark (shared v) flag and is
// exactly zero for any parameters because the marks share one graph.
Mat fullynn_overlap_matrix(const FennModel& model, const HistoryState& h,
                           std::span<const double> ts);

}  // namespace ifib::models
