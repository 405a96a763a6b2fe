#pragma once

// Categorical-mark IFIB: per-mark scores s*(m,t), partition-function
// normalization, survival-style integral Gamma*(m,t) = s*(m,t)/Z, and the
// joint density p*(m,t) = -dGamma/dt obtained from the forward tangent.

#include <cstdint>
#include <span>
#include <vector>

#include "ifib/encoder.hpp"
#include "ifib/iem.hpp"

namespace ifib::models {

struct IfibCConfig {
  EncoderConfig encoder;
  int d_f = 64;        // width of f(m,t) = v_m * (t - t_l)
  int iem_hidden = 32;
  int iem_layers = 3;

  int num_marks() const { return encoder.num_marks; }
  IemConfig iem() const { return {d_f + encoder.d_hidden, iem_hidden, iem_layers}; }
};

class IfibCModel {
 public:
  IfibCModel(const IfibCConfig& cfg, std::uint64_t seed);
  IfibCModel(const IfibCConfig& cfg, ad::ParamStore store);

  const IfibCConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }

  // Teacher-forced mean-per-event negative log-likelihood of a batch.
  ad::Var batch_nll(ad::Tape& tape, const Batch& batch) const;

  std::vector<HistoryState> encode(const data::EventSequence& seq, size_t upto) const;

  // Scalar queries; t is absolute and must satisfy t >= h.t_last.
  double score(const HistoryState& h, int mark, double t) const;
  double partition(const HistoryState& h) const;  // Z = sum_m s(m, t_l)
  double gamma(const HistoryState& h, int mark, double t) const;
  double density(const HistoryState& h, int mark, double t) const;
  double mark_marginal(const HistoryState& h, int mark) const;
  // (sum_m s(m,t)) / Z; exactly 1 at t = t_l by construction.
  double tail_all_marks(const HistoryState& h, double t) const;

  // Batched grids for metric curves: one row per mark, one column per time.
  Mat gamma_grid(const HistoryState& h, std::span<const double> ts) const;
  Mat density_grid(const HistoryState& h, std::span<const double> ts) const;

 private:
  // Dual score for rows pairing (mark, dt) with an h row; tangent is d/d dt.
  ad::DVar score_rows(ad::Tape& tape, ad::Var h_rows, const std::vector<int>& marks,
                      const Vec& dts) const;
  // All-mark scores at dt = 0 for each h row: (N x K). Fast shared-trunk
  // pass used by the training loss.
  ad::Var scores_at_origin(ad::Tape& tape, ad::Var h_rows) const;
  // Per-mark scores at t_l through the canonical score_rows kernel.
  Vec origin_scores(const HistoryState& h) const;
  void check_time(const HistoryState& h, double t) const;
  void check_mark(int mark) const;

  IfibCConfig cfg_;
  ad::ParamStore store_;
};

}  // namespace ifib::models
