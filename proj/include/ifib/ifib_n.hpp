#pragma once

// Numeric-mark IFIB: Gamma*(m,t) factorized into a time integral and one
// bounded integral per mark dimension (factor order t, d_1, .., d_n), a
// conditioning-chain LSTM feeding each factor, and the mixed-derivative
// density realized as the product of per-factor derivatives with the chain
// context held fixed.

#include <cstdint>
#include <span>
#include <vector>

#include "ifib/encoder.hpp"
#include "ifib/iem.hpp"

namespace ifib::models {

struct IfibNConfig {
  EncoderConfig encoder;                          // numeric marks
  std::vector<std::pair<double, double>> bounds;  // per-dimension [a_i, b_i]
  int d_u = 32;                                   // chain embedding / hidden width
  int d_f = 64;
  int iem_hidden = 32;
  int iem_layers = 3;
  bool static_chain = false;  // ablation: chain sees embeddings only

  int dims() const { return static_cast<int>(bounds.size()); }
  IemConfig iem() const { return {d_f + encoder.d_hidden, iem_hidden, iem_layers}; }
};

// Non-negative per-factor conditioning vectors v, row 0 = time factor,
// row i = mark dimension i. Fixed while differentiating factor values.
struct ChainContext {
  Mat v;  // (dims+1) x d_f
};

class IfibNModel {
 public:
  IfibNModel(const IfibNConfig& cfg, std::uint64_t seed);
  IfibNModel(const IfibNConfig& cfg, ad::ParamStore store);

  const IfibNConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }

  ad::Var batch_nll(ad::Tape& tape, const Batch& batch) const;

  std::vector<HistoryState> encode(const data::EventSequence& seq, size_t upto) const;

  // Chain conditioned on realized values: dt for the first mark factor,
  // mark coordinate i-1 for factor i > 1. The time factor sees no realized
  // value, so its v never depends on the query.
  ChainContext chain(const HistoryState& h, double dt,
                     std::span<const double> mark_context) const;

  // Factor integrals under a fixed chain. factor 0 is time (x = absolute t,
  // G = s(t)/s(t_l), 1 at t_l); factor i >= 1 is mark dimension i-1
  // (G = (s(x)-s(b))/(s(a)-s(b)), exactly 1 at a and 0 at b).
  double factor_integral(const HistoryState& h, const ChainContext& ctx, int factor,
                         double x) const;
  // -dG/dx at an interior point of the factor's domain.
  double factor_density(const HistoryState& h, const ChainContext& ctx, int factor,
                        double x) const;

  // Composite queries; the chain is rebuilt from the query point itself.
  double gamma(const HistoryState& h, std::span<const double> mark, double t) const;
  double density(const HistoryState& h, std::span<const double> mark, double t) const;
  // Explicit-chain variants (the objects the derivative tests differentiate).
  double gamma_with(const HistoryState& h, const ChainContext& ctx,
                    std::span<const double> mark, double t) const;
  double density_with(const HistoryState& h, const ChainContext& ctx,
                      std::span<const double> mark, double t) const;

  // P(T > t) marginalized over marks: the mark factors collapse to 1 at the
  // lower corner, leaving the time factor alone (exactly 1 at t_l).
  double time_tail(const HistoryState& h, double t) const;

  // Gamma mass of an axis-aligned cube at time t by inclusion-exclusion,
  // exact under the cube-independent (box-center) chain so that adjacent
  // cubes add up. Throws on degenerate or out-of-box cubes.
  double cube_tail(const HistoryState& h, std::span<const double> lo,
                   std::span<const double> hi, double t) const;

  // Batched density over a mark grid x time grid (chain per query point).
  Mat density_grid(const HistoryState& h, const Mat& marks, std::span<const double> ts) const;

 private:
  struct FactorHeads {
    std::string iem, head_w, head_b, skip;
  };
  FactorHeads heads_for(int factor) const;
  ad::DVar factor_score(ad::Tape& tape, const FactorHeads& fh, ad::Var v_rows, const Vec& xs,
                        ad::Var h_rows) const;
  // Chain vectors for a batch of rows: per factor, an N x d_f matrix.
  std::vector<ad::Var> chain_rows(ad::Tape& tape, ad::Var h_rows, const std::vector<Vec>& realized,
                                  int n_rows) const;
  void check_time(const HistoryState& h, double t) const;

  IfibNConfig cfg_;
  ad::ParamStore store_;
};

}  // namespace ifib::models
