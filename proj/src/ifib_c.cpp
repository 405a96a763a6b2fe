#include "ifib/ifib_c.hpp"

#include <cmath>
#include <stdexcept>

namespace ifib::models {

IfibCModel::IfibCModel(const IfibCConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  add_encoder_params(store_, cfg.encoder, rng);
  store_.add("v", nonneg_raw_init(rng, cfg.num_marks(), cfg.d_f, 1.0),
             ad::Constraint::NonnegReparam);
  add_iem_params(store_, "iem.", cfg.iem(), rng);
  store_.add("head.W", nonneg_raw_init(rng, cfg.num_marks(), cfg.iem_hidden,
                                       1.0 / cfg.iem_hidden),
             ad::Constraint::NonnegReparam);
  store_.add("head.b", uniform_init(rng, cfg.num_marks(), 1,
                                    1.0 / std::sqrt(static_cast<double>(cfg.iem_hidden))));
  // Unbounded monotone pathway into the final pre-activation; with a purely
  // tanh-bounded trunk the scores could not reach 0 in the tail.
  store_.add("w_skip", nonneg_raw_init(rng, 1, 1, 0.5), ad::Constraint::NonnegReparam);
}

IfibCModel::IfibCModel(const IfibCConfig& cfg, ad::ParamStore store)
    : cfg_(cfg), store_(std::move(store)) {}

void IfibCModel::check_time(const HistoryState& h, double t) const {
  if (t < h.t_last) throw std::invalid_argument("ifib-c: t before the last event");
}

void IfibCModel::check_mark(int mark) const {
  if (mark < 0 || mark >= cfg_.num_marks()) throw std::invalid_argument("ifib-c: bad mark");
}

ad::DVar IfibCModel::score_rows(ad::Tape& tape, ad::Var h_rows, const std::vector<int>& marks,
                                const Vec& dts) const {
  int n = static_cast<int>(marks.size());
  ad::Var v_rows = tape.gather_rows(tape.param("v"), marks);        // N x d_f
  ad::Var dtc = tape.constant(dts);                                 // N x 1
  ad::DVar f{tape.col_scale(v_rows, dtc), v_rows};                  // tangent d f / d dt = v
  ad::DVar x = ad::dconcat_cols(f, ad::dual_const(tape, h_rows));
  ad::DVar z = iem_trunk(tape, "iem.", cfg_.iem(), x);

  ad::Var hw = tape.gather_rows(tape.param("head.W"), marks);       // N x hidden
  ad::DVar pre = ad::drow_sum(ad::dmul(z, ad::dual_const(tape, hw)));
  pre.v = tape.add(pre.v, tape.gather_rows(tape.param("head.b"), marks));
  ad::Var wskip = tape.broadcast_row(tape.param("w_skip"), n);      // N x 1
  ad::DVar skip = ad::dmul(ad::drow_mean(f), ad::dual_const(tape, wskip));
  return ad::dsigmoid_dec(ad::dadd(pre, skip));
}

ad::Var IfibCModel::scores_at_origin(ad::Tape& tape, ad::Var h_rows) const {
  int n = static_cast<int>(tape.value(h_rows).rows());
  // f(m, t_l) = 0 for every mark, so one trunk pass serves all K heads;
  // the skip term vanishes with f.
  ad::Var zeros = tape.constant(Mat::Zero(n, cfg_.d_f));
  ad::Var z = iem_trunk(tape, "iem.", cfg_.iem(), tape.concat_cols(zeros, h_rows));
  ad::Var pre = tape.add_row(tape.matmul(z, tape.transpose(tape.param("head.W"))),
                             tape.transpose(tape.param("head.b")));
  return tape.sigmoid_dec(pre);  // N x K
}

ad::Var IfibCModel::batch_nll(ad::Tape& tape, const Batch& batch) const {
  std::vector<int> flat = batch.valid_flat_rows();
  if (flat.empty()) throw std::invalid_argument("ifib-c: batch has no events");
  EncodedBatch enc = encode_batch(tape, cfg_.encoder, batch);
  ad::Var h_v = tape.gather_rows(enc.stacked_before, flat);

  std::vector<int> marks = batch.valid_cat_marks();
  std::vector<double> dts = batch.valid_dt();
  Vec dtv = Eigen::Map<const Vec>(dts.data(), static_cast<Eigen::Index>(dts.size()));

  ad::DVar s = score_rows(tape, h_v, marks, dtv);
  ad::Var p_raw = tape.neg(s.d);                                    // -ds/dt >= 0
  ad::Var z_all = tape.row_sum(scores_at_origin(tape, h_v));        // partition Z
  ad::Var p = tape.div(p_raw, z_all);
  ad::Var nll = tape.neg(tape.sum(tape.log(p)));
  return tape.scale(nll, 1.0 / static_cast<double>(flat.size()));
}

std::vector<HistoryState> IfibCModel::encode(const data::EventSequence& seq, size_t upto) const {
  return encode_prefix(store_, cfg_.encoder, seq, upto);
}

double IfibCModel::score(const HistoryState& h, int mark, double t) const {
  check_time(h, t);
  check_mark(mark);
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.constant(h.h);
  Vec dt(1);
  dt << t - h.t_last;
  return tape.value(score_rows(tape, hr, {mark}, dt).v)(0, 0);
}

Vec IfibCModel::origin_scores(const HistoryState& h) const {
  // Canonical inference path: the same score_rows kernel as every other
  // query, so ratios of these values collapse exactly at t = t_l.
  int k = cfg_.num_marks();
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.broadcast_row(tape.constant(h.h), k);
  std::vector<int> marks(k);
  for (int m = 0; m < k; ++m) marks[m] = m;
  Vec dt = Vec::Zero(k);
  return tape.value(score_rows(tape, hr, marks, dt).v).col(0);
}

double IfibCModel::partition(const HistoryState& h) const { return origin_scores(h).sum(); }

double IfibCModel::gamma(const HistoryState& h, int mark, double t) const {
  return score(h, mark, t) / partition(h);
}

double IfibCModel::density(const HistoryState& h, int mark, double t) const {
  check_time(h, t);
  check_mark(mark);
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.constant(h.h);
  Vec dt(1);
  dt << t - h.t_last;
  double minus_dsdt = -tape.value(score_rows(tape, hr, {mark}, dt).d)(0, 0);
  return minus_dsdt / partition(h);
}

double IfibCModel::mark_marginal(const HistoryState& h, int mark) const {
  return gamma(h, mark, h.t_last);
}

double IfibCModel::tail_all_marks(const HistoryState& h, double t) const {
  check_time(h, t);
  int k = cfg_.num_marks();
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.broadcast_row(tape.constant(h.h), k);
  std::vector<int> marks(k);
  Vec dt(k);
  for (int m = 0; m < k; ++m) {
    marks[m] = m;
    dt(m) = t - h.t_last;
  }
  double sum_s = tape.value(score_rows(tape, hr, marks, dt).v).col(0).sum();
  return sum_s / origin_scores(h).sum();
}

Mat IfibCModel::gamma_grid(const HistoryState& h, std::span<const double> ts) const {
  int k = cfg_.num_marks();
  int nt = static_cast<int>(ts.size());
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.broadcast_row(tape.constant(h.h), k * nt);
  std::vector<int> marks(k * nt);
  Vec dt(k * nt);
  for (int m = 0; m < k; ++m)
    for (int j = 0; j < nt; ++j) {
      check_time(h, ts[j]);
      marks[m * nt + j] = m;
      dt(m * nt + j) = ts[j] - h.t_last;
    }
  Mat s = tape.value(score_rows(tape, hr, marks, dt).v);
  double z = partition(h);
  Mat out(k, nt);
  for (int m = 0; m < k; ++m)
    for (int j = 0; j < nt; ++j) out(m, j) = s(m * nt + j, 0) / z;
  return out;
}

Mat IfibCModel::density_grid(const HistoryState& h, std::span<const double> ts) const {
  int k = cfg_.num_marks();
  int nt = static_cast<int>(ts.size());
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.broadcast_row(tape.constant(h.h), k * nt);
  std::vector<int> marks(k * nt);
  Vec dt(k * nt);
  for (int m = 0; m < k; ++m)
    for (int j = 0; j < nt; ++j) {
      check_time(h, ts[j]);
      marks[m * nt + j] = m;
      dt(m * nt + j) = ts[j] - h.t_last;
    }
  Mat tang = tape.value(score_rows(tape, hr, marks, dt).d);
  double z = partition(h);
  Mat out(k, nt);
  for (int m = 0; m < k; ++m)
    for (int j = 0; j < nt; ++j) out(m, j) = -tang(m * nt + j, 0) / z;
  return out;
}

}  // namespace ifib::models
