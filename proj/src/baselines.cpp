#include "ifib/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "ifib/metrics.hpp"

namespace ifib::models {

FennModel::FennModel(const FennConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  add_encoder_params(store_, cfg.encoder, rng);
  int v_rows = cfg.shared_v ? 1 : cfg.num_marks();
  store_.add("v", nonneg_raw_init(rng, v_rows, cfg.d_f, 1.0), ad::Constraint::NonnegReparam);
  add_iem_params(store_, "iem.", cfg.iem(), rng);
  store_.add("head.w", nonneg_raw_init(rng, cfg.iem_hidden, 1, 1.0 / cfg.iem_hidden),
             ad::Constraint::NonnegReparam);
  store_.add("head.b", uniform_init(rng, 1, 1,
                                    1.0 / std::sqrt(static_cast<double>(cfg.iem_hidden))));
}

FennModel::FennModel(const FennConfig& cfg, ad::ParamStore store)
    : cfg_(cfg), store_(std::move(store)) {}

void FennModel::check_time(const HistoryState& h, double t) const {
  if (t < h.t_last) throw std::invalid_argument("fenn: t before the last event");
}

ad::DVar FennModel::omega_rows(ad::Tape& tape, ad::Var h_rows, int mark, const Vec& dts) const {
  int n = static_cast<int>(dts.size());
  int v_row = cfg_.shared_v ? 0 : mark;
  ad::Var v = tape.broadcast_row(
      tape.gather_rows(tape.param("v"), std::vector<int>{v_row}), n);     // N x d_f
  ad::DVar f{tape.col_scale(v, tape.constant(dts)), v};
  ad::DVar x = ad::dconcat_cols(f, ad::dual_const(tape, h_rows));
  ad::DVar z = iem_trunk(tape, "iem.", cfg_.iem(), x);
  ad::DVar omega = ad::dmatmul(z, tape.param("head.w"));                  // N x 1
  omega.v = tape.add_row(omega.v, tape.param("head.b"));
  return omega;
}

ad::Var FennModel::batch_nll(ad::Tape& tape, const Batch& batch) const {
  std::vector<int> flat = batch.valid_flat_rows();
  if (flat.empty()) throw std::invalid_argument("fenn: batch has no events");
  EncodedBatch enc = encode_batch(tape, cfg_.encoder, batch);
  ad::Var h_v = tape.gather_rows(enc.stacked_before, flat);

  std::vector<int> marks = batch.valid_cat_marks();
  std::vector<double> dts = batch.valid_dt();
  int n = static_cast<int>(dts.size());
  Vec dtv = Eigen::Map<const Vec>(dts.data(), n);

  // Lambda(t_i): one trunk pass per mark over all events.
  ad::Var lambda_total;
  for (int m = 0; m < cfg_.num_marks(); ++m) {
    ad::Var term = tape.softplus(omega_rows(tape, h_v, m, dtv).v);
    lambda_total = m == 0 ? term : tape.add(lambda_total, term);
  }

  // lambda(m_i, t_i): tangent through the event's own mark pathway. Rows are
  // grouped by mark so each group shares one gathered v row.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return marks[a] < marks[b]; });
  std::vector<int> inverse(n);
  for (int i = 0; i < n; ++i) inverse[order[i]] = i;

  std::vector<ad::Var> lam_parts;
  int i = 0;
  while (i < n) {
    int j = i;
    int m = marks[order[i]];
    while (j < n && marks[order[j]] == m) ++j;
    Vec dts_m(j - i);
    std::vector<int> rows_m;
    for (int k = i; k < j; ++k) {
      dts_m(k - i) = dtv(order[k]);
      rows_m.push_back(order[k]);
    }
    ad::Var h_m = tape.gather_rows(h_v, rows_m);
    ad::DVar om = omega_rows(tape, h_m, m, dts_m);
    lam_parts.push_back(ad::dsoftplus(om).d);   // d/dt softplus(omega + b)
    i = j;
  }
  ad::Var lam_sorted = lam_parts.size() == 1 ? lam_parts[0] : tape.concat_rows(lam_parts);
  ad::Var lam = tape.gather_rows(lam_sorted, inverse);

  ad::Var nll = tape.sub(lambda_total, tape.log(lam));
  return tape.scale(tape.sum(nll), 1.0 / static_cast<double>(n));
}

std::vector<HistoryState> FennModel::encode(const data::EventSequence& seq, size_t upto) const {
  return encode_prefix(store_, cfg_.encoder, seq, upto);
}

double FennModel::big_lambda(const HistoryState& h, double t) const {
  check_time(h, t);
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.constant(h.h);
  Vec dt(1);
  dt << t - h.t_last;
  double acc = 0.0;
  for (int m = 0; m < cfg_.num_marks(); ++m)
    acc += ad::softplus(tape.value(omega_rows(tape, hr, m, dt).v)(0, 0));
  return acc;
}

double FennModel::intensity(const HistoryState& h, int mark, double t) const {
  check_time(h, t);
  if (mark < 0 || mark >= cfg_.num_marks()) throw std::invalid_argument("fenn: bad mark");
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.constant(h.h);
  Vec dt(1);
  dt << t - h.t_last;
  ad::DVar om = omega_rows(tape, hr, mark, dt);
  return tape.value(ad::dsoftplus(om).d)(0, 0);
}

double FennModel::density(const HistoryState& h, int mark, double t) const {
  return intensity(h, mark, t) * std::exp(-big_lambda(h, t));
}

Mat FennModel::intensity_grid(const HistoryState& h, std::span<const double> ts) const {
  int k = cfg_.num_marks();
  int nt = static_cast<int>(ts.size());
  Vec dt(nt);
  for (int j = 0; j < nt; ++j) {
    check_time(h, ts[j]);
    dt(j) = ts[j] - h.t_last;
  }
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.broadcast_row(tape.constant(h.h), nt);
  Mat out(k, nt);
  for (int m = 0; m < k; ++m) {
    ad::DVar om = omega_rows(tape, hr, m, dt);
    out.row(m) = tape.value(ad::dsoftplus(om).d).col(0).transpose();
  }
  return out;
}

std::vector<double> FennModel::big_lambda_grid(const HistoryState& h,
                                               std::span<const double> ts) const {
  int nt = static_cast<int>(ts.size());
  Vec dt(nt);
  for (int j = 0; j < nt; ++j) {
    check_time(h, ts[j]);
    dt(j) = ts[j] - h.t_last;
  }
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.broadcast_row(tape.constant(h.h), nt);
  std::vector<double> out(nt, 0.0);
  for (int m = 0; m < cfg_.num_marks(); ++m) {
    Mat om = tape.value(omega_rows(tape, hr, m, dt).v);
    for (int j = 0; j < nt; ++j) out[j] += ad::softplus(om(j, 0));
  }
  return out;
}

Mat FennModel::density_grid(const HistoryState& h, std::span<const double> ts) const {
  Mat lam = intensity_grid(h, ts);
  std::vector<double> lam_total = big_lambda_grid(h, ts);
  Mat out = lam;
  for (int j = 0; j < lam.cols(); ++j) out.col(j) *= std::exp(-lam_total[j]);
  return out;
}

double FennModel::lambda_upper_bound() const {
  Mat w = store_.effective(store_.index_of("head.w"));
  double b = store_.at("head.b").raw(0, 0);
  return static_cast<double>(cfg_.num_marks()) * ad::softplus(w.sum() + b);
}

Mat pairwise_density_l1(const FennModel& model, const HistoryState& h,
                        std::span<const double> ts) {
  Mat dens = model.density_grid(model.config().shared_v ? h : h, ts);
  int k = model.config().num_marks();
  Mat out = Mat::Zero(k, k);
  std::vector<double> grid(ts.begin(), ts.end());
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      std::vector<double> fi(dens.cols()), fj(dens.cols());
      for (int c = 0; c < dens.cols(); ++c) {
        fi[c] = dens(i, c);
        fj[c] = dens(j, c);
      }
      out(i, j) = out(j, i) = metrics::l1_distance(fi, fj, grid);
    }
  }
  return out;
}

Mat fullynn_overlap_matrix(const FennModel& model, const HistoryState& h,
                           std::span<const double> ts) {
  if (!model.config().shared_v)
    throw std::invalid_argument("overlap matrix requires the naive multi-mark flag");
  return pairwise_density_l1(model, h, ts);
}

}  // namespace ifib::models
