#include "ifib/ifib_n.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ifib::models {

IfibNModel::IfibNModel(const IfibNConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.dims() < 1) throw std::invalid_argument("ifib-n: needs at least one mark dimension");
  for (auto& [a, b] : cfg.bounds)
    if (!(a < b)) throw std::invalid_argument("ifib-n: bounds require a < b");
  std::mt19937_64 rng(seed);
  add_encoder_params(store_, cfg.encoder, rng);
  int n = cfg.dims();
  int du = cfg.d_u;
  store_.add("u", uniform_init(rng, n + 1, du, 1.0 / std::sqrt(static_cast<double>(du))));
  double sh = 1.0 / std::sqrt(static_cast<double>(cfg.encoder.d_hidden));
  store_.add("chain.Wh0", uniform_init(rng, cfg.encoder.d_hidden, du, sh));
  store_.add("chain.bh0", uniform_init(rng, 1, du, sh));
  store_.add("chain.Wc0", uniform_init(rng, cfg.encoder.d_hidden, du, sh));
  store_.add("chain.bc0", uniform_init(rng, 1, du, sh));
  double sx = 1.0 / std::sqrt(static_cast<double>(du + 1));
  store_.add("chain.Wx", uniform_init(rng, du + 1, 4 * du, sx));
  store_.add("chain.Wh", uniform_init(rng, du, 4 * du, 1.0 / std::sqrt(static_cast<double>(du))));
  Mat cb = uniform_init(rng, 1, 4 * du, 1.0 / std::sqrt(static_cast<double>(du)));
  cb.middleCols(du, du).array() += 1.0;
  store_.add("chain.b", std::move(cb));
  // v = softplus(chain_h Wv + bv): the non-negative activation producing the
  // factor conditioning vectors. Bias starts positive so initial v ~ 1.
  store_.add("chain.Wv", uniform_init(rng, du, cfg.d_f, 1.0 / std::sqrt(static_cast<double>(du))));
  store_.add("chain.bv", Mat::Constant(1, cfg.d_f, ad::inv_softplus(1.0)));

  add_iem_params(store_, "tiem.", cfg.iem(), rng);
  store_.add("thead.w", nonneg_raw_init(rng, cfg.iem_hidden, 1, 1.0 / cfg.iem_hidden),
             ad::Constraint::NonnegReparam);
  store_.add("thead.b", uniform_init(rng, 1, 1, 0.3));
  store_.add("tskip", nonneg_raw_init(rng, 1, 1, 0.5), ad::Constraint::NonnegReparam);

  add_iem_params(store_, "miem.", cfg.iem(), rng);
  store_.add("mhead.w", nonneg_raw_init(rng, cfg.iem_hidden, 1, 1.0 / cfg.iem_hidden),
             ad::Constraint::NonnegReparam);
  store_.add("mhead.b", uniform_init(rng, 1, 1, 0.3));
  store_.add("mskip", nonneg_raw_init(rng, 1, 1, 0.5), ad::Constraint::NonnegReparam);
}

IfibNModel::IfibNModel(const IfibNConfig& cfg, ad::ParamStore store)
    : cfg_(cfg), store_(std::move(store)) {}

void IfibNModel::check_time(const HistoryState& h, double t) const {
  if (t < h.t_last) throw std::invalid_argument("ifib-n: t before the last event");
}

IfibNModel::FactorHeads IfibNModel::heads_for(int factor) const {
  if (factor == 0) return {"tiem.", "thead.w", "thead.b", "tskip"};
  return {"miem.", "mhead.w", "mhead.b", "mskip"};
}

ad::DVar IfibNModel::factor_score(ad::Tape& tape, const FactorHeads& fh, ad::Var v_rows,
                                  const Vec& xs, ad::Var h_rows) const {
  int n = static_cast<int>(xs.size());
  ad::DVar f{tape.col_scale(v_rows, tape.constant(xs)), v_rows};
  ad::DVar x = ad::dconcat_cols(f, ad::dual_const(tape, h_rows));
  ad::DVar z = iem_trunk(tape, fh.iem, cfg_.iem(), x);
  ad::DVar pre = ad::dmatmul(z, tape.param(fh.head_w));
  pre.v = tape.add_row(pre.v, tape.param(fh.head_b));
  ad::Var wskip = tape.broadcast_row(tape.param(fh.skip), n);
  ad::DVar skip = ad::dmul(ad::drow_mean(f), ad::dual_const(tape, wskip));
  return ad::dsigmoid_dec(ad::dadd(pre, skip));
}

std::vector<ad::Var> IfibNModel::chain_rows(ad::Tape& tape, ad::Var h_rows,
                                            const std::vector<Vec>& realized, int n_rows) const {
  int n = cfg_.dims();
  if (static_cast<int>(realized.size()) != n)
    throw std::invalid_argument("ifib-n: chain needs dt and the first n-1 mark coordinates");
  int du = cfg_.d_u;
  ad::Var hc = tape.tanh(tape.add_row(tape.matmul(h_rows, tape.param("chain.Wh0")),
                                      tape.param("chain.bh0")));
  ad::Var cc = tape.add_row(tape.matmul(h_rows, tape.param("chain.Wc0")),
                            tape.param("chain.bc0"));
  std::vector<ad::Var> vs;
  for (int i = 0; i <= n; ++i) {
    ad::Var u_i = tape.broadcast_row(
        tape.gather_rows(tape.param("u"), std::vector<int>{i}), n_rows);
    Vec prev = Vec::Zero(n_rows);
    if (i > 0 && !cfg_.static_chain) prev = realized[i - 1];
    ad::Var input = tape.concat_cols(u_i, tape.constant(prev));
    ad::Var gates = tape.add_row(tape.add(tape.matmul(input, tape.param("chain.Wx")),
                                          tape.matmul(hc, tape.param("chain.Wh"))),
                                 tape.param("chain.b"));
    ad::Var gi = tape.sigmoid(tape.slice_cols(gates, 0, du));
    ad::Var gf = tape.sigmoid(tape.slice_cols(gates, du, du));
    ad::Var gg = tape.tanh(tape.slice_cols(gates, 2 * du, du));
    ad::Var go = tape.sigmoid(tape.slice_cols(gates, 3 * du, du));
    cc = tape.add(tape.mul(gf, cc), tape.mul(gi, gg));
    hc = tape.mul(go, tape.tanh(cc));
    vs.push_back(tape.softplus(tape.add_row(tape.matmul(hc, tape.param("chain.Wv")),
                                            tape.param("chain.bv"))));
  }
  return vs;
}

ad::Var IfibNModel::batch_nll(ad::Tape& tape, const Batch& batch) const {
  std::vector<int> flat = batch.valid_flat_rows();
  if (flat.empty()) throw std::invalid_argument("ifib-n: batch has no events");
  int n_ev = static_cast<int>(flat.size());
  int n = cfg_.dims();

  EncodedBatch enc = encode_batch(tape, cfg_.encoder, batch);
  ad::Var h_v = tape.gather_rows(enc.stacked_before, flat);

  std::vector<double> dts = batch.valid_dt();
  Vec dtv = Eigen::Map<const Vec>(dts.data(), n_ev);
  Mat marks = batch.valid_vec_marks(n);

  // Events on the box boundary have no two-sided derivative; nudge them in.
  int clamped = 0;
  for (int d = 0; d < n; ++d) {
    double a = cfg_.bounds[d].first, b = cfg_.bounds[d].second;
    double eps = 1e-6 * (b - a);
    for (int r = 0; r < n_ev; ++r) {
      if (marks(r, d) <= a) {
        marks(r, d) = a + eps;
        ++clamped;
      } else if (marks(r, d) >= b) {
        marks(r, d) = b - eps;
        ++clamped;
      }
    }
  }
  if (clamped > 0)
    std::fprintf(stderr, "ifib-n: clamped %d boundary mark coordinate(s) inward\n", clamped);

  std::vector<Vec> realized;
  realized.push_back(dtv);
  for (int d = 0; d + 1 < n; ++d) realized.push_back(marks.col(d));
  std::vector<ad::Var> vs = chain_rows(tape, h_v, realized, n_ev);

  // time factor: p_t = (-ds/dt) / s(t_l)
  ad::DVar st = factor_score(tape, heads_for(0), vs[0], dtv, h_v);
  ad::Var st0 = factor_score(tape, heads_for(0), vs[0], Vec::Zero(n_ev), h_v).v;
  ad::Var log_p = tape.sub(tape.log(tape.neg(st.d)), tape.log(st0));

  // mark factors: p_i = (-ds/dx) / (s(a_i) - s(b_i))
  for (int d = 0; d < n; ++d) {
    double a = cfg_.bounds[d].first, b = cfg_.bounds[d].second;
    ad::DVar sd = factor_score(tape, heads_for(d + 1), vs[d + 1], marks.col(d), h_v);
    ad::Var sa = factor_score(tape, heads_for(d + 1), vs[d + 1], Vec::Constant(n_ev, a), h_v).v;
    ad::Var sb = factor_score(tape, heads_for(d + 1), vs[d + 1], Vec::Constant(n_ev, b), h_v).v;
    ad::Var log_pd = tape.sub(tape.log(tape.neg(sd.d)), tape.log(tape.sub(sa, sb)));
    log_p = tape.add(log_p, log_pd);
  }
  return tape.scale(tape.neg(tape.sum(log_p)), 1.0 / static_cast<double>(n_ev));
}

std::vector<HistoryState> IfibNModel::encode(const data::EventSequence& seq, size_t upto) const {
  return encode_prefix(store_, cfg_.encoder, seq, upto);
}

ChainContext IfibNModel::chain(const HistoryState& h, double dt,
                               std::span<const double> mark_context) const {
  int n = cfg_.dims();
  if (static_cast<int>(mark_context.size()) < n - 1)
    throw std::invalid_argument("ifib-n: chain context needs n-1 mark coordinates");
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var hr = tape.constant(h.h);
  std::vector<Vec> realized;
  realized.push_back(Vec::Constant(1, dt));
  for (int d = 0; d + 1 < n; ++d) realized.push_back(Vec::Constant(1, mark_context[d]));
  std::vector<ad::Var> vs = chain_rows(tape, hr, realized, 1);
  ChainContext ctx;
  ctx.v.resize(n + 1, cfg_.d_f);
  for (int i = 0; i <= n; ++i) ctx.v.row(i) = tape.value(vs[i]).row(0);
  return ctx;
}

double IfibNModel::factor_integral(const HistoryState& h, const ChainContext& ctx, int factor,
                                   double x) const {
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var v = tape.constant(ctx.v.row(factor));
  ad::Var hr = tape.constant(h.h);
  FactorHeads fh = heads_for(factor);
  if (factor == 0) {
    check_time(h, x);
    Vec xs(2);
    xs << x - h.t_last, 0.0;
    ad::Var hr2 = tape.broadcast_row(hr, 2);
    ad::Var v2 = tape.broadcast_row(v, 2);
    Mat s = tape.value(factor_score(tape, fh, v2, xs, hr2).v);
    return s(0, 0) / s(1, 0);
  }
  auto [a, b] = cfg_.bounds[factor - 1];
  if (x < a || x > b) throw std::invalid_argument("ifib-n: factor value outside its domain");
  Vec xs(3);
  xs << x, a, b;
  ad::Var hr3 = tape.broadcast_row(hr, 3);
  ad::Var v3 = tape.broadcast_row(v, 3);
  Mat s = tape.value(factor_score(tape, fh, v3, xs, hr3).v);
  return (s(0, 0) - s(2, 0)) / (s(1, 0) - s(2, 0));
}

double IfibNModel::factor_density(const HistoryState& h, const ChainContext& ctx, int factor,
                                  double x) const {
  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var v = tape.constant(ctx.v.row(factor));
  ad::Var hr = tape.constant(h.h);
  FactorHeads fh = heads_for(factor);
  if (factor == 0) {
    check_time(h, x);
    Vec xs(2);
    xs << x - h.t_last, 0.0;
    ad::DVar s = factor_score(tape, fh, tape.broadcast_row(v, 2), xs, tape.broadcast_row(hr, 2));
    return -tape.value(s.d)(0, 0) / tape.value(s.v)(1, 0);
  }
  auto [a, b] = cfg_.bounds[factor - 1];
  if (!(x > a && x < b))
    throw std::invalid_argument("ifib-n: density needs an interior point");
  Vec xs(3);
  xs << x, a, b;
  ad::DVar s = factor_score(tape, fh, tape.broadcast_row(v, 3), xs, tape.broadcast_row(hr, 3));
  Mat sv = tape.value(s.v);
  return -tape.value(s.d)(0, 0) / (sv(1, 0) - sv(2, 0));
}

double IfibNModel::gamma_with(const HistoryState& h, const ChainContext& ctx,
                              std::span<const double> mark, double t) const {
  if (static_cast<int>(mark.size()) != cfg_.dims())
    throw std::invalid_argument("ifib-n: mark dimension mismatch");
  double acc = factor_integral(h, ctx, 0, t);
  for (int d = 0; d < cfg_.dims(); ++d) acc *= factor_integral(h, ctx, d + 1, mark[d]);
  return acc;
}

double IfibNModel::density_with(const HistoryState& h, const ChainContext& ctx,
                                std::span<const double> mark, double t) const {
  if (static_cast<int>(mark.size()) != cfg_.dims())
    throw std::invalid_argument("ifib-n: mark dimension mismatch");
  double acc = factor_density(h, ctx, 0, t);
  for (int d = 0; d < cfg_.dims(); ++d) acc *= factor_density(h, ctx, d + 1, mark[d]);
  return acc;
}

double IfibNModel::gamma(const HistoryState& h, std::span<const double> mark, double t) const {
  return gamma_with(h, chain(h, t - h.t_last, mark), mark, t);
}

double IfibNModel::density(const HistoryState& h, std::span<const double> mark, double t) const {
  return density_with(h, chain(h, t - h.t_last, mark), mark, t);
}

double IfibNModel::time_tail(const HistoryState& h, double t) const {
  check_time(h, t);
  std::vector<double> center(cfg_.dims());
  for (int d = 0; d < cfg_.dims(); ++d)
    center[d] = 0.5 * (cfg_.bounds[d].first + cfg_.bounds[d].second);
  ChainContext ctx = chain(h, t - h.t_last, center);
  return factor_integral(h, ctx, 0, t);
}

double IfibNModel::cube_tail(const HistoryState& h, std::span<const double> lo,
                             std::span<const double> hi, double t) const {
  int n = cfg_.dims();
  if (static_cast<int>(lo.size()) != n || static_cast<int>(hi.size()) != n)
    throw std::invalid_argument("ifib-n: cube dimension mismatch");
  std::vector<double> center(n);
  for (int d = 0; d < n; ++d) {
    auto [a, b] = cfg_.bounds[d];
    if (!(lo[d] < hi[d])) throw std::invalid_argument("ifib-n: degenerate cube edge");
    if (lo[d] < a || hi[d] > b) throw std::invalid_argument("ifib-n: cube outside the box");
    center[d] = 0.5 * (a + b);  // box center: cube-independent, keeps cubes additive
  }
  ChainContext ctx = chain(h, t - h.t_last, center);
  double acc = factor_integral(h, ctx, 0, t);
  for (int d = 0; d < n; ++d)
    acc *= factor_integral(h, ctx, d + 1, lo[d]) - factor_integral(h, ctx, d + 1, hi[d]);
  return acc;
}

Mat IfibNModel::density_grid(const HistoryState& h, const Mat& marks,
                             std::span<const double> ts) const {
  int n = cfg_.dims();
  if (marks.cols() != n) throw std::invalid_argument("ifib-n: mark grid dimension mismatch");
  int g = static_cast<int>(marks.rows());
  int nt = static_cast<int>(ts.size());
  int rows = g * nt;  // row r = mark (r / nt), time (r % nt)

  ad::Tape tape(const_cast<ad::ParamStore*>(&store_));
  ad::Var h_rows = tape.broadcast_row(tape.constant(h.h), rows);
  Vec dtv(rows);
  Mat mk(rows, n);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < nt; ++j) {
      check_time(h, ts[j]);
      dtv(i * nt + j) = ts[j] - h.t_last;
      mk.row(i * nt + j) = marks.row(i);
    }
  std::vector<Vec> realized;
  realized.push_back(dtv);
  for (int d = 0; d + 1 < n; ++d) realized.push_back(mk.col(d));
  std::vector<ad::Var> vs = chain_rows(tape, h_rows, realized, rows);

  ad::DVar st = factor_score(tape, heads_for(0), vs[0], dtv, h_rows);
  ad::Var st0 = factor_score(tape, heads_for(0), vs[0], Vec::Zero(rows), h_rows).v;
  Vec dens = (-tape.value(st.d).col(0).array() / tape.value(st0).col(0).array()).matrix();
  for (int d = 0; d < n; ++d) {
    auto [a, b] = cfg_.bounds[d];
    ad::DVar sd = factor_score(tape, heads_for(d + 1), vs[d + 1], mk.col(d), h_rows);
    ad::Var sa = factor_score(tape, heads_for(d + 1), vs[d + 1], Vec::Constant(rows, a), h_rows).v;
    ad::Var sb = factor_score(tape, heads_for(d + 1), vs[d + 1], Vec::Constant(rows, b), h_rows).v;
    dens = (dens.array() * (-tape.value(sd.d).col(0).array()) /
            (tape.value(sa).col(0).array() - tape.value(sb).col(0).array()))
               .matrix();
  }
  Mat out(g, nt);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < nt; ++j) out(i, j) = dens(i * nt + j);
  return out;
}

}  // namespace ifib::models
