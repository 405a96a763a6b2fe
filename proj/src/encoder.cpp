#include "ifib/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace ifib::models {

Mat uniform_init(std::mt19937_64& rng, int rows, int cols, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

Mat nonneg_raw_init(std::mt19937_64& rng, int rows, int cols, double target) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = ad::inv_softplus(target * u(rng));
  return m;
}

void add_encoder_params(ad::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng) {
  int in = cfg.input_width();
  int dh = cfg.d_hidden;
  if (cfg.mark_kind == data::MarkKind::Categorical) {
    store.add("enc.embed", uniform_init(rng, cfg.num_marks, cfg.d_embed,
                                        1.0 / std::sqrt(static_cast<double>(cfg.d_embed))));
  } else {
    double s = 1.0 / std::sqrt(static_cast<double>(cfg.mark_dims));
    store.add("enc.mark_proj", uniform_init(rng, cfg.mark_dims, cfg.d_embed, s));
    store.add("enc.mark_bias", uniform_init(rng, 1, cfg.d_embed, s));
  }
  double sx = 1.0 / std::sqrt(static_cast<double>(in));
  double sh = 1.0 / std::sqrt(static_cast<double>(dh));
  store.add("enc.Wx", uniform_init(rng, in, 4 * dh, sx));
  store.add("enc.Wh", uniform_init(rng, dh, 4 * dh, sh));
  Mat bias = uniform_init(rng, 1, 4 * dh, sh);
  bias.middleCols(dh, dh).array() += 1.0;  // forget gate starts open
  store.add("enc.b", std::move(bias));
  store.add("enc.h0_raw", uniform_init(rng, 1, dh, 0.1));
  store.add("enc.c0", uniform_init(rng, 1, dh, 0.1));
}

EncoderState encoder_initial_state(Tape& tape, const EncoderConfig& cfg, int rows) {
  Var h0 = tape.tanh(tape.param("enc.h0_raw"));
  Var c0 = tape.param("enc.c0");
  return {tape.broadcast_row(h0, rows), tape.broadcast_row(c0, rows)};
}

EncoderState encoder_step(Tape& tape, const EncoderConfig& cfg, const EncoderState& state,
                          Var input, const Vec& valid) {
  int dh = cfg.d_hidden;
  Var gates = tape.add_row(
      tape.add(tape.matmul(input, tape.param("enc.Wx")), tape.matmul(state.h, tape.param("enc.Wh"))),
      tape.param("enc.b"));
  Var gi = tape.sigmoid(tape.slice_cols(gates, 0, dh));
  Var gf = tape.sigmoid(tape.slice_cols(gates, dh, dh));
  Var gg = tape.tanh(tape.slice_cols(gates, 2 * dh, dh));
  Var go = tape.sigmoid(tape.slice_cols(gates, 3 * dh, dh));
  Var c_new = tape.add(tape.mul(gf, state.c), tape.mul(gi, gg));
  Var h_new = tape.mul(go, tape.tanh(c_new));
  return {tape.select_rows(valid, h_new, state.h), tape.select_rows(valid, c_new, state.c)};
}

Var embed_marks(Tape& tape, const EncoderConfig& cfg, const std::vector<int>& marks) {
  if (cfg.mark_kind != data::MarkKind::Categorical)
    throw std::invalid_argument("categorical marks on a numeric encoder");
  return tape.gather_rows(tape.param("enc.embed"), marks);
}

Var embed_marks(Tape& tape, const EncoderConfig& cfg, const Mat& vec_marks) {
  if (cfg.mark_kind != data::MarkKind::Numeric)
    throw std::invalid_argument("numeric marks on a categorical encoder");
  return tape.add_row(tape.matmul(tape.constant(vec_marks), tape.param("enc.mark_proj")),
                      tape.param("enc.mark_bias"));
}

// ------------------------------------------------------------------- Batch

std::vector<int> Batch::valid_flat_rows() const {
  std::vector<int> out;
  for (int p = 0; p < positions; ++p)
    for (int b = 0; b < rows; ++b)
      if (valid[p](b) > 0.5) out.push_back(p * rows + b);
  return out;
}

std::vector<double> Batch::valid_dt() const {
  std::vector<double> out;
  for (int p = 0; p < positions; ++p)
    for (int b = 0; b < rows; ++b)
      if (valid[p](b) > 0.5) out.push_back(dt[p](b));
  return out;
}

std::vector<int> Batch::valid_cat_marks() const {
  std::vector<int> out;
  for (int p = 0; p < positions; ++p)
    for (int b = 0; b < rows; ++b)
      if (valid[p](b) > 0.5) out.push_back(cat_marks[p][b]);
  return out;
}

Mat Batch::valid_vec_marks(int dims) const {
  Mat out(valid_count(), dims);
  int r = 0;
  for (int p = 0; p < positions; ++p)
    for (int b = 0; b < rows; ++b)
      if (valid[p](b) > 0.5) out.row(r++) = vec_marks[p].row(b);
  return out;
}

int Batch::valid_count() const {
  int n = 0;
  for (int p = 0; p < positions; ++p)
    for (int b = 0; b < rows; ++b)
      if (valid[p](b) > 0.5) ++n;
  return n;
}

Batch make_batch(const data::DatasetMeta& meta, const std::vector<data::EventSequence>& seqs,
                 const std::vector<size_t>& indices) {
  Batch batch;
  batch.rows = static_cast<int>(indices.size());
  size_t maxlen = 0;
  for (size_t idx : indices) maxlen = std::max(maxlen, seqs.at(idx).size());
  batch.positions = static_cast<int>(maxlen);

  int dims = meta.mark_kind == data::MarkKind::Numeric ? meta.dims : 0;
  for (int p = 0; p < batch.positions; ++p) {
    batch.dt.emplace_back(Vec::Zero(batch.rows));
    batch.valid.emplace_back(Vec::Zero(batch.rows));
    if (dims > 0)
      batch.vec_marks.emplace_back(Mat::Zero(batch.rows, dims));
    else
      batch.cat_marks.emplace_back(batch.rows, 0);
  }
  for (int b = 0; b < batch.rows; ++b) {
    const data::EventSequence& s = seqs.at(indices[b]);
    double prev = s.t_origin;
    for (size_t p = 0; p < s.size(); ++p) {
      batch.dt[p](b) = s.times[p] - prev;
      prev = s.times[p];
      batch.valid[p](b) = 1.0;
      if (dims > 0)
        for (int d = 0; d < dims; ++d) batch.vec_marks[p](b, d) = s.vec_marks[p][d];
      else
        batch.cat_marks[p][b] = s.marks[p];
    }
  }
  return batch;
}

EncodedBatch encode_batch(Tape& tape, const EncoderConfig& cfg, const Batch& batch) {
  EncodedBatch out;
  EncoderState state = encoder_initial_state(tape, cfg, batch.rows);
  std::vector<Var> h_parts;
  for (int p = 0; p < batch.positions; ++p) {
    out.before.push_back(state);
    h_parts.push_back(state.h);
    Var emb = cfg.mark_kind == data::MarkKind::Categorical
                  ? embed_marks(tape, cfg, batch.cat_marks[p])
                  : embed_marks(tape, cfg, batch.vec_marks[p]);
    Var input = tape.concat_cols(emb, tape.constant(batch.dt[p]));
    state = encoder_step(tape, cfg, state, input, batch.valid[p]);
  }
  out.stacked_before = batch.positions == 1 ? h_parts[0] : tape.concat_rows(h_parts);
  return out;
}

std::vector<HistoryState> encode_prefix(const ad::ParamStore& store, const EncoderConfig& cfg,
                                        const data::EventSequence& seq, size_t upto) {
  if (upto > seq.size()) throw std::out_of_range("encode_prefix: index out of range");
  Tape tape(const_cast<ad::ParamStore*>(&store));
  EncoderState state = encoder_initial_state(tape, cfg, 1);
  std::vector<HistoryState> out;
  out.push_back({tape.value(state.h).row(0), seq.t_origin});
  double prev = seq.t_origin;
  Vec one = Vec::Ones(1);
  for (size_t i = 0; i < upto; ++i) {
    Var emb;
    if (cfg.mark_kind == data::MarkKind::Categorical) {
      emb = embed_marks(tape, cfg, std::vector<int>{seq.marks[i]});
    } else {
      Mat m(1, cfg.mark_dims);
      for (int d = 0; d < cfg.mark_dims; ++d) m(0, d) = seq.vec_marks[i][d];
      emb = embed_marks(tape, cfg, m);
    }
    Var input = tape.concat_cols(emb, tape.constant(Mat::Constant(1, 1, seq.times[i] - prev)));
    prev = seq.times[i];
    state = encoder_step(tape, cfg, state, input, one);
    out.push_back({tape.value(state.h).row(0), seq.times[i]});
  }
  return out;
}

}  // namespace ifib::models
