#pragma once

// LSTM history encoder: maps an event-sequence prefix to the embedding h
// that conditions every density. One batched pass yields all prefix states
// for teacher-forced training.

#include <random>
#include <vector>

#include "ifib/autodiff.hpp"
#include "ifib/data.hpp"

namespace ifib::models {

using ad::Mat;
using ad::Tape;
using ad::Var;
using ad::Vec;

// U(-scale, scale)
Mat uniform_init(std::mt19937_64& rng, int rows, int cols, double scale);
// Raw values whose softplus lands near `target` (jittered by U(0.5, 1.5)).
Mat nonneg_raw_init(std::mt19937_64& rng, int rows, int cols, double target);

struct EncoderConfig {
  data::MarkKind mark_kind = data::MarkKind::Categorical;
  int num_marks = 1;   // categorical
  int mark_dims = 0;   // numeric
  int d_embed = 32;
  int d_hidden = 32;

  int input_width() const { return d_embed + 1; }  // [mark embedding, dt]
};

// Registers enc.* parameter arrays. The initial hidden state is stored raw
// and passed through tanh so returned states always live in (-1, 1).
void add_encoder_params(ad::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

struct EncoderState {
  Var h, c;
};

EncoderState encoder_initial_state(Tape& tape, const EncoderConfig& cfg, int rows);

// One LSTM step over a batch row block; rows with valid = 0 keep their state.
EncoderState encoder_step(Tape& tape, const EncoderConfig& cfg, const EncoderState& state,
                          Var input, const Vec& valid);

// Mark featurization for one batch position.
Var embed_marks(Tape& tape, const EncoderConfig& cfg, const std::vector<int>& marks);
Var embed_marks(Tape& tape, const EncoderConfig& cfg, const Mat& vec_marks);

// ------------------------------------------------------------------- Batch

// Padded, masked view of a set of sequences. Position p of row b carries the
// (p+1)-th event of sequence b; flat row index is p * rows + b.
struct Batch {
  int rows = 0;
  int positions = 0;
  std::vector<Vec> dt;               // per position, rows x 1
  std::vector<Vec> valid;            // per position, 1.0 = real event
  std::vector<std::vector<int>> cat_marks;  // per position (categorical)
  std::vector<Mat> vec_marks;        // per position, rows x dims (numeric)

  std::vector<int> valid_flat_rows() const;   // into the stacked P*B layout
  std::vector<double> valid_dt() const;
  std::vector<int> valid_cat_marks() const;
  Mat valid_vec_marks(int dims) const;
  int valid_count() const;
};

Batch make_batch(const data::DatasetMeta& meta, const std::vector<data::EventSequence>& seqs,
                 const std::vector<size_t>& indices);

// States h_{i-1} conditioning event i, for every position, plus the stacked
// (P*B) x d_hidden matrix gathered for trunk evaluation.
struct EncodedBatch {
  std::vector<EncoderState> before;  // size = positions
  Var stacked_before;                // (P*B) x d_hidden
};

EncodedBatch encode_batch(Tape& tape, const EncoderConfig& cfg, const Batch& batch);

// ---------------------------------------------------------- inference path

struct HistoryState {
  Eigen::RowVectorXd h;
  double t_last = 0.0;
};

// h after consuming events 1..upto of the sequence (h_0 = learned state for
// upto = 0). Returns all intermediate states h_0..h_upto.
std::vector<HistoryState> encode_prefix(const ad::ParamStore& store, const EncoderConfig& cfg,
                                        const data::EventSequence& seq, size_t upto);

}  // namespace ifib::models
