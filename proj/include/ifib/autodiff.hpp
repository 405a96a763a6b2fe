#pragma once

// Tape-based differentiation layer. Three services back the models:
//   * reverse-mode gradients of a scalar loss w.r.t. all parameters,
//   * forward-mode tangents of an output w.r.t. one scalar input column,
//   * reverse-mode gradients through a tangent (the tangent rules are
//     themselves built from recorded primitives, so one reverse sweep over
//     the enlarged graph yields the second-order parameter gradients).
//
// Values are row-batched matrices (rows = batch, cols = features), f64.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifib::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------- ParamStore

enum class Constraint : uint8_t { Free, NonnegReparam };

struct ParamArray {
  std::string name;
  Mat raw;           // stored / optimized values
  Constraint constraint = Constraint::Free;
  Mat grad;          // dLoss/dRaw, accumulated by Tape::backward
  Mat adam_m, adam_v;
};

// Named flat parameter store. Shapes are fixed at registration time.
class ParamStore {
 public:
  int add(const std::string& name, Mat init, Constraint c = Constraint::Free);
  int index_of(const std::string& name) const;        // -1 if absent
  ParamArray& at(int i) { return arrays_.at(i); }
  const ParamArray& at(int i) const { return arrays_.at(i); }
  ParamArray& at(const std::string& name);
  const ParamArray& at(const std::string& name) const;
  int size() const { return static_cast<int>(arrays_.size()); }

  void zero_grad();
  // Effective value seen by the model: softplus(raw) for nonneg arrays.
  Mat effective(int i) const;
  // Throws if a nonneg-reparam array has a non-positive effective entry.
  void check_nonneg() const;

 private:
  std::vector<ParamArray> arrays_;
};

// Numerically stable scalar helpers shared with op kernels.
double softplus(double x);
double sigmoid(double x);       // 1/(1+e^-x), increasing
double sigmoid_dec(double x);   // 1/(1+e^x), decreasing
double inv_softplus(double y);  // softplus(inv_softplus(y)) == y

// ----------------------------------------------------------------- Tape/Var

enum class Op : uint8_t {
  Const, Param,
  Add, Sub, Mul, Div, Neg,
  MatMul,        // (r x k) * (k x c)
  AddRow,        // x + row-vector node broadcast down rows
  BroadcastRow,  // 1 x c -> r x c
  ColScale,      // (r x c) each column scaled by (r x 1)
  ScaleConst, AddConst,
  Tanh, Sigmoid, SigmoidDec, Softplus, Exp, Log,
  ConcatCols, ConcatRows,
  SliceCols, Transpose,
  BroadcastCol,  // r x 1 -> r x c
  GatherRows,    // rows picked by an index list (embedding lookup)
  RowSum, RowMean,
  Sum, MaskedSum,
  SelectRows,    // mask (r x 1 data) ? a : b, rowwise blend
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

struct Node {
  Op op = Op::Const;
  int in0 = -1, in1 = -1;
  std::vector<int> ins;   // ConcatRows only
  Mat value;
  Mat grad;
  bool grad_live = false; // grad holds data for the current backward pass
  double scalar = 0.0;    // ScaleConst / AddConst payload
  int col0 = 0, width = 0;
  std::vector<int> index; // GatherRows payload
  Vec mask;               // MaskedSum / SelectRows payload
  int param = -1;         // ParamStore slot for Param leaves
  std::string label;
};

// Records primitive ops for one forward computation; replayable in reverse.
// Single-threaded during recording; node ids only grow, so the graph is
// acyclic by construction.
class Tape {
 public:
  explicit Tape(ParamStore* store = nullptr) : store_(store) {}

  ParamStore* store() const { return store_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_.at(id); }

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar_value(Var v) const;

  Var constant(Mat m, std::string label = {});
  Var constant_scalar(double x);
  // Raw parameter leaf; gradients accumulate into the store.
  Var param_raw(int slot);
  // softplus(raw) for nonneg arrays, raw otherwise.
  Var param(int slot);
  Var param(const std::string& name);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var matmul(Var x, Var w);
  Var add_row(Var x, Var row);
  Var broadcast_row(Var row, int rows);
  Var col_scale(Var x, Var s);
  Var scale(Var x, double c);
  Var add_const(Var x, double c);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var sigmoid_dec(Var x);
  Var softplus(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var concat_cols(Var a, Var b);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var x, int col0, int width);
  Var transpose(Var x);
  Var broadcast_col(Var col, int cols);
  Var gather_rows(Var x, std::vector<int> rows);
  Var row_sum(Var x);
  Var row_mean(Var x);
  Var sum(Var x);
  Var masked_sum(Var x, Vec mask);
  Var select_rows(Vec mask, Var a, Var b);

  // Reverse sweep from a scalar loss. Parameter gradients are accumulated
  // into the store (call store->zero_grad() between independent losses).
  void backward(Var loss);

  // Throws naming the first node with a non-finite entry.
  void check_finite() const;

 private:
  Var push(Node n);
  ParamStore* store_ = nullptr;
  std::vector<Node> nodes_;
};

// ------------------------------------------------------------- dual values

// (value, tangent) pair; the tangent tracks d/dx for one designated scalar
// input column. Tangent rules are composed from Tape primitives so that
// backward() differentiates through them.
struct DVar {
  Var v;
  Var d;
};

DVar make_dual(Var value, Var tangent);
DVar dual_const(Tape& t, Var value);           // zero tangent
DVar dadd(DVar a, DVar b);
DVar dsub(DVar a, DVar b);
DVar dmul(DVar a, DVar b);
DVar dmatmul(DVar x, Var w);                   // w treated as constant in x
DVar dadd_row(DVar x, Var row);
DVar dcol_scale(DVar x, DVar s);
DVar dconcat_cols(DVar a, DVar b);
DVar dtanh(DVar x);
DVar dsigmoid(DVar x);
DVar dsigmoid_dec(DVar x);
DVar dsoftplus(DVar x);
DVar drow_sum(DVar x);
DVar drow_mean(DVar x);
DVar dscale(DVar x, double c);

}  // namespace ifib::ad
