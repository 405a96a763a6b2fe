#include "ifib/autodiff.hpp"

#include <cmath>
#include <utility>

namespace ifib::ad {

// ---------------------------------------------------------------- ParamStore

int ParamStore::add(const std::string& name, Mat init, Constraint c) {
  if (index_of(name) >= 0) throw std::invalid_argument("duplicate parameter: " + name);
  ParamArray a;
  a.name = name;
  a.raw = std::move(init);
  a.constraint = c;
  a.grad = Mat::Zero(a.raw.rows(), a.raw.cols());
  arrays_.push_back(std::move(a));
  return static_cast<int>(arrays_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(arrays_.size()); ++i)
    if (arrays_[i].name == name) return i;
  return -1;
}

ParamArray& ParamStore::at(const std::string& name) {
  int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no such parameter: " + name);
  return arrays_[i];
}

const ParamArray& ParamStore::at(const std::string& name) const {
  int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no such parameter: " + name);
  return arrays_[i];
}

void ParamStore::zero_grad() {
  for (auto& a : arrays_) a.grad.setZero();
}

Mat ParamStore::effective(int i) const {
  const ParamArray& a = arrays_.at(i);
  if (a.constraint == Constraint::Free) return a.raw;
  return a.raw.unaryExpr([](double x) { return softplus(x); });
}

void ParamStore::check_nonneg() const {
  // softplus(raw) can underflow to +0 for extreme raws but must never go
  // negative
  for (const auto& a : arrays_) {
    if (a.constraint != Constraint::NonnegReparam) continue;
    if ((a.raw.array().unaryExpr([](double x) { return softplus(x); }) < 0.0).any())
      throw std::runtime_error("nonneg-reparam array went negative: " + a.name);
  }
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double sigmoid_dec(double x) { return sigmoid(-x); }

double inv_softplus(double y) {
  if (y <= 0.0) throw std::invalid_argument("inv_softplus requires y > 0");
  if (y > 30.0) return y;  // softplus(x) == x to double precision here
  return std::log(std::expm1(y));
}

// ----------------------------------------------------------------- Tape ops

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(std::string("tape: ") + msg);
}

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

double Tape::scalar_value(Var v) const {
  const Mat& m = nodes_.at(v.id).value;
  require(m.rows() == 1 && m.cols() == 1, "scalar_value on non-scalar node");
  return m(0, 0);
}

Var Tape::constant(Mat m, std::string label) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(m);
  n.label = std::move(label);
  return push(std::move(n));
}

Var Tape::constant_scalar(double x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return constant(std::move(m));
}

Var Tape::param_raw(int slot) {
  require(store_ != nullptr, "param on a tape without a store");
  Node n;
  n.op = Op::Param;
  n.param = slot;
  n.value = store_->at(slot).raw;
  n.label = store_->at(slot).name;
  return push(std::move(n));
}

Var Tape::param(int slot) {
  Var raw = param_raw(slot);
  if (store_->at(slot).constraint == Constraint::NonnegReparam) return softplus(raw);
  return raw;
}

Var Tape::param(const std::string& name) {
  require(store_ != nullptr, "param on a tape without a store");
  int slot = store_->index_of(name);
  require(slot >= 0, "unknown parameter name");
  return param(slot);
}

#define IFIB_BIN_SHAPE(a, b) \
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), \
          "shape mismatch")

Var Tape::add(Var a, Var b) {
  IFIB_BIN_SHAPE(a, b);
  Node n;
  n.op = Op::Add;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  IFIB_BIN_SHAPE(a, b);
  Node n;
  n.op = Op::Sub;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = value(a) - value(b);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  IFIB_BIN_SHAPE(a, b);
  Node n;
  n.op = Op::Mul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  IFIB_BIN_SHAPE(a, b);
  Node n;
  n.op = Op::Div;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = value(a).cwiseQuotient(value(b));
  return push(std::move(n));
}

Var Tape::neg(Var a) {
  Node n;
  n.op = Op::Neg;
  n.in0 = a.id;
  n.value = -value(a);
  return push(std::move(n));
}

Var Tape::matmul(Var x, Var w) {
  require(value(x).cols() == value(w).rows(), "matmul inner dims");
  Node n;
  n.op = Op::MatMul;
  n.in0 = x.id;
  n.in1 = w.id;
  n.value = value(x) * value(w);
  return push(std::move(n));
}

Var Tape::add_row(Var x, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(x).cols(), "add_row shape");
  Node n;
  n.op = Op::AddRow;
  n.in0 = x.id;
  n.in1 = row.id;
  n.value = value(x).rowwise() + value(row).row(0);
  return push(std::move(n));
}

Var Tape::broadcast_row(Var row, int rows) {
  require(value(row).rows() == 1, "broadcast_row expects 1 x c");
  Node n;
  n.op = Op::BroadcastRow;
  n.in0 = row.id;
  n.value = value(row).replicate(rows, 1);
  return push(std::move(n));
}

Var Tape::col_scale(Var x, Var s) {
  require(value(s).cols() == 1 && value(s).rows() == value(x).rows(), "col_scale shape");
  Node n;
  n.op = Op::ColScale;
  n.in0 = x.id;
  n.in1 = s.id;
  n.value = (value(x).array().colwise() * value(s).col(0).array()).matrix();
  return push(std::move(n));
}

Var Tape::scale(Var x, double c) {
  Node n;
  n.op = Op::ScaleConst;
  n.in0 = x.id;
  n.scalar = c;
  n.value = value(x) * c;
  return push(std::move(n));
}

Var Tape::add_const(Var x, double c) {
  Node n;
  n.op = Op::AddConst;
  n.in0 = x.id;
  n.scalar = c;
  n.value = (value(x).array() + c).matrix();
  return push(std::move(n));
}

#define IFIB_UNARY(name, opkind, expr)                            \
  Var Tape::name(Var x) {                                         \
    Node n;                                                       \
    n.op = Op::opkind;                                            \
    n.in0 = x.id;                                                 \
    n.value = value(x).unaryExpr([](double v) { return expr; }); \
    return push(std::move(n));                                    \
  }

IFIB_UNARY(tanh, Tanh, std::tanh(v))
IFIB_UNARY(sigmoid, Sigmoid, ifib::ad::sigmoid(v))
IFIB_UNARY(sigmoid_dec, SigmoidDec, ifib::ad::sigmoid_dec(v))
IFIB_UNARY(softplus, Softplus, ifib::ad::softplus(v))
IFIB_UNARY(exp, Exp, std::exp(v))
IFIB_UNARY(log, Log, std::log(v))
#undef IFIB_UNARY

Var Tape::concat_cols(Var a, Var b) {
  require(value(a).rows() == value(b).rows(), "concat_cols rows");
  Node n;
  n.op = Op::ConcatCols;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value.resize(value(a).rows(), value(a).cols() + value(b).cols());
  n.value << value(a), value(b);
  return push(std::move(n));
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows needs inputs");
  Eigen::Index rows = 0;
  Eigen::Index cols = value(parts[0]).cols();
  for (Var p : parts) {
    require(value(p).cols() == cols, "concat_rows cols");
    rows += value(p).rows();
  }
  Node n;
  n.op = Op::ConcatRows;
  n.value.resize(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    n.ins.push_back(p.id);
    n.value.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var x, int col0, int width) {
  require(col0 >= 0 && width > 0 && col0 + width <= value(x).cols(), "slice_cols range");
  Node n;
  n.op = Op::SliceCols;
  n.in0 = x.id;
  n.col0 = col0;
  n.width = width;
  n.value = value(x).middleCols(col0, width);
  return push(std::move(n));
}

Var Tape::transpose(Var x) {
  Node n;
  n.op = Op::Transpose;
  n.in0 = x.id;
  n.value = value(x).transpose();
  return push(std::move(n));
}

Var Tape::broadcast_col(Var col, int cols) {
  require(value(col).cols() == 1, "broadcast_col expects r x 1");
  Node n;
  n.op = Op::BroadcastCol;
  n.in0 = col.id;
  n.value = value(col).replicate(1, cols);
  return push(std::move(n));
}

Var Tape::gather_rows(Var x, std::vector<int> rows) {
  Node n;
  n.op = Op::GatherRows;
  n.in0 = x.id;
  n.value.resize(static_cast<Eigen::Index>(rows.size()), value(x).cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < value(x).rows(), "gather_rows index");
    n.value.row(static_cast<Eigen::Index>(i)) = value(x).row(rows[i]);
  }
  n.index = std::move(rows);
  return push(std::move(n));
}

Var Tape::row_sum(Var x) {
  Node n;
  n.op = Op::RowSum;
  n.in0 = x.id;
  n.value = value(x).rowwise().sum();
  return push(std::move(n));
}

Var Tape::row_mean(Var x) {
  Node n;
  n.op = Op::RowMean;
  n.in0 = x.id;
  n.value = value(x).rowwise().mean();
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Op::Sum;
  n.in0 = x.id;
  n.value.resize(1, 1);
  n.value(0, 0) = value(x).sum();
  return push(std::move(n));
}

Var Tape::masked_sum(Var x, Vec mask) {
  require(value(x).cols() == 1 && value(x).rows() == mask.size(), "masked_sum shape");
  Node n;
  n.op = Op::MaskedSum;
  n.in0 = x.id;
  n.value.resize(1, 1);
  n.value(0, 0) = value(x).col(0).dot(mask);
  n.mask = std::move(mask);
  return push(std::move(n));
}

Var Tape::select_rows(Vec mask, Var a, Var b) {
  IFIB_BIN_SHAPE(a, b);
  require(mask.size() == value(a).rows(), "select_rows mask size");
  Node n;
  n.op = Op::SelectRows;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = (value(a).array().colwise() * mask.array()).matrix() +
            (value(b).array().colwise() * (1.0 - mask.array())).matrix();
  n.mask = std::move(mask);
  return push(std::move(n));
}

#undef IFIB_BIN_SHAPE

// ----------------------------------------------------------------- backward

void Tape::backward(Var loss) {
  require(loss.tape == this, "loss from another tape");
  const Node& ln = nodes_.at(loss.id);
  require(ln.value.rows() == 1 && ln.value.cols() == 1, "loss must be scalar");
  if (!std::isfinite(ln.value(0, 0))) {
    check_finite();  // names the culprit if an intermediate blew up
    throw std::runtime_error("tape: non-finite loss");
  }

  // Reachability from the loss; unreachable nodes are skipped entirely.
  std::vector<char> reach(nodes_.size(), 0);
  reach[loss.id] = 1;
  for (int id = loss.id; id >= 0; --id) {
    if (!reach[id]) continue;
    const Node& n = nodes_[id];
    if (n.in0 >= 0) reach[n.in0] = 1;
    if (n.in1 >= 0) reach[n.in1] = 1;
    for (int k : n.ins) reach[k] = 1;
  }

  for (size_t i = 0; i < nodes_.size(); ++i) nodes_[i].grad_live = false;

  auto grad_of = [&](int id) -> Mat& {
    Node& n = nodes_[id];
    if (!n.grad_live) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.grad_live = true;
    }
    return n.grad;
  };

  grad_of(loss.id)(0, 0) = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    if (!reach[id]) continue;
    Node& n = nodes_[id];
    if (!n.grad_live) continue;  // reachable but no adjoint flowed here
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Const:
        break;
      case Op::Param: {
        store_->at(n.param).grad += g;
        break;
      }
      case Op::Add:
        grad_of(n.in0) += g;
        grad_of(n.in1) += g;
        break;
      case Op::Sub:
        grad_of(n.in0) += g;
        grad_of(n.in1) -= g;
        break;
      case Op::Mul:
        grad_of(n.in0) += g.cwiseProduct(nodes_[n.in1].value);
        grad_of(n.in1) += g.cwiseProduct(nodes_[n.in0].value);
        break;
      case Op::Div: {
        const Mat& y = nodes_[n.in1].value;
        grad_of(n.in0) += g.cwiseQuotient(y);
        grad_of(n.in1) -= g.cwiseProduct(n.value).cwiseQuotient(y);
        break;
      }
      case Op::Neg:
        grad_of(n.in0) -= g;
        break;
      case Op::MatMul:
        grad_of(n.in0) += g * nodes_[n.in1].value.transpose();
        grad_of(n.in1) += nodes_[n.in0].value.transpose() * g;
        break;
      case Op::AddRow:
        grad_of(n.in0) += g;
        grad_of(n.in1) += g.colwise().sum();
        break;
      case Op::BroadcastRow:
        grad_of(n.in0) += g.colwise().sum();
        break;
      case Op::ColScale: {
        const Mat& x = nodes_[n.in0].value;
        const Mat& s = nodes_[n.in1].value;
        grad_of(n.in0) += (g.array().colwise() * s.col(0).array()).matrix();
        grad_of(n.in1) += g.cwiseProduct(x).rowwise().sum();
        break;
      }
      case Op::ScaleConst:
        grad_of(n.in0) += g * n.scalar;
        break;
      case Op::AddConst:
        grad_of(n.in0) += g;
        break;
      case Op::Tanh:
        grad_of(n.in0) += g.cwiseProduct(
            n.value.unaryExpr([](double v) { return 1.0 - v * v; }));
        break;
      case Op::Sigmoid:
        grad_of(n.in0) += g.cwiseProduct(
            n.value.unaryExpr([](double v) { return v * (1.0 - v); }));
        break;
      case Op::SigmoidDec:
        grad_of(n.in0) -= g.cwiseProduct(
            n.value.unaryExpr([](double v) { return v * (1.0 - v); }));
        break;
      case Op::Softplus:
        grad_of(n.in0) += g.cwiseProduct(
            nodes_[n.in0].value.unaryExpr([](double v) { return ifib::ad::sigmoid(v); }));
        break;
      case Op::Exp:
        grad_of(n.in0) += g.cwiseProduct(n.value);
        break;
      case Op::Log:
        grad_of(n.in0) += g.cwiseQuotient(nodes_[n.in0].value);
        break;
      case Op::ConcatCols: {
        Eigen::Index c0 = nodes_[n.in0].value.cols();
        grad_of(n.in0) += g.leftCols(c0);
        grad_of(n.in1) += g.rightCols(g.cols() - c0);
        break;
      }
      case Op::ConcatRows: {
        Eigen::Index r = 0;
        for (int k : n.ins) {
          Eigen::Index rk = nodes_[k].value.rows();
          grad_of(k) += g.middleRows(r, rk);
          r += rk;
        }
        break;
      }
      case Op::SliceCols:
        grad_of(n.in0).middleCols(n.col0, n.width) += g;
        break;
      case Op::Transpose:
        grad_of(n.in0) += g.transpose();
        break;
      case Op::BroadcastCol:
        grad_of(n.in0) += g.rowwise().sum();
        break;
      case Op::GatherRows: {
        Mat& gi = grad_of(n.in0);
        for (size_t i = 0; i < n.index.size(); ++i)
          gi.row(n.index[i]) += g.row(static_cast<Eigen::Index>(i));
        break;
      }
      case Op::RowSum:
        grad_of(n.in0) += g.col(0).replicate(1, nodes_[n.in0].value.cols());
        break;
      case Op::RowMean:
        grad_of(n.in0) +=
            (g.col(0) / static_cast<double>(nodes_[n.in0].value.cols()))
                .replicate(1, nodes_[n.in0].value.cols());
        break;
      case Op::Sum:
        grad_of(n.in0).array() += g(0, 0);
        break;
      case Op::MaskedSum:
        grad_of(n.in0) += g(0, 0) * n.mask;
        break;
      case Op::SelectRows:
        grad_of(n.in0) += (g.array().colwise() * n.mask.array()).matrix();
        grad_of(n.in1) += (g.array().colwise() * (1.0 - n.mask.array())).matrix();
        break;
    }
    // Release interior adjoints early; parameter and loss grads persist
    // in the store / caller.
    n.grad.resize(0, 0);
    n.grad_live = false;
  }
}

void Tape::check_finite() const {
  for (const auto& n : nodes_) {
    if (!n.value.allFinite()) {
      std::string who = n.label.empty()
                            ? "op#" + std::to_string(static_cast<int>(n.op))
                            : n.label;
      throw std::runtime_error("tape: non-finite value at node " + who);
    }
  }
}

// ------------------------------------------------------------- dual algebra

DVar make_dual(Var value, Var tangent) { return DVar{value, tangent}; }

DVar dual_const(Tape& t, Var value) {
  return DVar{value, t.constant(Mat::Zero(t.value(value).rows(), t.value(value).cols()))};
}

DVar dadd(DVar a, DVar b) {
  Tape& t = *a.v.tape;
  return {t.add(a.v, b.v), t.add(a.d, b.d)};
}

DVar dsub(DVar a, DVar b) {
  Tape& t = *a.v.tape;
  return {t.sub(a.v, b.v), t.sub(a.d, b.d)};
}

DVar dmul(DVar a, DVar b) {
  Tape& t = *a.v.tape;
  return {t.mul(a.v, b.v), t.add(t.mul(a.d, b.v), t.mul(a.v, b.d))};
}

DVar dmatmul(DVar x, Var w) {
  Tape& t = *x.v.tape;
  return {t.matmul(x.v, w), t.matmul(x.d, w)};
}

DVar dadd_row(DVar x, Var row) {
  Tape& t = *x.v.tape;
  return {t.add_row(x.v, row), x.d};
}

DVar dcol_scale(DVar x, DVar s) {
  Tape& t = *x.v.tape;
  return {t.col_scale(x.v, s.v), t.add(t.col_scale(x.d, s.v), t.col_scale(x.v, s.d))};
}

DVar dconcat_cols(DVar a, DVar b) {
  Tape& t = *a.v.tape;
  return {t.concat_cols(a.v, b.v), t.concat_cols(a.d, b.d)};
}

DVar dtanh(DVar x) {
  Tape& t = *x.v.tape;
  Var y = t.tanh(x.v);
  Var one_minus_y2 = t.add_const(t.neg(t.mul(y, y)), 1.0);
  return {y, t.mul(x.d, one_minus_y2)};
}

DVar dsigmoid(DVar x) {
  Tape& t = *x.v.tape;
  Var y = t.sigmoid(x.v);
  Var dydx = t.mul(y, t.add_const(t.neg(y), 1.0));
  return {y, t.mul(x.d, dydx)};
}

DVar dsigmoid_dec(DVar x) {
  Tape& t = *x.v.tape;
  Var y = t.sigmoid_dec(x.v);
  Var dydx = t.neg(t.mul(y, t.add_const(t.neg(y), 1.0)));
  return {y, t.mul(x.d, dydx)};
}

DVar dsoftplus(DVar x) {
  Tape& t = *x.v.tape;
  return {t.softplus(x.v), t.mul(x.d, t.sigmoid(x.v))};
}

DVar drow_sum(DVar x) {
  Tape& t = *x.v.tape;
  return {t.row_sum(x.v), t.row_sum(x.d)};
}

DVar drow_mean(DVar x) {
  Tape& t = *x.v.tape;
  return {t.row_mean(x.v), t.row_mean(x.d)};
}

DVar dscale(DVar x, double c) {
  Tape& t = *x.v.tape;
  return {t.scale(x.v, c), t.scale(x.d, c)};
}

}  // namespace ifib::ad
