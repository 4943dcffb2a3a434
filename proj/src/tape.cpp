#include "smore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smore/error.hpp"
#include "smore/fft.hpp"
#include "smore/kernels.hpp"

namespace smore {

namespace {

constexpr double kNormFloor = 1e-12;

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

[[noreturn]] void fail(const char* op, const std::string& msg) {
  throw ShapeError(std::string(op) + ": " + msg);
}

bool vec_like(const Shape& s) {
  return s.size() == 1 || (s.size() == 2 && s[0] == 1);
}

}  // namespace

Tape::Node& Tape::node(Id id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    fail("tape", "node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    fail("tape", "node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

Tape::Id Tape::push(Node n) {
  if (n.needs_grad) n.grad.assign(n.storage(), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::check_real_2d(Id id, const char* op) const {
  const Node& n = node(id);
  if (n.complex) fail(op, "expected a real node");
  if (n.shape.size() != 2) fail(op, "expected a 2-d node, got " + shape_str(n.shape));
}

// ---------------------------------------------------------------------------
// leaves

Tape::Id Tape::param(Parameter& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return it->second;
  if (p.value.size() != p.storage()) fail("param", "parameter storage mismatch: " + p.name);
  Node n;
  n.op = Op::kParam;
  n.shape = p.shape;
  n.complex = p.complex;
  n.needs_grad = true;
  n.val = p.value;
  n.parameter = &p;
  const Id id = push(std::move(n));
  param_ids_[&p] = id;
  return id;
}

Tape::Id Tape::input(const Tensor& t) {
  Node n;
  n.op = Op::kInput;
  n.shape = t.shape;
  n.val = t.v;
  return push(std::move(n));
}

Tape::Id Tape::input(Shape shape, std::vector<double> data, bool complex) {
  const std::size_t want = shape_numel(shape) * (complex ? 2 : 1);
  if (data.size() != want) fail("input", "data size does not match shape " + shape_str(shape));
  Node n;
  n.op = Op::kInput;
  n.shape = std::move(shape);
  n.complex = complex;
  n.val = std::move(data);
  return push(std::move(n));
}

Tape::Id Tape::scalar_input(double x) { return input({1}, {x}); }

// ---------------------------------------------------------------------------
// dense real ops

Tape::Id Tape::add(Id a, Id b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape != B.shape || A.complex != B.complex)
    fail("add", shape_str(A.shape) + " vs " + shape_str(B.shape));
  Node n;
  n.op = Op::kAdd;
  n.shape = A.shape;
  n.complex = A.complex;
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = A.val[i] + B.val[i];
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape != B.shape || A.complex != B.complex)
    fail("sub", shape_str(A.shape) + " vs " + shape_str(B.shape));
  Node n;
  n.op = Op::kSub;
  n.shape = A.shape;
  n.complex = A.complex;
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = A.val[i] - B.val[i];
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.complex || B.complex) fail("mul", "real nodes required (use cmul)");
  if (A.shape != B.shape) fail("mul", shape_str(A.shape) + " vs " + shape_str(B.shape));
  Node n;
  n.op = Op::kMul;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = A.val[i] * B.val[i];
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  const Node& A = node(a);
  Node n;
  n.op = Op::kScale;
  n.shape = A.shape;
  n.complex = A.complex;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.c = c;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = c * A.val[i];
  return push(std::move(n));
}

Tape::Id Tape::add_row_vec(Id a, Id v) {
  check_real_2d(a, "add_row_vec");
  const Node& A = node(a);
  const Node& V = node(v);
  if (V.complex || !vec_like(V.shape) || V.numel() != A.shape[1])
    fail("add_row_vec", "vector of length " + std::to_string(A.shape[1]) + " required");
  Node n;
  n.op = Op::kAddRowVec;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad || V.needs_grad;
  n.a = a;
  n.b = v;
  const std::size_t m = A.shape[0], c = A.shape[1];
  n.val.resize(m * c);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) n.val[r * c + j] = A.val[r * c + j] + V.val[j];
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  check_real_2d(a, "matmul");
  check_real_2d(b, "matmul");
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape[1] != B.shape[0])
    fail("matmul", shape_str(A.shape) + " x " + shape_str(B.shape));
  Node n;
  n.op = Op::kMatMul;
  n.shape = {A.shape[0], B.shape[1]};
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  n.val.resize(A.shape[0] * B.shape[1]);
  kernels::matmul(A.val.data(), B.val.data(), n.val.data(), A.shape[0], A.shape[1], B.shape[1]);
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  check_real_2d(a, "matmul_nt");
  check_real_2d(b, "matmul_nt");
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape[1] != B.shape[1])
    fail("matmul_nt", shape_str(A.shape) + " x " + shape_str(B.shape) + "^T");
  Node n;
  n.op = Op::kMatMulNT;
  n.shape = {A.shape[0], B.shape[0]};
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  n.val.resize(A.shape[0] * B.shape[0]);
  kernels::matmul_nt(A.val.data(), B.val.data(), n.val.data(), A.shape[0], A.shape[1],
                     B.shape[0]);
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt_f32(const float* feat, std::size_t rows, std::size_t dim, Id w) {
  check_real_2d(w, "matmul_nt_f32");
  const Node& W = node(w);
  if (W.shape[1] != dim) fail("matmul_nt_f32", "weight columns must equal feature dim");
  Node n;
  n.op = Op::kMatMulNTF32;
  n.shape = {rows, W.shape[0]};
  n.needs_grad = W.needs_grad;
  n.a = w;
  n.fdata = feat;
  n.frows = rows;
  n.fdim = dim;
  n.val.resize(rows * W.shape[0]);
  kernels::matmul_nt_f32(feat, W.val.data(), n.val.data(), rows, dim, W.shape[0]);
  return push(std::move(n));
}

Tape::Id Tape::spmm(const SparseMatrix& s, const SparseMatrix& st, Id x) {
  check_real_2d(x, "spmm");
  const Node& X = node(x);
  if (s.cols != X.shape[0]) fail("spmm", "matrix columns must equal input rows");
  if (st.rows != s.cols || st.cols != s.rows)
    fail("spmm", "st must be the transpose of s");
  Node n;
  n.op = Op::kSpmm;
  n.shape = {s.rows, X.shape[1]};
  n.needs_grad = X.needs_grad;
  n.a = x;
  n.sp = &s;
  n.spt = &st;
  n.val.resize(s.rows * X.shape[1]);
  kernels::spmm(s, X.val.data(), n.val.data(), X.shape[1]);
  return push(std::move(n));
}

Tape::Id Tape::gather_rows(Id a, std::vector<std::size_t> rows) {
  check_real_2d(a, "gather_rows");
  const Node& A = node(a);
  const std::size_t m = A.shape[0], c = A.shape[1];
  for (std::size_t r : rows)
    if (r >= m) fail("gather_rows", "row index out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.shape = {rows.size(), c};
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(rows.size() * c);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(A.val.data() + rows[r] * c, c, n.val.data() + r * c);
  n.idx = std::move(rows);
  return push(std::move(n));
}

Tape::Id Tape::matvec(Id a, Id v) {
  check_real_2d(a, "matvec");
  const Node& A = node(a);
  const Node& V = node(v);
  if (V.complex || !vec_like(V.shape) || V.numel() != A.shape[1])
    fail("matvec", "vector of length " + std::to_string(A.shape[1]) + " required");
  Node n;
  n.op = Op::kMatVec;
  n.shape = {A.shape[0]};
  n.needs_grad = A.needs_grad || V.needs_grad;
  n.a = a;
  n.b = v;
  const std::size_t m = A.shape[0], c = A.shape[1];
  n.val.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A.val[r * c + j] * V.val[j];
    n.val[r] = s;
  }
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& cols) {
  if (cols.empty()) fail("concat_cols", "needs at least one column");
  const std::size_t m = node(cols[0]).numel();
  Node n;
  n.op = Op::kConcatCols;
  n.shape = {m, cols.size()};
  for (Id c : cols) {
    const Node& C = node(c);
    if (C.complex || C.shape.size() != 1 || C.numel() != m)
      fail("concat_cols", "columns must be real vectors of equal length");
    n.needs_grad = n.needs_grad || C.needs_grad;
  }
  n.many = cols;
  n.val.resize(m * cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const Node& C = node(cols[j]);
    for (std::size_t r = 0; r < m; ++r) n.val[r * cols.size() + j] = C.val[r];
  }
  return push(std::move(n));
}

Tape::Id Tape::select_col(Id a, std::size_t col) {
  check_real_2d(a, "select_col");
  const Node& A = node(a);
  if (col >= A.shape[1]) fail("select_col", "column out of range");
  Node n;
  n.op = Op::kSelectCol;
  n.shape = {A.shape[0]};
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.col = col;
  const std::size_t m = A.shape[0], c = A.shape[1];
  n.val.resize(m);
  for (std::size_t r = 0; r < m; ++r) n.val[r] = A.val[r * c + col];
  return push(std::move(n));
}

Tape::Id Tape::row_scale(Id a, Id c) {
  check_real_2d(a, "row_scale");
  const Node& A = node(a);
  const Node& C = node(c);
  if (C.complex || C.shape.size() != 1 || C.numel() != A.shape[0])
    fail("row_scale", "coefficient vector must have one entry per row");
  Node n;
  n.op = Op::kRowScale;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad || C.needs_grad;
  n.a = a;
  n.b = c;
  const std::size_t m = A.shape[0], w = A.shape[1];
  n.val.resize(m * w);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < w; ++j) n.val[r * w + j] = A.val[r * w + j] * C.val[r];
  return push(std::move(n));
}

Tape::Id Tape::mul_scalar_v(Id a, Id s) {
  const Node& A = node(a);
  const Node& S = node(s);
  if (S.complex || S.numel() != 1) fail("mul_scalar_v", "scalar node required");
  Node n;
  n.op = Op::kMulScalarV;
  n.shape = A.shape;
  n.complex = A.complex;
  n.needs_grad = A.needs_grad || S.needs_grad;
  n.a = a;
  n.b = s;
  const double s0 = S.val[0];
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = A.val[i] * s0;
  return push(std::move(n));
}

Tape::Id Tape::row_dot(Id a, Id b) {
  check_real_2d(a, "row_dot");
  check_real_2d(b, "row_dot");
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape != B.shape) fail("row_dot", shape_str(A.shape) + " vs " + shape_str(B.shape));
  Node n;
  n.op = Op::kRowDot;
  n.shape = {A.shape[0]};
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  const std::size_t m = A.shape[0], c = A.shape[1];
  n.val.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A.val[r * c + j] * B.val[r * c + j];
    n.val[r] = s;
  }
  return push(std::move(n));
}

Tape::Id Tape::mean_rows(Id a) {
  check_real_2d(a, "mean_rows");
  const Node& A = node(a);
  const std::size_t m = A.shape[0], c = A.shape[1];
  if (m == 0) fail("mean_rows", "empty matrix");
  Node n;
  n.op = Op::kMeanRows;
  n.shape = {1, c};
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.assign(c, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) n.val[j] += A.val[r * c + j];
  for (std::size_t j = 0; j < c; ++j) n.val[j] /= static_cast<double>(m);
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
  const Node& A = node(a);
  if (A.complex) fail("sum_all", "real node required");
  Node n;
  n.op = Op::kSumAll;
  n.shape = {1};
  n.needs_grad = A.needs_grad;
  n.a = a;
  double s = 0.0;
  for (double x : A.val) s += x;
  n.val = {s};
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id a) {
  const Node& A = node(a);
  if (A.complex) fail("sigmoid", "real node required");
  Node n;
  n.op = Op::kSigmoid;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = stable_sigmoid(A.val[i]);
  return push(std::move(n));
}

Tape::Id Tape::tanh(Id a) {
  const Node& A = node(a);
  if (A.complex) fail("tanh", "real node required");
  Node n;
  n.op = Op::kTanh;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::tanh(A.val[i]);
  return push(std::move(n));
}

Tape::Id Tape::softplus(Id a) {
  const Node& A = node(a);
  if (A.complex) fail("softplus", "real node required");
  Node n;
  n.op = Op::kSoftplus;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(A.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = stable_softplus(A.val[i]);
  return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id a) {
  check_real_2d(a, "softmax_rows");
  const Node& A = node(a);
  const std::size_t m = A.shape[0], c = A.shape[1];
  Node n;
  n.op = Op::kSoftmaxRows;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(m * c);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = A.val.data() + r * c;
    double* y = n.val.data() + r * c;
    double mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return push(std::move(n));
}

Tape::Id Tape::l2_normalize_rows(Id a) {
  check_real_2d(a, "l2_normalize_rows");
  const Node& A = node(a);
  const std::size_t m = A.shape[0], c = A.shape[1];
  Node n;
  n.op = Op::kL2NormRows;
  n.shape = A.shape;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(m * c);
  n.aux.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A.val[r * c + j] * A.val[r * c + j];
    const double norm = std::sqrt(s);
    n.aux[r] = norm;
    const double inv = 1.0 / std::max(norm, kNormFloor);
    for (std::size_t j = 0; j < c; ++j) n.val[r * c + j] = A.val[r * c + j] * inv;
  }
  return push(std::move(n));
}

Tape::Id Tape::cross_entropy_rows(Id s, std::vector<std::size_t> targets) {
  check_real_2d(s, "cross_entropy_rows");
  const Node& S = node(s);
  const std::size_t m = S.shape[0], c = S.shape[1];
  if (targets.size() != m) fail("cross_entropy_rows", "one target per row required");
  for (std::size_t t : targets)
    if (t >= c) fail("cross_entropy_rows", "target column out of range");
  Node n;
  n.op = Op::kCrossEntropyRows;
  n.shape = {1};
  n.needs_grad = S.needs_grad;
  n.a = s;
  n.aux.resize(m);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = S.val.data() + r * c;
    double mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    n.aux[r] = lse;
    total += lse - x[targets[r]];
  }
  n.idx = std::move(targets);
  n.val = {total};
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// spectral ops

Tape::Id Tape::rfft(Id a) {
  check_real_2d(a, "rfft");
  const Node& A = node(a);
  const std::size_t m = A.shape[0], d = A.shape[1];
  const fft::FftPlan& plan = fft::plan_for(d);
  Node n;
  n.op = Op::kRfft;
  n.shape = {m, plan.bins()};
  n.complex = true;
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(2 * m * plan.bins());
  fft::rfft_rows(plan, A.val.data(), n.val.data(), m);
  return push(std::move(n));
}

Tape::Id Tape::irfft(Id a, std::size_t out_len) {
  const Node& A = node(a);
  if (!A.complex || A.shape.size() != 2) fail("irfft", "complex 2-d node required");
  const fft::FftPlan& plan = fft::plan_for(out_len);
  if (plan.bins() != A.shape[1])
    fail("irfft", "bin count does not match output length " + std::to_string(out_len));
  const std::size_t m = A.shape[0];
  Node n;
  n.op = Op::kIrfft;
  n.shape = {m, out_len};
  n.needs_grad = A.needs_grad;
  n.a = a;
  n.val.resize(m * out_len);
  fft::irfft_rows(plan, A.val.data(), n.val.data(), m);
  return push(std::move(n));
}

Tape::Id Tape::cmul(Id a, Id b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (!A.complex || !B.complex) fail("cmul", "complex nodes required");
  if (A.shape != B.shape) fail("cmul", shape_str(A.shape) + " vs " + shape_str(B.shape));
  Node n;
  n.op = Op::kCMul;
  n.shape = A.shape;
  n.complex = true;
  n.needs_grad = A.needs_grad || B.needs_grad;
  n.a = a;
  n.b = b;
  const std::size_t cnt = A.numel();
  n.val.resize(2 * cnt);
  for (std::size_t i = 0; i < cnt; ++i) {
    const double ar = A.val[2 * i], ai = A.val[2 * i + 1];
    const double br = B.val[2 * i], bi = B.val[2 * i + 1];
    n.val[2 * i] = ar * br - ai * bi;
    n.val[2 * i + 1] = ar * bi + ai * br;
  }
  return push(std::move(n));
}

Tape::Id Tape::cmul_rowvec(Id a, Id w) {
  const Node& A = node(a);
  const Node& W = node(w);
  if (!A.complex || A.shape.size() != 2) fail("cmul_rowvec", "complex 2-d left operand required");
  if (!W.complex || !vec_like(W.shape) || W.numel() != A.shape[1])
    fail("cmul_rowvec", "complex vector of length " + std::to_string(A.shape[1]) + " required");
  Node n;
  n.op = Op::kCMulRowVec;
  n.shape = A.shape;
  n.complex = true;
  n.needs_grad = A.needs_grad || W.needs_grad;
  n.a = a;
  n.b = w;
  const std::size_t m = A.shape[0], c = A.shape[1];
  n.val.resize(2 * m * c);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t i = r * c + k;
      const double ar = A.val[2 * i], ai = A.val[2 * i + 1];
      const double wr = W.val[2 * k], wi = W.val[2 * k + 1];
      n.val[2 * i] = ar * wr - ai * wi;
      n.val[2 * i + 1] = ar * wi + ai * wr;
    }
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// access

const Shape& Tape::shape(Id id) const { return node(id).shape; }
bool Tape::is_complex(Id id) const { return node(id).complex; }
bool Tape::needs_grad(Id id) const { return node(id).needs_grad; }
const std::vector<double>& Tape::val(Id id) const { return node(id).val; }

const std::vector<double>& Tape::grad(Id id) const {
  const Node& n = node(id);
  if (!n.needs_grad) fail("grad", "node does not require gradients");
  return n.grad;
}

double Tape::scalar(Id id) const {
  const Node& n = node(id);
  if (n.complex || n.numel() != 1) fail("scalar", "single-element real node required");
  return n.val[0];
}

// ---------------------------------------------------------------------------
// backward

void Tape::backward(Id root) {
  if (backward_done_) fail("backward", "tape already differentiated");
  backward_done_ = true;
  Node& r = node(root);
  if (r.complex || r.numel() != 1) fail("backward", "root must be a real scalar node");
  if (!r.needs_grad) return;
  r.grad[0] = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) continue;
    if (n.op == Op::kParam) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.parameter->grad[i] += n.grad[i];
      continue;
    }
    backward_node(id);
  }
}

void Tape::backward_node(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const std::vector<double>& g = n.grad;
  switch (n.op) {
    case Op::kParam:
    case Op::kInput:
      break;

    case Op::kAdd: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i];
      if (B.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) B.grad[i] += g[i];
      break;
    }

    case Op::kSub: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i];
      if (B.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) B.grad[i] -= g[i];
      break;
    }

    case Op::kMul: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i] * B.val[i];
      if (B.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) B.grad[i] += g[i] * A.val[i];
      break;
    }

    case Op::kScale: {
      Node& A = node(n.a);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += n.c * g[i];
      break;
    }

    case Op::kAddRowVec: {
      Node& A = node(n.a);
      Node& V = node(n.b);
      const std::size_t m = n.shape[0], c = n.shape[1];
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i];
      if (V.needs_grad)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) V.grad[j] += g[r * c + j];
      break;
    }

    case Op::kMatMul: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      const std::size_t m = A.shape[0], k = A.shape[1], w = B.shape[1];
      if (A.needs_grad) {
        std::vector<double> tmp(m * k);
        kernels::matmul_nt(g.data(), B.val.data(), tmp.data(), m, w, k);
        for (std::size_t i = 0; i < tmp.size(); ++i) A.grad[i] += tmp[i];
      }
      if (B.needs_grad) {
        std::vector<double> tmp(k * w);
        kernels::matmul_tn(A.val.data(), g.data(), tmp.data(), m, k, w);
        for (std::size_t i = 0; i < tmp.size(); ++i) B.grad[i] += tmp[i];
      }
      break;
    }

    case Op::kMatMulNT: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      const std::size_t m = A.shape[0], k = A.shape[1], w = B.shape[0];
      if (A.needs_grad) {
        std::vector<double> tmp(m * k);
        kernels::matmul(g.data(), B.val.data(), tmp.data(), m, w, k);
        for (std::size_t i = 0; i < tmp.size(); ++i) A.grad[i] += tmp[i];
      }
      if (B.needs_grad) {
        std::vector<double> tmp(w * k);
        kernels::matmul_tn(g.data(), A.val.data(), tmp.data(), m, w, k);
        for (std::size_t i = 0; i < tmp.size(); ++i) B.grad[i] += tmp[i];
      }
      break;
    }

    case Op::kMatMulNTF32: {
      Node& W = node(n.a);
      if (W.needs_grad) {
        std::vector<double> tmp(W.val.size());
        kernels::matmul_tn_f32(g.data(), n.fdata, tmp.data(), n.frows, W.shape[0], n.fdim);
        for (std::size_t i = 0; i < tmp.size(); ++i) W.grad[i] += tmp[i];
      }
      break;
    }

    case Op::kSpmm: {
      Node& X = node(n.a);
      if (X.needs_grad) {
        std::vector<double> tmp(X.val.size());
        kernels::spmm(*n.spt, g.data(), tmp.data(), X.shape[1]);
        for (std::size_t i = 0; i < tmp.size(); ++i) X.grad[i] += tmp[i];
      }
      break;
    }

    case Op::kGatherRows: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const std::size_t c = n.shape[1];
        for (std::size_t r = 0; r < n.idx.size(); ++r)
          for (std::size_t j = 0; j < c; ++j) A.grad[n.idx[r] * c + j] += g[r * c + j];
      }
      break;
    }

    case Op::kMatVec: {
      Node& A = node(n.a);
      Node& V = node(n.b);
      const std::size_t m = A.shape[0], c = A.shape[1];
      if (A.needs_grad)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) A.grad[r * c + j] += g[r] * V.val[j];
      if (V.needs_grad)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) V.grad[j] += g[r] * A.val[r * c + j];
      break;
    }

    case Op::kConcatCols: {
      const std::size_t m = n.shape[0], k = n.shape[1];
      for (std::size_t j = 0; j < k; ++j) {
        Node& C = node(n.many[j]);
        if (!C.needs_grad) continue;
        for (std::size_t r = 0; r < m; ++r) C.grad[r] += g[r * k + j];
      }
      break;
    }

    case Op::kSelectCol: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const std::size_t c = A.shape[1];
        for (std::size_t r = 0; r < n.shape[0]; ++r) A.grad[r * c + n.col] += g[r];
      }
      break;
    }

    case Op::kRowScale: {
      Node& A = node(n.a);
      Node& C = node(n.b);
      const std::size_t m = n.shape[0], w = n.shape[1];
      if (A.needs_grad)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < w; ++j) A.grad[r * w + j] += g[r * w + j] * C.val[r];
      if (C.needs_grad)
        for (std::size_t r = 0; r < m; ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < w; ++j) s += g[r * w + j] * A.val[r * w + j];
          C.grad[r] += s;
        }
      break;
    }

    case Op::kMulScalarV: {
      Node& A = node(n.a);
      Node& S = node(n.b);
      const double s0 = S.val[0];
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i] * s0;
      if (S.needs_grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * A.val[i];
        S.grad[0] += s;
      }
      break;
    }

    case Op::kRowDot: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      const std::size_t m = A.shape[0], c = A.shape[1];
      if (A.needs_grad)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) A.grad[r * c + j] += g[r] * B.val[r * c + j];
      if (B.needs_grad)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) B.grad[r * c + j] += g[r] * A.val[r * c + j];
      break;
    }

    case Op::kMeanRows: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const std::size_t m = A.shape[0], c = A.shape[1];
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) A.grad[r * c + j] += g[j] * inv;
      }
      break;
    }

    case Op::kSumAll: {
      Node& A = node(n.a);
      if (A.needs_grad)
        for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += g[0];
      break;
    }

    case Op::kSigmoid: {
      Node& A = node(n.a);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          A.grad[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
      break;
    }

    case Op::kTanh: {
      Node& A = node(n.a);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          A.grad[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
      break;
    }

    case Op::kSoftplus: {
      Node& A = node(n.a);
      if (A.needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i] * stable_sigmoid(A.val[i]);
      break;
    }

    case Op::kSoftmaxRows: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const std::size_t m = n.shape[0], c = n.shape[1];
        for (std::size_t r = 0; r < m; ++r) {
          const double* p = n.val.data() + r * c;
          const double* gr = g.data() + r * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += gr[j] * p[j];
          for (std::size_t j = 0; j < c; ++j) A.grad[r * c + j] += p[j] * (gr[j] - dot);
        }
      }
      break;
    }

    case Op::kL2NormRows: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const std::size_t m = n.shape[0], c = n.shape[1];
        for (std::size_t r = 0; r < m; ++r) {
          const double norm = n.aux[r];
          const double inv = 1.0 / std::max(norm, kNormFloor);
          const double* y = n.val.data() + r * c;
          const double* gr = g.data() + r * c;
          if (norm < kNormFloor) {
            for (std::size_t j = 0; j < c; ++j) A.grad[r * c + j] += gr[j] * inv;
            continue;
          }
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += gr[j] * y[j];
          for (std::size_t j = 0; j < c; ++j)
            A.grad[r * c + j] += (gr[j] - dot * y[j]) * inv;
        }
      }
      break;
    }

    case Op::kCrossEntropyRows: {
      Node& S = node(n.a);
      if (S.needs_grad) {
        const std::size_t m = S.shape[0], c = S.shape[1];
        const double g0 = g[0];
        for (std::size_t r = 0; r < m; ++r) {
          const double lse = n.aux[r];
          for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(S.val[r * c + j] - lse);
            S.grad[r * c + j] += g0 * (p - (j == n.idx[r] ? 1.0 : 0.0));
          }
        }
      }
      break;
    }

    case Op::kRfft: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const fft::FftPlan& plan = fft::plan_for(A.shape[1]);
        std::vector<double> tmp(A.val.size());
        fft::rfft_adjoint_rows(plan, g.data(), tmp.data(), A.shape[0]);
        for (std::size_t i = 0; i < tmp.size(); ++i) A.grad[i] += tmp[i];
      }
      break;
    }

    case Op::kIrfft: {
      Node& A = node(n.a);
      if (A.needs_grad) {
        const fft::FftPlan& plan = fft::plan_for(n.shape[1]);
        std::vector<double> tmp(A.val.size());
        fft::irfft_adjoint_rows(plan, g.data(), tmp.data(), n.shape[0]);
        for (std::size_t i = 0; i < tmp.size(); ++i) A.grad[i] += tmp[i];
      }
      break;
    }

    case Op::kCMul: {
      Node& A = node(n.a);
      Node& B = node(n.b);
      const std::size_t cnt = n.numel();
      for (std::size_t i = 0; i < cnt; ++i) {
        const double gr = g[2 * i], gi = g[2 * i + 1];
        if (A.needs_grad) {
          const double br = B.val[2 * i], bi = B.val[2 * i + 1];
          A.grad[2 * i] += br * gr + bi * gi;
          A.grad[2 * i + 1] += br * gi - bi * gr;
        }
        if (B.needs_grad) {
          const double ar = A.val[2 * i], ai = A.val[2 * i + 1];
          B.grad[2 * i] += ar * gr + ai * gi;
          B.grad[2 * i + 1] += ar * gi - ai * gr;
        }
      }
      break;
    }

    case Op::kCMulRowVec: {
      Node& A = node(n.a);
      Node& W = node(n.b);
      const std::size_t m = n.shape[0], c = n.shape[1];
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t i = r * c + k;
          const double gr = g[2 * i], gi = g[2 * i + 1];
          if (A.needs_grad) {
            const double wr = W.val[2 * k], wi = W.val[2 * k + 1];
            A.grad[2 * i] += wr * gr + wi * gi;
            A.grad[2 * i + 1] += wr * gi - wi * gr;
          }
          if (W.needs_grad) {
            const double ar = A.val[2 * i], ai = A.val[2 * i + 1];
            W.grad[2 * k] += ar * gr + ai * gi;
            W.grad[2 * k + 1] += ar * gi - ai * gr;
          }
        }
      break;
    }
  }
}

}  // namespace smore
