#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "smore/params.hpp"
#include "smore/tensor.hpp"

namespace smore {

// Define-by-run reverse-mode autodiff tape. Every op evaluates eagerly and
// records enough to run the chain rule backwards once. Complex nodes hold
// interleaved (re, im) doubles and carry cotangents for both components, so
// spectral ops differentiate like any other linear map. A tape is built for
// one forward pass, backward() runs at most once, and parameter gradients
// accumulate (+=) into Parameter::grad.
//
// Sparse matrices and f32 feature blocks are referenced by pointer and must
// outlive the tape; both are frozen model inputs in practice.
class Tape {
 public:
  using Id = int;

  // -- leaves ---------------------------------------------------------------
  Id param(Parameter& p);  // repeated calls with the same parameter reuse the node
  Id input(const Tensor& t);
  Id input(Shape shape, std::vector<double> data, bool complex = false);
  Id scalar_input(double x);

  // -- dense real ops -------------------------------------------------------
  Id add(Id a, Id b);        // same shape; complex allowed (component-wise)
  Id sub(Id a, Id b);        // same shape; complex allowed
  Id mul(Id a, Id b);        // element-wise, real only
  Id scale(Id a, double c);  // real or complex
  Id add_row_vec(Id a, Id v);  // a: (m,n), v: (n) or (1,n)
  Id matmul(Id a, Id b);     // (m,k) x (k,n)
  Id matmul_nt(Id a, Id b);  // (m,k) x (n,k)^T -> (m,n)
  // Frozen f32 features times a parameter matrix: F(rows,dim) * W(n,dim)^T.
  Id matmul_nt_f32(const float* feat, std::size_t rows, std::size_t dim, Id w);
  // S(m,n) * x(n,d); st must be the transpose of s (used by backward).
  Id spmm(const SparseMatrix& s, const SparseMatrix& st, Id x);
  Id gather_rows(Id a, std::vector<std::size_t> rows);
  Id matvec(Id a, Id v);     // (m,n) x (n) -> (m); v may be (n) or (1,n)
  Id concat_cols(const std::vector<Id>& cols);  // k vectors (m) -> (m,k)
  Id select_col(Id a, std::size_t col);         // (m,k) -> (m)
  Id row_scale(Id a, Id c);    // (m,n) scaled per row by c (m)
  Id mul_scalar_v(Id a, Id s); // a scaled by the single element of s
  Id row_dot(Id a, Id b);      // (m,n),(m,n) -> (m)
  Id mean_rows(Id a);          // (m,n) -> (1,n)
  Id sum_all(Id a);            // -> (1)
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id softplus(Id a);
  Id softmax_rows(Id a);        // (m,n), softmax along each row
  Id l2_normalize_rows(Id a);   // (m,n), rows scaled to unit norm
  // Sum over rows of -log softmax(s)[r, target_r], computed with a stable
  // log-sum-exp. s: (m,n); one target column per row.
  Id cross_entropy_rows(Id s, std::vector<std::size_t> targets);

  // -- spectral ops ---------------------------------------------------------
  Id rfft(Id a);                        // real (m,d) -> complex (m, d/2+1)
  Id irfft(Id a, std::size_t out_len);  // complex (m, bins) -> real (m, out_len)
  Id cmul(Id a, Id b);                  // complex element-wise product
  Id cmul_rowvec(Id a, Id w);           // complex (m,B) times complex (B) per row

  // -- access ---------------------------------------------------------------
  const Shape& shape(Id id) const;
  bool is_complex(Id id) const;
  bool needs_grad(Id id) const;
  const std::vector<double>& val(Id id) const;
  const std::vector<double>& grad(Id id) const;
  double scalar(Id id) const;  // value of a single-element real node
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)=1 and accumulates cotangents down the tape, adding into
  // Parameter::grad for every parameter leaf. root must be a real node with
  // exactly one element. Callable once per tape.
  void backward(Id root);

 private:
  enum class Op {
    kParam, kInput,
    kAdd, kSub, kMul, kScale, kAddRowVec,
    kMatMul, kMatMulNT, kMatMulNTF32, kSpmm,
    kGatherRows, kMatVec, kConcatCols, kSelectCol,
    kRowScale, kMulScalarV, kRowDot, kMeanRows, kSumAll,
    kSigmoid, kTanh, kSoftplus, kSoftmaxRows, kL2NormRows,
    kCrossEntropyRows,
    kRfft, kIrfft, kCMul, kCMulRowVec,
  };

  struct Node {
    Op op;
    Shape shape;
    bool complex = false;
    bool needs_grad = false;
    std::vector<double> val;
    std::vector<double> grad;  // allocated when needs_grad
    Id a = -1, b = -1;
    std::vector<Id> many;
    Parameter* parameter = nullptr;
    const SparseMatrix* sp = nullptr;
    const SparseMatrix* spt = nullptr;
    const float* fdata = nullptr;
    std::size_t frows = 0, fdim = 0;
    double c = 0.0;
    std::size_t col = 0;
    std::vector<std::size_t> idx;
    std::vector<double> aux;

    std::size_t numel() const { return shape_numel(shape); }
    std::size_t storage() const { return numel() * (complex ? 2 : 1); }
  };

  Node& node(Id id);
  const Node& node(Id id) const;
  Id push(Node n);
  void check_real_2d(Id id, const char* op) const;
  void backward_node(Id id);

  std::vector<Node> nodes_;
  std::map<const Parameter*, Id> param_ids_;
  bool backward_done_ = false;
};

}  // namespace smore
