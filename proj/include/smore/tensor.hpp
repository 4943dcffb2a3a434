#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace smore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. Training state is kept in 64-bit
// throughout; 32-bit storage is reserved for frozen inputs (FeatureMatrix).
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double value);
  // Rejects NaN/Inf; use for values coming from external data.
  static Tensor from_external(Shape s, std::vector<double> values);

  std::size_t numel() const { return v.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool all_finite() const;
};

// Complex tensor stored as interleaved (re, im) doubles; shape counts
// complex elements, so v.size() == 2 * numel(shape).
struct ComplexTensor {
  Shape shape;
  std::vector<double> v;

  ComplexTensor() = default;
  ComplexTensor(Shape s, std::vector<double> interleaved);

  static ComplexTensor zeros(Shape s);

  std::size_t numel() const { return v.size() / 2; }
  std::size_t rows() const;
  std::size_t cols() const;

  double re(std::size_t i) const { return v[2 * i]; }
  double im(std::size_t i) const { return v[2 * i + 1]; }

  bool all_finite() const;
};

// CSR sparse matrix. Column indices are strictly increasing within each row.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> indptr;   // rows + 1
  std::vector<uint32_t> indices;
  std::vector<double> vals;

  static SparseMatrix empty(std::size_t rows, std::size_t cols);
  // Builds from (row, col, value) triplets; duplicate coordinates are an error.
  static SparseMatrix from_triplets(
      std::size_t rows, std::size_t cols,
      std::vector<std::tuple<uint32_t, uint32_t, double>> triplets);

  std::size_t nnz() const { return vals.size(); }
  SparseMatrix transposed() const;
  std::vector<double> to_dense() const;  // rows x cols row-major, for tests/tools
  void validate() const;                 // throws ShapeError on broken invariants
  bool operator==(const SparseMatrix& o) const;
};

}  // namespace smore
