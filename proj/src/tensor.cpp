#include "smore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <tuple>

#include "smore/error.hpp"

namespace smore {

namespace {
LogLevel g_level = LogLevel::Info;
std::mutex g_log_mutex;
const char* level_name(LogLevel l) {
  switch (l) {
    case LogLevel::Debug: return "DEBUG";
    case LogLevel::Info: return "INFO";
    case LogLevel::Warn: return "WARN";
    default: return "ERROR";
  }
}
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) < static_cast<int>(g_level)) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::fprintf(stderr, "[%s] %s\n", level_name(level), msg.c_str());
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
  if (v.size() != shape_numel(shape))
    throw ShapeError("tensor value count " + std::to_string(v.size()) +
                     " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
  std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape s, double value) {
  std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::from_external(Shape s, std::vector<double> values) {
  Tensor t(std::move(s), std::move(values));
  if (!t.all_finite()) throw NumericError("non-finite value in external tensor data");
  return t;
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

ComplexTensor::ComplexTensor(Shape s, std::vector<double> interleaved)
    : shape(std::move(s)), v(std::move(interleaved)) {
  if (v.size() != 2 * shape_numel(shape))
    throw ShapeError("complex tensor value count " + std::to_string(v.size()) +
                     " does not match shape " + shape_str(shape));
}

ComplexTensor ComplexTensor::zeros(Shape s) {
  std::size_t n = shape_numel(s);
  return ComplexTensor(std::move(s), std::vector<double>(2 * n, 0.0));
}

std::size_t ComplexTensor::rows() const {
  if (shape.size() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape));
  return shape[0];
}

std::size_t ComplexTensor::cols() const {
  if (shape.size() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape));
  return shape[1];
}

bool ComplexTensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

SparseMatrix SparseMatrix::empty(std::size_t rows, std::size_t cols) {
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.indptr.assign(rows + 1, 0);
  return m;
}

SparseMatrix SparseMatrix::from_triplets(
    std::size_t rows, std::size_t cols,
    std::vector<std::tuple<uint32_t, uint32_t, double>> triplets) {
  for (const auto& [r, c, val] : triplets) {
    (void)val;
    if (r >= rows || c >= cols)
      throw ShapeError("triplet (" + std::to_string(r) + "," + std::to_string(c) +
                       ") out of bounds for " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                            : std::get<1>(a) < std::get<1>(b);
  });
  SparseMatrix m = SparseMatrix::empty(rows, cols);
  m.indices.reserve(triplets.size());
  m.vals.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& [r, c, val] = triplets[i];
    if (i > 0 && std::get<0>(triplets[i - 1]) == r && std::get<1>(triplets[i - 1]) == c)
      throw ShapeError("duplicate sparse coordinate (" + std::to_string(r) + "," +
                       std::to_string(c) + ")");
    m.indices.push_back(c);
    m.vals.push_back(val);
    m.indptr[r + 1]++;
  }
  for (std::size_t r = 0; r < rows; ++r) m.indptr[r + 1] += m.indptr[r];
  return m;
}

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t = SparseMatrix::empty(cols, rows);
  t.indices.resize(nnz());
  t.vals.resize(nnz());
  std::vector<std::size_t> count(cols, 0);
  for (uint32_t c : indices) count[c]++;
  for (std::size_t c = 0; c < cols; ++c) t.indptr[c + 1] = t.indptr[c] + count[c];
  std::vector<std::size_t> fill(t.indptr.begin(), t.indptr.end() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = indptr[r]; k < indptr[r + 1]; ++k) {
      std::size_t pos = fill[indices[k]]++;
      t.indices[pos] = static_cast<uint32_t>(r);
      t.vals[pos] = vals[k];
    }
  }
  return t;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> d(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = indptr[r]; k < indptr[r + 1]; ++k) d[r * cols + indices[k]] = vals[k];
  return d;
}

void SparseMatrix::validate() const {
  if (indptr.size() != rows + 1) throw ShapeError("sparse indptr length mismatch");
  if (indices.size() != vals.size()) throw ShapeError("sparse indices/vals length mismatch");
  if (indptr[0] != 0 || indptr[rows] != nnz()) throw ShapeError("sparse indptr endpoints broken");
  for (std::size_t r = 0; r < rows; ++r) {
    if (indptr[r] > indptr[r + 1]) throw ShapeError("sparse indptr not monotone");
    for (std::size_t k = indptr[r]; k < indptr[r + 1]; ++k) {
      if (indices[k] >= cols) throw ShapeError("sparse column index out of bounds");
      if (k > indptr[r] && indices[k] <= indices[k - 1])
        throw ShapeError("sparse column indices not strictly increasing in row " +
                         std::to_string(r));
    }
  }
}

bool SparseMatrix::operator==(const SparseMatrix& o) const {
  return rows == o.rows && cols == o.cols && indptr == o.indptr && indices == o.indices &&
         vals == o.vals;
}

}  // namespace smore
