#include "sphcast/linear_map.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace sphcast {

Csr Csr::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const Triplet& a, const Triplet& b) { return a.row < b.row; });
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  m.col_idx.reserve(triplets.size());
  m.values.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw std::out_of_range("sparse entry (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                              ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    ++m.row_ptr[t.row + 1];
    m.col_idx.push_back(t.col);
    m.values.push_back(t.value);
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

Csr Csr::transposed() const {
  std::vector<Triplet> t;
  t.reserve(values.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) t.push_back({col_idx[k], r, values[k]});
  }
  return from_triplets(cols, rows, std::move(t));
}

SparseMap::SparseMap(std::shared_ptr<const Csr> forward, std::shared_ptr<const Csr> transpose, Kernel kernel)
    : fwd_(std::move(forward)), adj_(std::move(transpose)), kernel_(std::move(kernel)) {}

std::shared_ptr<const SparseMap> SparseMap::make(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets,
                                                 Kernel kernel) {
  auto fwd = std::make_shared<const Csr>(Csr::from_triplets(rows, cols, std::move(triplets)));
  auto adj = std::make_shared<const Csr>(fwd->transposed());
  return std::make_shared<const SparseMap>(std::move(fwd), std::move(adj), std::move(kernel));
}

void SparseMap::apply(std::span<const double> in, std::span<double> out) const {
  if (kernel_) {
    kernel_(in, out);
    return;
  }
  const Csr& m = *fwd_;
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) acc += m.values[k] * in[m.col_idx[k]];
    out[r] = acc;
  }
}

LinearMapPtr SparseMap::adjoint() const { return std::make_shared<const SparseMap>(adj_, fwd_); }

}  // namespace sphcast
