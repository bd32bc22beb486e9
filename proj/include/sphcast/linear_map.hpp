#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace sphcast {

/// A fixed linear map applied independently to every row of a (rows, in_size)
/// array. Its adjoint is exposed so that differentiation through the map is
/// again a LinearMap application.
class LinearMap {
 public:
  virtual ~LinearMap() = default;
  virtual std::size_t in_size() const = 0;
  virtual std::size_t out_size() const = 0;
  virtual void apply(std::span<const double> in, std::span<double> out) const = 0;
  virtual std::shared_ptr<const LinearMap> adjoint() const = 0;
};

using LinearMapPtr = std::shared_ptr<const LinearMap>;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  static Csr from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);
  Csr transposed() const;
};

/// Sparse matrix map. `kernel` optionally replaces the CSR product on the
/// forward side (same mathematical map, different rounding); the adjoint always
/// uses the transposed CSR matrix.
class SparseMap final : public LinearMap {
 public:
  using Kernel = std::function<void(std::span<const double>, std::span<double>)>;

  SparseMap(std::shared_ptr<const Csr> forward, std::shared_ptr<const Csr> transpose, Kernel kernel = {});
  static std::shared_ptr<const SparseMap> make(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets,
                                               Kernel kernel = {});

  std::size_t in_size() const override { return fwd_->cols; }
  std::size_t out_size() const override { return fwd_->rows; }
  void apply(std::span<const double> in, std::span<double> out) const override;
  LinearMapPtr adjoint() const override;

  const Csr& matrix() const { return *fwd_; }

 private:
  std::shared_ptr<const Csr> fwd_;
  std::shared_ptr<const Csr> adj_;
  Kernel kernel_;
};

}  // namespace sphcast
