#include "sphcast/haar.hpp"

#include <string>

namespace sphcast {

namespace {

void check_even(const Grid& grid) {
  if (grid.n_lat() % 2 || grid.n_lon() % 2) {
    throw ShapeError("haar transform needs even dimensions, got " + std::to_string(grid.n_lat()) + "x" +
                     std::to_string(grid.n_lon()));
  }
}

constexpr double kSign[4][4] = {{1, 1, 1, 1}, {1, 1, -1, -1}, {1, -1, 1, -1}, {1, -1, -1, 1}};

}  // namespace

Tensor haar_dwt2(const Grid& grid, const Tensor& field) {
  check_even(grid);
  grid.check_field(field, "haar_dwt2");
  const std::size_t nl = grid.n_lon();
  const std::size_t hr = grid.n_lat() / 2;
  const std::size_t hc = nl / 2;
  Tensor out(Shape{4 * field.shape[0], hr * hc});
  for (std::size_t ch = 0; ch < field.shape[0]; ++ch) {
    const auto in = field.row(ch);
    for (std::size_t i = 0; i < hr; ++i) {
      for (std::size_t k = 0; k < hc; ++k) {
        const double v[4] = {in[2 * i * nl + 2 * k], in[2 * i * nl + 2 * k + 1], in[(2 * i + 1) * nl + 2 * k],
                             in[(2 * i + 1) * nl + 2 * k + 1]};
        for (std::size_t b = 0; b < 4; ++b) {
          out.row(4 * ch + b)[i * hc + k] =
              0.5 * (kSign[b][0] * v[0] + kSign[b][1] * v[1] + kSign[b][2] * v[2] + kSign[b][3] * v[3]);
        }
      }
    }
  }
  return out;
}

Tensor haar_idwt2(const Grid& grid, const Tensor& subbands) {
  check_even(grid);
  const std::size_t nl = grid.n_lon();
  const std::size_t hr = grid.n_lat() / 2;
  const std::size_t hc = nl / 2;
  if (subbands.rank() != 2 || subbands.shape[0] % 4 || subbands.shape[1] != hr * hc) {
    throw ShapeError("haar_idwt2: subband shape " + shape_str(subbands.shape) + " does not match grid");
  }
  const std::size_t channels = subbands.shape[0] / 4;
  Tensor out(Shape{channels, grid.size()});
  for (std::size_t ch = 0; ch < channels; ++ch) {
    auto o = out.row(ch);
    for (std::size_t i = 0; i < hr; ++i) {
      for (std::size_t k = 0; k < hc; ++k) {
        double s[4];
        for (std::size_t b = 0; b < 4; ++b) s[b] = subbands.row(4 * ch + b)[i * hc + k];
        const std::size_t pos[4] = {2 * i * nl + 2 * k, 2 * i * nl + 2 * k + 1, (2 * i + 1) * nl + 2 * k,
                                    (2 * i + 1) * nl + 2 * k + 1};
        for (std::size_t p = 0; p < 4; ++p) {
          o[pos[p]] = 0.5 * (kSign[0][p] * s[0] + kSign[1][p] * s[1] + kSign[2][p] * s[2] + kSign[3][p] * s[3]);
        }
      }
    }
  }
  return out;
}

LinearMapPtr haar_map(const Grid& grid) {
  check_even(grid);
  const std::size_t nl = grid.n_lon();
  const std::size_t hr = grid.n_lat() / 2;
  const std::size_t hc = nl / 2;
  const std::size_t coarse = hr * hc;
  std::vector<Triplet> t;
  t.reserve(16 * coarse);
  for (std::size_t i = 0; i < hr; ++i) {
    for (std::size_t k = 0; k < hc; ++k) {
      const std::size_t pos[4] = {2 * i * nl + 2 * k, 2 * i * nl + 2 * k + 1, (2 * i + 1) * nl + 2 * k,
                                  (2 * i + 1) * nl + 2 * k + 1};
      for (std::size_t b = 0; b < 4; ++b) {
        for (std::size_t p = 0; p < 4; ++p) t.push_back({b * coarse + i * hc + k, pos[p], 0.5 * kSign[b][p]});
      }
    }
  }
  return SparseMap::make(4 * coarse, grid.size(), std::move(t));
}

}  // namespace sphcast
