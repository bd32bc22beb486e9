#pragma once

#include "sphcast/grid.hpp"
#include "sphcast/linear_map.hpp"
#include "sphcast/tensor.hpp"

namespace sphcast {

// One-level orthonormal 2-D Haar transform. For the 2x2 block
//   a b
//   c d
// LL = (a+b+c+d)/2, LH = (a+b-c-d)/2, HL = (a-b+c-d)/2, HH = (a-b-c+d)/2.

/// (C, fine) -> (4C, coarse); rows 4c..4c+3 hold LL, LH, HL, HH of channel c.
Tensor haar_dwt2(const Grid& grid, const Tensor& field);
/// Inverse of haar_dwt2; `grid` is the fine grid.
Tensor haar_idwt2(const Grid& grid, const Tensor& subbands);

/// The same transform as a row map: fine size -> 4 * coarse size, subbands
/// concatenated in LL, LH, HL, HH order.
LinearMapPtr haar_map(const Grid& grid);

}  // namespace sphcast
