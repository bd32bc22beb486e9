#pragma once

#include <cstddef>
#include <vector>

#include "sphcast/blocks.hpp"

namespace sphcast {

/// Partition of a grid into h x w windows, optionally after a cyclic shift of
/// (h/2, w/2) cells. In the shifted layout, tokens that wrapped across the
/// south/north edge are masked from tokens that did not; longitude wrap is
/// physical and never masked.
class WindowPlan {
 public:
  WindowPlan(const Grid& grid, std::size_t h, std::size_t w, bool shifted);

  const Grid& grid() const { return grid_; }
  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  bool shifted() const { return shift_r_ || shift_c_; }
  std::size_t windows() const { return windows_; }
  std::size_t tokens() const { return h_ * w_; }
  std::size_t bias_size() const { return (2 * h_ - 1) * (2 * w_ - 1); }

  /// Grid index of token t of window n.
  std::size_t source(std::size_t n, std::size_t t) const { return order_[n * tokens() + t]; }
  const std::vector<std::size_t>& order() const { return order_; }
  /// Grid -> window-major token order, along the last dimension.
  const LinearMapPtr& gather() const { return gather_; }
  /// Additive score mask entry for tokens (s, t) of window n.
  double mask(std::size_t n, std::size_t s, std::size_t t) const;
  /// Relative-position bias slot for tokens s, t of any window.
  std::size_t bias_index(std::size_t s, std::size_t t) const { return rel_[s * tokens() + t]; }

 private:
  Grid grid_;
  std::size_t h_, w_, shift_r_ = 0, shift_c_ = 0, windows_ = 0;
  std::vector<std::size_t> order_;
  std::vector<char> wrapped_;
  std::vector<std::size_t> rel_;
  LinearMapPtr gather_;
};

/// Fused per-window multi-head attention on window-ordered q, k, v stacked as
/// rows (3C, P). bias_table is (heads, bias_size). Returns (C, P) in window
/// order. First-order differentiable only.
ad::Var window_attention_core(const ad::Var& qkv, const ad::Var& bias_table, const WindowPlan& plan,
                              std::size_t heads);

struct AttentionWeights {
  ad::Var wqkv, bqkv, wo, bo, bias_table;
};

/// Full block: projections, window attention, inverse partition, output
/// projection. x is (C, P) on plan.grid().
ad::Var window_attention(const ad::Var& x, const AttentionWeights& p, const WindowPlan& plan, std::size_t heads);

}  // namespace sphcast
