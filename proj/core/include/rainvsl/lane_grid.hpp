#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace rainvsl {

/// Dense (segment, lane) table stored row-major by segment.
template <typename T>
class LaneGrid {
 public:
  LaneGrid() = default;
  LaneGrid(std::size_t segments, std::size_t lanes, T fill = T{})
      : segments_(segments), lanes_(lanes), cells_(segments * lanes, fill) {}

  std::size_t segments() const noexcept { return segments_; }
  std::size_t lanes() const noexcept { return lanes_; }
  std::size_t size() const noexcept { return cells_.size(); }

  T& operator()(std::size_t i, std::size_t j) {
    assert(i < segments_ && j < lanes_);
    return cells_[i * lanes_ + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    assert(i < segments_ && j < lanes_);
    return cells_[i * lanes_ + j];
  }

  std::span<T> row(std::size_t i) { return {cells_.data() + i * lanes_, lanes_}; }
  std::span<const T> row(std::size_t i) const { return {cells_.data() + i * lanes_, lanes_}; }

  std::span<T> flat() { return cells_; }
  std::span<const T> flat() const { return cells_; }

  bool same_shape(const LaneGrid& other) const noexcept {
    return segments_ == other.segments_ && lanes_ == other.lanes_;
  }

  friend bool operator==(const LaneGrid&, const LaneGrid&) = default;

 private:
  std::size_t segments_ = 0;
  std::size_t lanes_ = 0;
  std::vector<T> cells_;
};

}  // namespace rainvsl
