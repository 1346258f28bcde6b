#pragma once

// Synthetic two-level slides and the grid environment the search agent moves
// on. Level 1 is the coarse grid the agent walks; level 2 splits every coarse
// cell into a 2x2 block of fine cells.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pathsearch/rng.hpp"

namespace pathsearch {

enum class SlideLabel : int { Benign = 0, Tumor = 1 };
enum class Level : int { Low = 1, High = 2 };

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kNumActions = 4;

struct AgentPosition {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const AgentPosition&, const AgentPosition&) = default;
};

struct GridBounds {
  std::size_t width = 0;   // columns
  std::size_t height = 0;  // rows
};

struct GeneratorConfig {
  std::size_t width = 16;
  std::size_t height = 16;
  std::size_t feature_dim = 16;
  double tumor_fraction_min = 0.1;
  double tumor_fraction_max = 0.3;
  // Euclidean distance between the benign and tumor feature means.
  double class_separation = 4.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Row-major grid of fixed-dimension feature vectors.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(std::size_t rows, std::size_t cols, std::size_t dim)
      : rows_(rows), cols_(cols), dim_(dim), values_(rows * cols * dim, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t dim() const { return dim_; }
  std::size_t cells() const { return rows_ * cols_; }

  std::span<const double> at(std::size_t r, std::size_t c) const { return cell(r * cols_ + c); }
  std::span<double> at(std::size_t r, std::size_t c) { return cell(r * cols_ + c); }
  std::span<const double> cell(std::size_t index) const { return {values_.data() + index * dim_, dim_}; }
  std::span<double> cell(std::size_t index) { return {values_.data() + index * dim_, dim_}; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0, dim_ = 0;
  std::vector<double> values_;
};

struct SlidePyramid {
  int id = 0;
  SlideLabel label = SlideLabel::Benign;
  FeatureGrid grid_lo;  // height x width
  FeatureGrid grid_hi;  // 2*height x 2*width
  // Hidden ground truth; never consumed by training.
  std::vector<std::uint8_t> tumor_mask_lo;

  std::size_t width() const { return grid_lo.cols(); }
  std::size_t height() const { return grid_lo.rows(); }
  std::size_t feature_dim() const { return grid_lo.dim(); }
  GridBounds bounds() const { return {width(), height()}; }
  const FeatureGrid& grid(Level level) const { return level == Level::Low ? grid_lo : grid_hi; }

  bool tumor_lo(std::size_t r, std::size_t c) const { return tumor_mask_lo[r * width() + c] != 0; }
  bool tumor_hi(std::size_t r, std::size_t c) const { return tumor_lo(r / 2, c / 2); }
  bool tumor_at(Level level, std::size_t r, std::size_t c) const {
    return level == Level::Low ? tumor_lo(r, c) : tumor_hi(r, c);
  }
  std::size_t tumor_cells() const;

  friend bool operator==(const SlidePyramid&, const SlidePyramid&) = default;
};

/// Fine-grid coordinates of child `sub` (0..3, row-major in the 2x2 block).
inline std::array<std::size_t, 2> child_cell(AgentPosition pos, int sub) {
  return {2 * pos.row + static_cast<std::size_t>(sub / 2), 2 * pos.col + static_cast<std::size_t>(sub % 2)};
}

/// Tumor slides get one 4-connected blob covering a fraction of the coarse
/// grid drawn from the configured range. Deterministic in (cfg, label, seed).
SlidePyramid generate_slide(const GeneratorConfig& cfg, SlideLabel label, std::uint64_t seed, int id = 0);

/// Balanced dataset of `count` slides (even ids tumor, odd ids benign).
std::vector<SlidePyramid> generate_dataset(const GeneratorConfig& cfg, std::size_t count);

/// Patch features at `pos`; level 2 returns child `sub` of the block under pos.
std::span<const double> get_state(const SlidePyramid& slide, AgentPosition pos, Level level, int sub = 0);

/// Moves one cell; a move off the grid leaves the position unchanged.
AgentPosition apply_action(AgentPosition pos, int action, GridBounds bounds);

/// Step budget (width * height) / step^2 in whatever unit the extent is given.
std::size_t episode_budget(std::size_t width, std::size_t height, std::size_t step = 1);

AgentPosition random_position(GridBounds bounds, Rng& rng);

// Text dataset format, floats written as hexfloats so reads are bit-exact:
//
//   pathsearch-slides 1
//   count <N>
//   slide <id> <width> <height> <dim> <label>
//   mask <width*height characters of 0/1, row-major>
//   lo
//   <height*width lines, <dim> hexfloats each>
//   hi
//   <4*height*width lines>
//   end
void write_slides(std::ostream& out, std::span<const SlidePyramid> slides);
std::vector<SlidePyramid> read_slides(std::istream& in);
void save_slides(const std::string& path, std::span<const SlidePyramid> slides);
std::vector<SlidePyramid> load_slides(const std::string& path);

}  // namespace pathsearch
