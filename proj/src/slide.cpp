#include "pathsearch/slide.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pathsearch/errors.hpp"

namespace pathsearch {

void GeneratorConfig::validate() const {
  if (width == 0 || height == 0) throw ParameterError("grid dimensions must be positive");
  if (feature_dim == 0) throw ParameterError("feature dimension must be positive");
  if (!(tumor_fraction_min > 0.0 && tumor_fraction_min <= tumor_fraction_max && tumor_fraction_max < 1.0)) {
    throw ParameterError("tumor fraction range must satisfy 0 < lo <= hi < 1");
  }
  if (!(class_separation >= 0.0)) throw ParameterError("class separation must be >= 0");
  if (!(noise_sigma > 0.0)) throw ParameterError("noise sigma must be > 0");
}

std::size_t SlidePyramid::tumor_cells() const {
  return static_cast<std::size_t>(std::count(tumor_mask_lo.begin(), tumor_mask_lo.end(), 1));
}

namespace {

std::vector<std::uint8_t> grow_blob(std::size_t rows, std::size_t cols, std::size_t target, Rng& rng) {
  std::vector<std::uint8_t> mask(rows * cols, 0);
  std::vector<std::size_t> frontier;
  auto add_neighbours = [&](std::size_t idx) {
    const std::size_t r = idx / cols, c = idx % cols;
    if (r > 0) frontier.push_back(idx - cols);
    if (r + 1 < rows) frontier.push_back(idx + cols);
    if (c > 0) frontier.push_back(idx - 1);
    if (c + 1 < cols) frontier.push_back(idx + 1);
  };
  std::uniform_int_distribution<std::size_t> pick_cell(0, rows * cols - 1);
  const std::size_t start = pick_cell(rng);
  mask[start] = 1;
  add_neighbours(start);
  std::size_t grown = 1;
  while (grown < target) {
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    const std::size_t k = pick(rng);
    const std::size_t idx = frontier[k];
    frontier[k] = frontier.back();
    frontier.pop_back();
    if (mask[idx]) continue;
    mask[idx] = 1;
    ++grown;
    add_neighbours(idx);
  }
  return mask;
}

void fill_features(std::span<double> out, bool tumor, double offset, double sigma, Rng& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out) v = (tumor ? offset : 0.0) + noise(rng);
}

}  // namespace

SlidePyramid generate_slide(const GeneratorConfig& cfg, SlideLabel label, std::uint64_t seed, int id) {
  cfg.validate();
  const std::size_t rows = cfg.height, cols = cfg.width, cells = rows * cols;
  Rng rng(seed);

  SlidePyramid slide;
  slide.id = id;
  slide.label = label;
  slide.tumor_mask_lo.assign(cells, 0);

  if (label == SlideLabel::Tumor) {
    const auto lo = static_cast<std::size_t>(std::ceil(cfg.tumor_fraction_min * static_cast<double>(cells)));
    const auto hi = static_cast<std::size_t>(std::floor(cfg.tumor_fraction_max * static_cast<double>(cells)));
    const std::size_t min_cells = std::max<std::size_t>(lo, 1);
    if (min_cells > hi || hi >= cells) {
      throw GenerationError("tumor fraction range admits no blob size on a " + std::to_string(cols) + "x" +
                            std::to_string(rows) + " grid");
    }
    std::uniform_int_distribution<std::size_t> size_dist(min_cells, hi);
    slide.tumor_mask_lo = grow_blob(rows, cols, size_dist(rng), rng);
  }

  const double offset = cfg.class_separation / std::sqrt(static_cast<double>(cfg.feature_dim));
  slide.grid_lo = FeatureGrid(rows, cols, cfg.feature_dim);
  slide.grid_hi = FeatureGrid(2 * rows, 2 * cols, cfg.feature_dim);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      fill_features(slide.grid_lo.at(r, c), slide.tumor_lo(r, c), offset, cfg.noise_sigma, rng);
  for (std::size_t r = 0; r < 2 * rows; ++r)
    for (std::size_t c = 0; c < 2 * cols; ++c)
      fill_features(slide.grid_hi.at(r, c), slide.tumor_hi(r, c), offset, cfg.noise_sigma, rng);
  return slide;
}

std::vector<SlidePyramid> generate_dataset(const GeneratorConfig& cfg, std::size_t count) {
  std::vector<SlidePyramid> slides;
  slides.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = (i % 2 == 0) ? SlideLabel::Tumor : SlideLabel::Benign;
    slides.push_back(generate_slide(cfg, label, derive_seed(cfg.seed, i), static_cast<int>(i)));
  }
  return slides;
}

std::span<const double> get_state(const SlidePyramid& slide, AgentPosition pos, Level level, int sub) {
  if (pos.row >= slide.height() || pos.col >= slide.width()) {
    throw ContractError("get_state: position out of bounds");
  }
  if (level == Level::Low) return slide.grid_lo.at(pos.row, pos.col);
  if (sub < 0 || sub > 3) throw ContractError("get_state: child index must be in 0..3");
  const auto [r, c] = child_cell(pos, sub);
  return slide.grid_hi.at(r, c);
}

AgentPosition apply_action(AgentPosition pos, int action, GridBounds bounds) {
  switch (static_cast<Action>(action)) {
    case Action::Up:
      if (pos.row > 0) --pos.row;
      break;
    case Action::Down:
      if (pos.row + 1 < bounds.height) ++pos.row;
      break;
    case Action::Left:
      if (pos.col > 0) --pos.col;
      break;
    case Action::Right:
      if (pos.col + 1 < bounds.width) ++pos.col;
      break;
  }
  return pos;
}

std::size_t episode_budget(std::size_t width, std::size_t height, std::size_t step) {
  if (step == 0) throw ParameterError("step must be positive");
  if (width % step != 0 || height % step != 0) throw ParameterError("step must divide the grid extent");
  return (width / step) * (height / step);
}

AgentPosition random_position(GridBounds bounds, Rng& rng) {
  std::uniform_int_distribution<std::size_t> rows(0, bounds.height - 1);
  std::uniform_int_distribution<std::size_t> cols(0, bounds.width - 1);
  const std::size_t r = rows(rng);
  return {r, cols(rng)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_grid(std::ostream& out, const FeatureGrid& grid) {
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    auto cell = grid.cell(i);
    for (std::size_t k = 0; k < cell.size(); ++k) {
      if (k) out << ' ';
      out << cell[k];
    }
    out << '\n';
  }
}

void expect(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw FormatError("expected '" + token + "' in slide file, got '" + got + "'");
  }
}

double read_double(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw FormatError("truncated slide file");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) throw FormatError("bad number '" + tok + "'");
  return v;
}

void read_grid(std::istream& in, FeatureGrid& grid) {
  for (std::size_t i = 0; i < grid.cells(); ++i)
    for (double& v : grid.cell(i)) v = read_double(in);
}

}  // namespace

void write_slides(std::ostream& out, std::span<const SlidePyramid> slides) {
  out << "pathsearch-slides 1\n";
  out << "count " << slides.size() << '\n';
  out << std::hexfloat;
  for (const auto& s : slides) {
    out << "slide " << s.id << ' ' << s.width() << ' ' << s.height() << ' ' << s.feature_dim() << ' '
        << static_cast<int>(s.label) << '\n';
    out << "mask ";
    for (auto m : s.tumor_mask_lo) out << (m ? '1' : '0');
    out << "\nlo\n";
    write_grid(out, s.grid_lo);
    out << "hi\n";
    write_grid(out, s.grid_hi);
    out << "end\n";
  }
  out << std::defaultfloat;
}

std::vector<SlidePyramid> read_slides(std::istream& in) {
  expect(in, "pathsearch-slides");
  int version = 0;
  if (!(in >> version) || version != 1) throw FormatError("unsupported slide file version");
  expect(in, "count");
  std::size_t count = 0;
  if (!(in >> count)) throw FormatError("missing slide count");
  std::vector<SlidePyramid> slides(count);
  for (auto& s : slides) {
    expect(in, "slide");
    std::size_t w = 0, h = 0, d = 0;
    int label = 0;
    if (!(in >> s.id >> w >> h >> d >> label) || w == 0 || h == 0 || d == 0 || (label != 0 && label != 1)) {
      throw FormatError("bad slide header");
    }
    s.label = static_cast<SlideLabel>(label);
    expect(in, "mask");
    std::string mask;
    if (!(in >> mask) || mask.size() != w * h) throw FormatError("bad mask line");
    s.tumor_mask_lo.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] != '0' && mask[i] != '1') throw FormatError("bad mask character");
      s.tumor_mask_lo[i] = mask[i] == '1' ? 1 : 0;
    }
    s.grid_lo = FeatureGrid(h, w, d);
    s.grid_hi = FeatureGrid(2 * h, 2 * w, d);
    expect(in, "lo");
    read_grid(in, s.grid_lo);
    expect(in, "hi");
    read_grid(in, s.grid_hi);
    expect(in, "end");
    if ((s.tumor_cells() > 0) != (s.label == SlideLabel::Tumor)) {
      throw FormatError("slide label disagrees with its tumor mask");
    }
  }
  return slides;
}

void save_slides(const std::string& path, std::span<const SlidePyramid> slides) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_slides(out, slides);
}

std::vector<SlidePyramid> load_slides(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_slides(in);
}

}  // namespace pathsearch
