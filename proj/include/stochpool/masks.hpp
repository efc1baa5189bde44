#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stochpool/error.hpp"
#include "stochpool/rng.hpp"

namespace stochpool {

/// floor(n * p) computed the way `int(n * p)` does in Python: the product is
/// rounded to double first and then truncated.
inline std::size_t keep_count(std::size_t n, double p) {
  return static_cast<std::size_t>(static_cast<double>(n) * p);
}

/// Kept flat indices of one subsampling draw, in the order of the random
/// permutation that produced them.
struct IndexSet {
  std::vector<std::uint32_t> kept;
  std::size_t n = 0;
  double p = 1.0;

  std::size_t size() const { return kept.size(); }
};

/// Uniformly random subset of floor(n*p) distinct indices out of [0, n).
///
/// Each index gets one 64-bit noise draw; the kept indices are the first
/// floor(n*p) entries of the ascending noise order. Only the low
/// bit_width(n-1) bits are sacrificed to pack the index next to the noise, and
/// ties in the remaining noise bits are broken by index.
inline IndexSet subsample_indices(std::size_t n, double p, RngStream& rng) {
  detail::check_keep_prob(p);
  const std::size_t k = keep_count(n, p);
  if (k == 0) {
    throw Error(ErrorKind::kEmptySubsample,
                "floor(n*p) is zero for n=" + std::to_string(n) + ", p=" + std::to_string(p));
  }
  detail::require(n <= (std::size_t{1} << 32), ErrorKind::kInvalidInput,
                  "subsample source longer than 2^32");
  const int index_bits = std::max(1, static_cast<int>(std::bit_width(n - 1)));
  const std::uint64_t index_mask = (std::uint64_t{1} << index_bits) - 1;

  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = (rng.next_u64() & ~index_mask) | static_cast<std::uint64_t>(i);
  }
  if (k < n) {
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end());
  }
  std::sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k));

  IndexSet out;
  out.n = n;
  out.p = p;
  out.kept.resize(k);
  for (std::size_t j = 0; j < k; ++j) out.kept[j] = static_cast<std::uint32_t>(keys[j] & index_mask);
  return out;
}

enum class ChannelMode { kShared, kIndependent };

enum class PatternKind { kUnrestricted, kBlock, kGrid, kUniform, kDuplication };

constexpr std::string_view to_string(ChannelMode mode) {
  return mode == ChannelMode::kShared ? "shared" : "independent";
}

constexpr std::string_view to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::kUnrestricted: return "unrestricted";
    case PatternKind::kBlock: return "block";
    case PatternKind::kGrid: return "grid";
    case PatternKind::kUniform: return "uniform";
    case PatternKind::kDuplication: return "duplication";
  }
  return "unknown";
}

inline PatternKind parse_pattern_kind(std::string_view name) {
  for (auto kind : {PatternKind::kUnrestricted, PatternKind::kBlock, PatternKind::kGrid,
                    PatternKind::kUniform, PatternKind::kDuplication}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(ErrorKind::kInvalidPattern, "unknown pattern kind '" + std::string(name) + "'");
}

inline ChannelMode parse_channel_mode(std::string_view name) {
  if (name == "shared") return ChannelMode::kShared;
  if (name == "independent") return ChannelMode::kIndependent;
  throw Error(ErrorKind::kInvalidConfig, "unknown channel mode '" + std::string(name) + "'");
}

/// Subsampling geometry. `factor` is the s of an s x s block/tile and is
/// ignored for the unrestricted kind.
struct PatternSpec {
  PatternKind kind = PatternKind::kUnrestricted;
  int factor = 1;
  ChannelMode channel_mode = ChannelMode::kShared;
};

/// Spatial keep-mask. In shared mode a single plane stands for every channel;
/// in independent mode there is one plane per channel.
class KeepMask {
 public:
  KeepMask() = default;
  KeepMask(int height, int width, ChannelMode mode = ChannelMode::kShared, int channels = 1)
      : height_(height), width_(width), channels_(channels), mode_(mode) {
    detail::require(height >= 1 && width >= 1 && channels >= 1, ErrorKind::kInvalidShape,
                    "mask extents must be positive");
    cells_.assign(static_cast<std::size_t>(stored_planes()) * plane_size(), 0);
  }

  static KeepMask from_indices(const IndexSet& set, int height, int width) {
    detail::require(set.n == static_cast<std::size_t>(height) * width, ErrorKind::kShapeMismatch,
                    "index set length does not match mask extents");
    KeepMask mask(height, width);
    for (auto idx : set.kept) mask.cells_[idx] = 1;
    return mask;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  ChannelMode mode() const { return mode_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  int stored_planes() const { return mode_ == ChannelMode::kShared ? 1 : channels_; }

  /// Plane seen by channel c; all channels alias plane 0 in shared mode.
  std::span<const std::uint8_t> plane(int c = 0) const {
    const int stored = mode_ == ChannelMode::kShared ? 0 : c;
    return std::span<const std::uint8_t>(cells_).subspan(stored * plane_size(), plane_size());
  }
  std::span<std::uint8_t> plane(int c = 0) {
    const int stored = mode_ == ChannelMode::kShared ? 0 : c;
    return std::span<std::uint8_t>(cells_).subspan(stored * plane_size(), plane_size());
  }

  bool at(int c, int y, int x) const { return plane(c)[static_cast<std::size_t>(y) * width_ + x] != 0; }
  bool at(int y, int x) const { return at(0, y, x); }

  std::size_t count(int c = 0) const {
    const auto p = plane(c);
    return static_cast<std::size_t>(std::count(p.begin(), p.end(), std::uint8_t{1}));
  }
  double kept_fraction(int c = 0) const {
    return static_cast<double>(count(c)) / static_cast<double>(plane_size());
  }

  /// Kept flat indices of plane c in ascending order.
  std::vector<std::uint32_t> kept_indices(int c = 0) const {
    std::vector<std::uint32_t> out;
    const auto p = plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i]) out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
  }

  bool operator==(const KeepMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  ChannelMode mode_ = ChannelMode::kShared;
  std::vector<std::uint8_t> cells_;
};

/// Toroidal translation: the cell at (y, x) moves to ((y+dy) mod h, (x+dx) mod w).
inline KeepMask circular_shift(const KeepMask& mask, long dy, long dx) {
  KeepMask out = mask;
  const long h = mask.height();
  const long w = mask.width();
  const long sy = ((dy % h) + h) % h;
  const long sx = ((dx % w) + w) % w;
  for (int c = 0; c < mask.stored_planes(); ++c) {
    const auto src = mask.plane(c);
    auto dst = out.plane(c);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        dst[static_cast<std::size_t>(((y + sy) % h) * w + (x + sx) % w)] =
            src[static_cast<std::size_t>(y * w + x)];
      }
    }
  }
  return out;
}

/// Throws unless `spec` can realize exactly floor(side^2 * p) kept cells.
inline void validate_pattern(const PatternSpec& spec, int side, double p) {
  detail::check_keep_prob(p);
  detail::require(side >= 1, ErrorKind::kInvalidPattern, "side length must be >= 1");
  const auto cells = static_cast<std::size_t>(side) * side;
  const std::size_t target = keep_count(cells, p);
  if (spec.kind == PatternKind::kUnrestricted) {
    if (target == 0) {
      throw Error(ErrorKind::kEmptySubsample, "floor(l^2 * p) is zero");
    }
    return;
  }
  const int s = spec.factor;
  const std::string name(to_string(spec.kind));
  detail::require(s >= 1 && side % s == 0, ErrorKind::kInvalidPattern,
                  name + ": factor s=" + std::to_string(s) + " must divide l=" + std::to_string(side));
  const auto tiles_per_side = static_cast<std::size_t>(side / s);
  const std::size_t tiles = tiles_per_side * tiles_per_side;
  const std::size_t tile_cells = static_cast<std::size_t>(s) * s;

  switch (spec.kind) {
    case PatternKind::kBlock: {
      const std::size_t kept_blocks = keep_count(tiles, p);
      detail::require(kept_blocks >= 1, ErrorKind::kEmptySubsample,
                      "block: floor((l/s)^2 * p) is zero");
      detail::require(kept_blocks * tile_cells == target, ErrorKind::kInvalidPattern,
                      "block: (l/s)^2 * p must be an integer so that exactly floor(l^2 * p) cells are kept");
      break;
    }
    case PatternKind::kGrid:
      if (p != 0.5) {
        throw Error(ErrorKind::kUnsupportedConfiguration,
                    "grid pattern is only defined for p = 0.5, got p=" + std::to_string(p));
      }
      detail::require(tiles_per_side % 2 == 0, ErrorKind::kInvalidPattern,
                      "grid: l/s must be even for a toroidal checkerboard");
      break;
    case PatternKind::kUniform:
    case PatternKind::kDuplication: {
      detail::require(s >= 2, ErrorKind::kInvalidPattern, name + ": s=1 is inapplicable");
      const std::size_t per_tile = keep_count(tile_cells, p);
      detail::require(per_tile >= 1, ErrorKind::kEmptySubsample, name + ": floor(s^2 * p) is zero");
      detail::require(per_tile * tiles == target, ErrorKind::kInvalidPattern,
                      name + ": (l/s)^2 * floor(s^2 * p) must equal floor(l^2 * p)");
      break;
    }
    case PatternKind::kUnrestricted:
      break;
  }
}

/// A pattern draw before and after its random circular shift.
struct PatternRealization {
  KeepMask unshifted;
  KeepMask mask;
  int dy = 0;
  int dx = 0;
};

inline PatternRealization realize_pattern(const PatternSpec& spec, int side, double p, RngStream& rng) {
  validate_pattern(spec, side, p);
  const int s = spec.factor;
  const auto cells = static_cast<std::size_t>(side) * side;
  KeepMask mask(side, side);
  auto plane = mask.plane();
  auto set_tile_cell = [&](int tile, int offset) {
    const int tiles_per_side = side / s;
    const int ty = tile / tiles_per_side;
    const int tx = tile % tiles_per_side;
    const int oy = offset / s;
    const int ox = offset % s;
    plane[static_cast<std::size_t>(ty * s + oy) * side + (tx * s + ox)] = 1;
  };

  switch (spec.kind) {
    case PatternKind::kUnrestricted: {
      for (auto idx : subsample_indices(cells, p, rng).kept) plane[idx] = 1;
      break;
    }
    case PatternKind::kBlock: {
      const int tiles_per_side = side / s;
      const auto blocks = subsample_indices(static_cast<std::size_t>(tiles_per_side) * tiles_per_side, p, rng);
      for (auto b : blocks.kept) {
        for (int o = 0; o < s * s; ++o) set_tile_cell(static_cast<int>(b), o);
      }
      break;
    }
    case PatternKind::kGrid: {
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          plane[static_cast<std::size_t>(y) * side + x] = ((y / s + x / s) % 2 == 0) ? 1 : 0;
        }
      }
      break;
    }
    case PatternKind::kUniform: {
      const int tiles = (side / s) * (side / s);
      for (int t = 0; t < tiles; ++t) {
        for (auto o : subsample_indices(static_cast<std::size_t>(s) * s, p, rng).kept) {
          set_tile_cell(t, static_cast<int>(o));
        }
      }
      break;
    }
    case PatternKind::kDuplication: {
      const int tiles = (side / s) * (side / s);
      const auto tmpl = subsample_indices(static_cast<std::size_t>(s) * s, p, rng);
      for (int t = 0; t < tiles; ++t) {
        for (auto o : tmpl.kept) set_tile_cell(t, static_cast<int>(o));
      }
      break;
    }
  }

  PatternRealization out;
  out.dy = static_cast<int>(rng.below(static_cast<std::uint64_t>(side)));
  out.dx = static_cast<int>(rng.below(static_cast<std::uint64_t>(side)));
  out.mask = circular_shift(mask, out.dy, out.dx);
  out.unshifted = std::move(mask);
  return out;
}

/// One shifted pattern draw (a single plane, shared mode).
inline KeepMask make_pattern_mask(const PatternSpec& spec, int side, double p, RngStream& rng) {
  return realize_pattern(spec, side, p, rng).mask;
}

/// Per-channel masks for `n_channels` channels. Shared mode draws one plane
/// that every channel sees; independent mode draws one plane per channel from
/// its own substream, so all planes have the same cardinality.
inline KeepMask broadcast_mask(const PatternSpec& spec, int side, double p, int n_channels,
                               RngStream& rng) {
  detail::require(n_channels >= 1, ErrorKind::kInvalidShape, "n_channels must be >= 1");
  if (spec.channel_mode == ChannelMode::kShared) {
    const KeepMask one = make_pattern_mask(spec, side, p, rng);
    KeepMask out(side, side, ChannelMode::kShared, n_channels);
    std::copy(one.plane().begin(), one.plane().end(), out.plane().begin());
    return out;
  }
  RngStream base = rng.split();
  KeepMask out(side, side, ChannelMode::kIndependent, n_channels);
  for (int c = 0; c < n_channels; ++c) {
    RngStream channel_rng = base.substream(static_cast<std::uint64_t>(c));
    const KeepMask one = make_pattern_mask(spec, side, p, channel_rng);
    std::copy(one.plane().begin(), one.plane().end(), out.plane(c).begin());
  }
  return out;
}

/// Plain PGM (P2): header "P2\n<w> <h>\n255\n", then one text row per mask row
/// with single spaces between values; 0 = dropped, 255 = kept.
inline std::string to_pgm(const KeepMask& mask, int c = 0) {
  std::ostringstream os;
  os << "P2\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  const auto plane = mask.plane(c);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (x) os << ' ';
      os << (plane[static_cast<std::size_t>(y) * mask.width() + x] ? 255 : 0);
    }
    os << '\n';
  }
  return os.str();
}

inline void write_pgm(const std::string& path, const KeepMask& mask, int c = 0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out << to_pgm(mask, c);
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

}  // namespace stochpool
