#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "hoigraph/autodiff.hpp"

namespace hoigraph {

struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  /// x1 < x2, y1 < y2, finite and non-negative.
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Throws DomainError naming `what` when the box is invalid.
void validate_box(const BoundingBox& box, const std::string& what);

inline constexpr std::size_t kMapSide = 64;

/// 2 x 64 x 64 binary raster: channel 0 marks the human, channel 1 the object.
struct SpatialMap {
  Tensor cells{Shape{2, kMapSide, kMapSide}};

  double at(std::size_t channel, std::size_t row, std::size_t col) const {
    return cells[(channel * kMapSide + row) * kMapSide + col];
  }
};

/// Rasterises a pair inside the square-expanded union of the two boxes. A cell
/// is set iff its centre lies in the half-open box [x1, x2) x [y1, y2). A box
/// too thin to contain any cell centre marks the cell holding its centre.
SpatialMap build_spatial_map(const BoundingBox& human, const BoundingBox& object);

/// Channel widths of the three convolutions and the output dimension.
struct SpatialEncoderConfig {
  std::array<std::size_t, 3> channels{16, 32, 32};
  std::size_t out_dim = 64;

  /// Flattened length after the final 2x2 max-pool.
  std::size_t flat_size() const { return channels[2] * 8 * 8; }
};

/// Parameter names: spatial.conv{1,2,3}.{weight,bias}, spatial.fc.{weight,bias}.
void add_spatial_params(ParamStore& store, const SpatialEncoderConfig& config, std::uint64_t seed);

/// conv 5x5/2 -> ReLU -> conv 5x5/2 -> ReLU -> conv 3x3/1 -> ReLU -> maxpool 2x2
/// -> flatten -> linear. `maps` is [B, 2, 64, 64]; returns [B, out_dim].
Var encode_spatial(Tape& tape, const ParamStore& params, Var maps);

/// Single-map convenience form returning the plain feature vector.
Tensor encode_spatial(const SpatialMap& map, const ParamStore& params);

/// Stacks maps into one [B, 2, 64, 64] tensor.
Tensor stack_maps(std::span<const SpatialMap> maps);

/// Binary PGM (P5) of both channels side by side, 128 x 64.
std::string spatial_map_pgm(const SpatialMap& map);

}  // namespace hoigraph
