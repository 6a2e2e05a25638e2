#include "hoigraph/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hoigraph/errors.hpp"
#include "hoigraph/init.hpp"

namespace hoigraph {

bool BoundingBox::valid() const {
  const bool finite = std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2);
  return finite && x1 >= 0.0 && y1 >= 0.0 && x1 < x2 && y1 < y2;
}

void validate_box(const BoundingBox& box, const std::string& what) {
  if (!box.valid()) {
    throw DomainError(what + ": invalid box [" + std::to_string(box.x1) + ", " + std::to_string(box.y1) + ", " +
                      std::to_string(box.x2) + ", " + std::to_string(box.y2) + "]");
  }
}

namespace {

struct CellRange {
  std::size_t begin;
  std::size_t end;
};

// Cells c with c + 0.5 in [lo, hi), where lo/hi are in cell units.
CellRange covered_cells(double lo, double hi) {
  const double side = static_cast<double>(kMapSide);
  const double first = std::clamp(std::ceil(lo - 0.5), 0.0, side);
  const double last = std::clamp(std::ceil(hi - 0.5), 0.0, side);
  if (last > first) return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
  const double mid = std::clamp(std::floor((lo + hi) / 2.0), 0.0, side - 1.0);
  return {static_cast<std::size_t>(mid), static_cast<std::size_t>(mid) + 1};
}

void paint(Tensor& cells, std::size_t channel, const BoundingBox& box, double fx, double fy, double unit) {
  const CellRange cols = covered_cells((box.x1 - fx) / unit, (box.x2 - fx) / unit);
  const CellRange rows = covered_cells((box.y1 - fy) / unit, (box.y2 - fy) / unit);
  for (std::size_t r = rows.begin; r < rows.end; ++r) {
    for (std::size_t c = cols.begin; c < cols.end; ++c) cells[(channel * kMapSide + r) * kMapSide + c] = 1.0;
  }
}

}  // namespace

SpatialMap build_spatial_map(const BoundingBox& human, const BoundingBox& object) {
  validate_box(human, "human");
  validate_box(object, "object");
  const double ux1 = std::min(human.x1, object.x1), uy1 = std::min(human.y1, object.y1);
  const double ux2 = std::max(human.x2, object.x2), uy2 = std::max(human.y2, object.y2);
  const double side = std::max(ux2 - ux1, uy2 - uy1);
  if (!(side > 0.0)) throw DomainError("build_spatial_map: degenerate reference frame");
  // Centre the shorter axis inside the square frame.
  const double fx = ux1 - (side - (ux2 - ux1)) / 2.0;
  const double fy = uy1 - (side - (uy2 - uy1)) / 2.0;
  const double unit = side / static_cast<double>(kMapSide);

  SpatialMap map;
  paint(map.cells, 0, human, fx, fy, unit);
  paint(map.cells, 1, object, fx, fy, unit);
  return map;
}

void add_spatial_params(ParamStore& store, const SpatialEncoderConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto [c1, c2, c3] = config.channels;
  store.add("spatial.conv1.weight", uniform_init({c1, 2, 5, 5}, 2 * 25, rng));
  store.add("spatial.conv1.bias", uniform_init({c1}, 2 * 25, rng));
  store.add("spatial.conv2.weight", uniform_init({c2, c1, 5, 5}, c1 * 25, rng));
  store.add("spatial.conv2.bias", uniform_init({c2}, c1 * 25, rng));
  store.add("spatial.conv3.weight", uniform_init({c3, c2, 3, 3}, c2 * 9, rng));
  store.add("spatial.conv3.bias", uniform_init({c3}, c2 * 9, rng));
  store.add("spatial.fc.weight", uniform_init({config.out_dim, config.flat_size()}, config.flat_size(), rng));
  store.add("spatial.fc.bias", uniform_init({config.out_dim}, config.flat_size(), rng));
}

Var encode_spatial(Tape& tape, const ParamStore& params, Var maps) {
  const Shape shape = maps.shape();
  if (shape.size() != 4 || shape[1] != 2 || shape[2] != kMapSide || shape[3] != kMapSide) {
    throw ShapeError("encode_spatial: maps must be [B, 2, 64, 64], got " + shape_str(shape));
  }
  auto p = [&](const char* name) { return tape.param(params, name); };
  Var x = ad::conv2d(maps, p("spatial.conv1.weight"), p("spatial.conv1.bias"), 2, 2, Activation::relu);
  x = ad::conv2d(x, p("spatial.conv2.weight"), p("spatial.conv2.bias"), 2, 2, Activation::relu);
  x = ad::conv2d(x, p("spatial.conv3.weight"), p("spatial.conv3.bias"), 1, 1, Activation::relu);
  x = ad::max_pool2d(x, 2, 2);
  const std::size_t batch = shape[0];
  x = ad::reshape(x, {batch, x.value().size() / batch});
  return ad::linear(x, p("spatial.fc.weight"), p("spatial.fc.bias"), Activation::identity);
}

Tensor encode_spatial(const SpatialMap& map, const ParamStore& params) {
  Tape tape;
  Var maps = tape.constant(map.cells.reshaped({1, 2, kMapSide, kMapSide}));
  const Tensor& out = encode_spatial(tape, params, maps).value();
  return out.reshaped({out.size()});
}

Tensor stack_maps(std::span<const SpatialMap> maps) {
  const std::size_t per = 2 * kMapSide * kMapSide;
  std::vector<double> data;
  data.reserve(maps.size() * per);
  for (const auto& m : maps) data.insert(data.end(), m.cells.storage().begin(), m.cells.storage().end());
  return Tensor({maps.size(), 2, kMapSide, kMapSide}, std::move(data));
}

std::string spatial_map_pgm(const SpatialMap& map) {
  std::string out = "P5\n" + std::to_string(2 * kMapSide) + " " + std::to_string(kMapSide) + "\n255\n";
  for (std::size_t r = 0; r < kMapSide; ++r) {
    for (std::size_t ch = 0; ch < 2; ++ch) {
      for (std::size_t c = 0; c < kMapSide; ++c) out.push_back(map.at(ch, r, c) > 0.5 ? '\xff' : '\0');
    }
  }
  return out;
}

}  // namespace hoigraph
