#include <doctest.h>

#include <cmath>
#include <random>

#include "hoigraph/errors.hpp"
#include "hoigraph/gradcheck.hpp"
#include "hoigraph/spatial.hpp"
#include "support.hpp"

using namespace hoigraph;

namespace {

// Cell-centre inclusion straight from the definition, one cell at a time.
std::vector<int> oracle_channel(const BoundingBox& box, double fx, double fy, double unit) {
  std::vector<int> cells(kMapSide * kMapSide, 0);
  bool any = false;
  for (std::size_t r = 0; r < kMapSide; ++r) {
    for (std::size_t c = 0; c < kMapSide; ++c) {
      const double cx = fx + (static_cast<double>(c) + 0.5) * unit;
      const double cy = fy + (static_cast<double>(r) + 0.5) * unit;
      if (cx >= box.x1 && cx < box.x2 && cy >= box.y1 && cy < box.y2) {
        cells[r * kMapSide + c] = 1;
        any = true;
      }
    }
  }
  if (!any) {
    // A sliver marks the cells holding its centre line.
    auto span = [&](double lo, double hi, double origin) {
      const double a = (lo - origin) / unit, b = (hi - origin) / unit;
      std::size_t first = 0, last = 0;
      bool found = false;
      for (std::size_t i = 0; i < kMapSide; ++i) {
        const double centre = static_cast<double>(i) + 0.5;
        if (centre >= a && centre < b) {
          if (!found) first = i;
          last = i + 1;
          found = true;
        }
      }
      if (!found) {
        const double mid = std::clamp(std::floor((a + b) / 2.0), 0.0, static_cast<double>(kMapSide - 1));
        first = static_cast<std::size_t>(mid);
        last = first + 1;
      }
      return std::pair{first, last};
    };
    const auto [c0, c1] = span(box.x1, box.x2, fx);
    const auto [r0, r1] = span(box.y1, box.y2, fy);
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) cells[r * kMapSide + c] = 1;
    }
  }
  return cells;
}

std::vector<int> channel_of(const SpatialMap& map, std::size_t ch) {
  std::vector<int> cells(kMapSide * kMapSide);
  for (std::size_t r = 0; r < kMapSide; ++r) {
    for (std::size_t c = 0; c < kMapSide; ++c) cells[r * kMapSide + c] = map.at(ch, r, c) > 0.5 ? 1 : 0;
  }
  return cells;
}

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 500.0), size(2.0, 200.0);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

int count(const std::vector<int>& cells) {
  int n = 0;
  for (int v : cells) n += v;
  return n;
}

}  // namespace

TEST_CASE("human box equal to the frame fills channel 0") {
  const SpatialMap m = build_spatial_map({0, 0, 50, 50}, {10, 10, 20, 30});
  CHECK(count(channel_of(m, 0)) == static_cast<int>(kMapSide * kMapSide));
}

TEST_CASE("identical boxes give identical channels") {
  const SpatialMap m = build_spatial_map({3, 4, 40, 90}, {3, 4, 40, 90});
  CHECK(channel_of(m, 0) == channel_of(m, 1));
}

TEST_CASE("side-by-side boxes split the frame width") {
  const SpatialMap m = build_spatial_map({0, 0, 10, 10}, {10, 0, 20, 10});
  const auto h = channel_of(m, 0), o = channel_of(m, 1);
  // Frame is [0, 20) x [-5, 15); 64 cells of 0.3125 each.
  for (std::size_t r = 0; r < kMapSide; ++r) {
    for (std::size_t c = 0; c < kMapSide; ++c) {
      const bool row_in = r >= 16 && r < 48;
      CHECK(h[r * kMapSide + c] == (row_in && c < 32 ? 1 : 0));
      CHECK(o[r * kMapSide + c] == (row_in && c >= 32 ? 1 : 0));
      CHECK(h[r * kMapSide + c] + o[r * kMapSide + c] <= 1);
    }
  }
}

TEST_CASE("rasterization matches the cell-centre oracle on random pairs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const BoundingBox h = random_box(rng), o = random_box(rng);
    const double ux1 = std::min(h.x1, o.x1), uy1 = std::min(h.y1, o.y1);
    const double ux2 = std::max(h.x2, o.x2), uy2 = std::max(h.y2, o.y2);
    const double side = std::max(ux2 - ux1, uy2 - uy1);
    const double fx = ux1 - (side - (ux2 - ux1)) / 2.0, fy = uy1 - (side - (uy2 - uy1)) / 2.0;
    const SpatialMap m = build_spatial_map(h, o);
    CHECK(channel_of(m, 0) == oracle_channel(h, fx, fy, side / kMapSide));
    CHECK(channel_of(m, 1) == oracle_channel(o, fx, fy, side / kMapSide));
  }
}

TEST_CASE("a box thinner than one cell still marks a cell") {
  const SpatialMap m = build_spatial_map({100, 100, 100.01, 300}, {0, 0, 400, 400});
  const auto h = channel_of(m, 0);
  CHECK(count(h) > 0);
  for (std::size_t r = 0; r < kMapSide; ++r) {
    int in_row = 0;
    for (std::size_t c = 0; c < kMapSide; ++c) in_row += h[r * kMapSide + c];
    CHECK(in_row <= 1);
  }
}

TEST_CASE("invalid and degenerate inputs are rejected") {
  CHECK_THROWS_AS(build_spatial_map({5, 5, 5, 10}, {0, 0, 1, 1}), DomainError);
  CHECK_THROWS_AS(build_spatial_map({0, 0, 1, 1}, {3, 4, 2, 8}), DomainError);
  CHECK_THROWS_AS(build_spatial_map({-1, 0, 1, 1}, {0, 0, 1, 1}), DomainError);
  CHECK_THROWS_AS(build_spatial_map({0, 0, std::nan(""), 1}, {0, 0, 1, 1}), DomainError);
}

TEST_CASE("maps are translation invariant, power-of-two scale invariant and swap channels") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> shift(0.0, 300.0);
  const double scales[] = {0.25, 0.5, 2.0, 8.0};
  for (int trial = 0; trial < 100; ++trial) {
    const BoundingBox h = random_box(rng), o = random_box(rng);
    const SpatialMap m = build_spatial_map(h, o);
    const double dx = std::floor(shift(rng)), dy = std::floor(shift(rng));
    const SpatialMap moved =
        build_spatial_map({h.x1 + dx, h.y1 + dy, h.x2 + dx, h.y2 + dy}, {o.x1 + dx, o.y1 + dy, o.x2 + dx, o.y2 + dy});
    CHECK(moved.cells == m.cells);
    const double a = scales[trial % 4];
    const SpatialMap scaled = build_spatial_map({h.x1 * a, h.y1 * a, h.x2 * a, h.y2 * a},
                                                {o.x1 * a, o.y1 * a, o.x2 * a, o.y2 * a});
    CHECK(scaled.cells == m.cells);
    const SpatialMap swapped = build_spatial_map(o, h);
    CHECK(channel_of(swapped, 0) == channel_of(m, 1));
    CHECK(channel_of(swapped, 1) == channel_of(m, 0));
  }
}

TEST_CASE("pgm dump has both channels side by side") {
  const SpatialMap m = build_spatial_map({0, 0, 10, 10}, {10, 0, 20, 10});
  const std::string pgm = spatial_map_pgm(m);
  const std::string header = "P5\n128 64\n255\n";
  REQUIRE(pgm.size() == header.size() + 128 * 64);
  CHECK(pgm.substr(0, header.size()) == header);
  const std::size_t row = 20;
  const unsigned char human_left = pgm[header.size() + row * 128 + 0];
  const unsigned char object_right = pgm[header.size() + row * 128 + 64 + 63];
  const unsigned char human_right = pgm[header.size() + row * 128 + 63];
  CHECK(human_left == 255);
  CHECK(object_right == 255);
  CHECK(human_right == 0);
}

TEST_CASE("encoder output shape, zero map and determinism") {
  SpatialEncoderConfig cfg{{4, 4, 4}, 5};
  ParamStore params;
  add_spatial_params(params, cfg, 7);
  for (const auto& name : params.names()) {
    if (name.find("bias") != std::string::npos) params.value(name).fill(0.0);
  }
  const Tensor zero = encode_spatial(SpatialMap{}, params);
  CHECK(zero == Tensor({5}));

  const SpatialMap m = build_spatial_map({0, 0, 30, 60}, {20, 10, 80, 40});
  ParamStore fresh;
  add_spatial_params(fresh, cfg, 7);
  const Tensor a = encode_spatial(m, fresh), b = encode_spatial(m, fresh);
  CHECK(a.shape() == Shape{5});
  CHECK(a == b);

  const SpatialMap maps[] = {m, SpatialMap{}, m};
  Tape tape;
  const Tensor batch = encode_spatial(tape, fresh, tape.constant(stack_maps(maps))).value();
  REQUIRE(batch.shape() == Shape{3, 5});
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(batch[k] == a[k]);
    CHECK(batch[10 + k] == a[k]);
  }
}

TEST_CASE("encoder rejects mismatched maps and parameters") {
  ParamStore params;
  add_spatial_params(params, {{4, 4, 4}, 5}, 1);
  Tape tape;
  CHECK_THROWS_AS(encode_spatial(tape, params, tape.constant(Tensor({1, 2, 32, 32}))), ShapeError);
  CHECK_THROWS_AS(encode_spatial(tape, params, tape.constant(Tensor({1, 3, 64, 64}))), ShapeError);
  ParamStore wrong;
  add_spatial_params(wrong, {{4, 4, 4}, 5}, 1);
  wrong.value("spatial.fc.weight") = Tensor({5, 100});
  Tape t2;
  CHECK_THROWS_AS(encode_spatial(t2, wrong, t2.constant(Tensor({1, 2, 64, 64}))), ShapeError);
}

TEST_CASE("encoder gradient matches finite differences on a random input") {
  std::mt19937_64 rng(33);
  ParamStore params;
  add_spatial_params(params, {{2, 3, 2}, 3}, 5);
  const Tensor input = hoigraph::testing::random_tensor({1, 2, kMapSide, kMapSide}, rng);
  const Tensor target = hoigraph::testing::random_tensor({1, 3}, rng);
  const GradCheckReport r = finite_difference_check(
      [&](Tape& t, const ParamStore& p) {
        const Var y = encode_spatial(t, p, t.constant(input));
        const Var d = ad::add(y, ad::scale(t.constant(target), -1.0));
        return ad::total(ad::mul(d, d));
      },
      params);
  CHECK(r.checked > 300);
  CHECK(r.non_finite.empty());
  CHECK(r.max_relative_error < 1e-4);
}
