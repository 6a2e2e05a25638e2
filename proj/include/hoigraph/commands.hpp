#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hoigraph/gradcheck.hpp"

namespace hoigraph {

/// Entry point of the `hoigraph` tool: train | predict | eval | gradcheck | synth.
/// `args` excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct GradCheckSetup {
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 4;
  std::size_t num_subjects = 2;
  std::size_t num_objects = 2;
  std::size_t num_classes = 3;
  std::size_t feature_dim = 6;
  std::size_t iterations = 2;
  /// Narrow encoder so that every parameter entry can be perturbed quickly.
  std::array<std::size_t, 3> spatial_channels{4, 4, 4};
  double eps = 1e-5;
  double tolerance = 1e-4;
};

/// Finite-difference check of the full training loss of a random scene.
GradCheckReport run_gradcheck(const GradCheckSetup& setup);

}  // namespace hoigraph
