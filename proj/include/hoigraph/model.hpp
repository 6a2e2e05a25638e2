#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hoigraph/autodiff.hpp"
#include "hoigraph/spatial.hpp"

namespace hoigraph {

/// How messages flow between node kinds. `off` is the heterogeneous graph;
/// the other two treat every instance as one node kind with a single shared
/// message layer of the named formula.
enum class HomogeneousMode { off, intra, inter };

std::string to_string(HomogeneousMode mode);
HomogeneousMode parse_homogeneous_mode(const std::string& text);

struct ModelConfig {
  std::size_t feature_dim = 16;  // F
  std::size_t hidden_dim = 64;   // D, shared by node embeddings and spatial features
  std::size_t num_classes = 4;   // A
  std::size_t iterations = 2;    // T
  std::array<std::size_t, 3> spatial_channels{16, 32, 32};

  bool use_intra = true;
  bool use_inter = true;
  bool use_intra_attention = true;
  bool use_interactiveness_weight = true;
  HomogeneousMode homogeneous = HomogeneousMode::off;
  /// Divide the attention-weighted intra message by the neighbourhood size.
  bool intra_mean_divide = false;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  SpatialEncoderConfig spatial() const { return {spatial_channels, hidden_dim}; }

  bool intra_active() const;
  bool inter_active() const;
  /// Whether interactiveness weights are computed and supervised.
  bool interactiveness_active() const { return inter_active() && use_interactiveness_weight; }
  /// No message passing at all: predictions come straight from h0.
  bool is_baseline() const { return !intra_active() && !inter_active(); }

  /// Short tag such as "full", "baseline", "intra-only" or "homogeneous-inter".
  std::string variant() const;
};

struct Model {
  ModelConfig config;
  ParamStore params;
};

/// Fresh model with every weight uniform in +-sqrt(1/fan_in) from `seed`.
Model make_model(const ModelConfig& config, std::uint64_t seed);

/// Prefix of the per-kind graph layers ("subject", "object" or "shared").
std::string kind_prefix(const ModelConfig& config, bool subject);

}  // namespace hoigraph
