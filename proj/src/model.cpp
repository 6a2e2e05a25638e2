#include "hoigraph/model.hpp"

#include <random>

#include "hoigraph/errors.hpp"
#include "hoigraph/init.hpp"

namespace hoigraph {

std::string to_string(HomogeneousMode mode) {
  switch (mode) {
    case HomogeneousMode::off:
      return "off";
    case HomogeneousMode::intra:
      return "intra";
    case HomogeneousMode::inter:
      return "inter";
  }
  return "off";
}

HomogeneousMode parse_homogeneous_mode(const std::string& text) {
  if (text == "off" || text.empty()) return HomogeneousMode::off;
  if (text == "intra") return HomogeneousMode::intra;
  if (text == "inter") return HomogeneousMode::inter;
  throw ConfigError("homogeneous mode must be off, intra or inter, got '" + text + "'");
}

void ModelConfig::validate() const {
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (iterations == 0) throw ConfigError("iterations (T) must be at least 1");
  for (std::size_t c : spatial_channels) {
    if (c == 0) throw ConfigError("spatial channel widths must be positive");
  }
}

bool ModelConfig::intra_active() const {
  switch (homogeneous) {
    case HomogeneousMode::off:
      return use_intra;
    case HomogeneousMode::intra:
      return true;
    case HomogeneousMode::inter:
      return false;
  }
  return false;
}

bool ModelConfig::inter_active() const {
  switch (homogeneous) {
    case HomogeneousMode::off:
      return use_inter;
    case HomogeneousMode::intra:
      return false;
    case HomogeneousMode::inter:
      return true;
  }
  return false;
}

std::string ModelConfig::variant() const {
  std::string tag;
  if (homogeneous != HomogeneousMode::off) {
    tag = "homogeneous-" + to_string(homogeneous);
  } else if (use_intra && use_inter) {
    tag = "full";
  } else if (use_intra) {
    tag = "intra-only";
  } else if (use_inter) {
    tag = "inter-only";
  } else {
    return "baseline";
  }
  if (intra_active() && !use_intra_attention) tag += "+no-intra-attention";
  if (inter_active() && !use_interactiveness_weight) tag += "+no-w";
  return tag;
}

std::string kind_prefix(const ModelConfig& config, bool subject) {
  if (config.homogeneous != HomogeneousMode::off) return "shared";
  return subject ? "subject" : "object";
}

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  std::mt19937_64 rng(seed);
  const std::size_t f = config.feature_dim, d = config.hidden_dim, a = config.num_classes;
  auto dense = [&](const std::string& name, std::size_t out, std::size_t in) {
    model.params.add(name + ".weight", uniform_init({out, in}, in, rng));
    model.params.add(name + ".bias", uniform_init({out}, in, rng));
  };

  dense("proj.subject", d, f);
  dense("proj.object", d, f);

  std::vector<std::string> kinds = config.homogeneous == HomogeneousMode::off
                                       ? std::vector<std::string>{"subject", "object"}
                                       : std::vector<std::string>{"shared"};
  if (config.intra_active()) {
    for (const auto& k : kinds) {
      if (config.use_intra_attention) dense("context." + k, d, d);
      dense("intra." + k, d, d);
    }
  }
  if (config.inter_active()) {
    if (config.use_interactiveness_weight) dense("interactive", 1, d);
    for (const auto& k : kinds) dense("inter." + k, d, 2 * d);
  }
  if (!config.is_baseline()) dense("update", d, d);
  dense("classifier", a, d);

  add_spatial_params(model.params, config.spatial(), rng());
  return model;
}

}  // namespace hoigraph
