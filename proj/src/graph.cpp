#include "hoigraph/graph.hpp"

#include "hoigraph/errors.hpp"

namespace hoigraph {

namespace {

Var dense(Tape& tape, const Model& model, const std::string& name, Var x, Activation act) {
  return ad::linear(x, tape.param(model.params, name + ".weight"), tape.param(model.params, name + ".bias"), act);
}

Var zeros(Tape& tape, std::size_t n) { return tape.constant(Tensor({n})); }

Var uniform_weights(Tape& tape, std::size_t n) { return tape.constant(Tensor({n}, 1.0 / static_cast<double>(n))); }

std::vector<Var> project(Tape& tape, const Model& model, const std::vector<Instance>& list, const char* kind) {
  std::vector<Var> rows;
  if (list.empty()) return rows;
  const std::size_t f = model.config.feature_dim;
  std::vector<double> data;
  data.reserve(list.size() * f);
  for (const auto& inst : list) data.insert(data.end(), inst.feature.begin(), inst.feature.end());
  Var x = tape.constant(Tensor({list.size(), f}, std::move(data)));
  Var h0 = dense(tape, model, std::string("proj.") + kind, x, Activation::relu);
  for (std::size_t i = 0; i < list.size(); ++i) rows.push_back(ad::row(h0, i));
  return rows;
}

// h_p + h_o + s for every pair, stacked row-major as [N*M, D].
Var pair_sum_matrix(const SceneGraph& g) {
  std::vector<Var> rows;
  rows.reserve(g.edges.size());
  for (std::size_t i = 0; i < g.num_subjects; ++i) {
    for (std::size_t j = 0; j < g.num_objects; ++j) {
      const Var terms[] = {g.subject(i).h, g.object(j).h, g.edge(i, j).s};
      rows.push_back(ad::sum(terms));
    }
  }
  return ad::stack_rows(rows);
}

// Homogeneous neighbourhood of node v, self excluded, ascending ids.
std::vector<std::size_t> intra_neighbors(const SceneGraph& g, const ModelConfig& config, std::size_t v) {
  std::size_t lo = 0, hi = g.num_nodes();
  if (config.homogeneous == HomogeneousMode::off) {
    lo = g.is_subject(v) ? 0 : g.num_subjects;
    hi = g.is_subject(v) ? g.num_subjects : g.num_nodes();
  }
  std::vector<std::size_t> out;
  for (std::size_t u = lo; u < hi; ++u) {
    if (u != v) out.push_back(u);
  }
  return out;
}

// Heterogeneous neighbourhood: the other kind, or every other node in the
// homogeneous inter-message graph.
std::vector<std::size_t> inter_neighbors(const SceneGraph& g, const ModelConfig& config, std::size_t v) {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < g.num_nodes(); ++u) {
    if (u == v) continue;
    if (config.homogeneous == HomogeneousMode::off && g.is_subject(u) == g.is_subject(v)) continue;
    out.push_back(u);
  }
  return out;
}

// Spatial feature and interactiveness between v and u, oriented from v.
Var edge_spatial(const SceneGraph& g, std::size_t v, std::size_t u) {
  if (g.is_subject(v) != g.is_subject(u)) {
    const std::size_t i = g.is_subject(v) ? v : u;
    const std::size_t j = (g.is_subject(v) ? u : v) - g.num_subjects;
    return g.edge(i, j).s;
  }
  return g.same_kind_spatial.at(v * g.num_nodes() + u);
}

}  // namespace

SceneGraph init_graph(Tape& tape, const SceneInput& scene, const Model& model) {
  const ModelConfig& cfg = model.config;
  try {
    validate_scene(scene, cfg.feature_dim);
  } catch (const ConfigError& e) {
    throw ShapeError(std::string("init_graph: ") + e.what());
  }

  SceneGraph g;
  g.tape = &tape;
  g.num_subjects = scene.subjects.size();
  g.num_objects = scene.objects.size();

  const auto hs = project(tape, model, scene.subjects, "subject");
  const auto ho = project(tape, model, scene.objects, "object");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    g.nodes.push_back({NodeKind::subject, hs[i], hs[i], Var{}, scene.subjects[i].confidence, scene.subjects[i].box});
  }
  for (std::size_t j = 0; j < ho.size(); ++j) {
    g.nodes.push_back({NodeKind::object, ho[j], ho[j], Var{}, scene.objects[j].confidence, scene.objects[j].box});
  }

  std::vector<SpatialMap> maps;
  for (const auto& p : scene.subjects) {
    for (const auto& o : scene.objects) maps.push_back(build_spatial_map(p.box, o.box));
  }
  const std::size_t num_pairs = maps.size();
  const bool same_kind = cfg.homogeneous == HomogeneousMode::inter;
  std::vector<std::pair<std::size_t, std::size_t>> extra;
  if (same_kind) {
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      for (std::size_t u = 0; u < g.num_nodes(); ++u) {
        if (u == v || g.is_subject(u) != g.is_subject(v)) continue;
        extra.emplace_back(v, u);
        maps.push_back(build_spatial_map(g.nodes[v].box, g.nodes[u].box));
      }
    }
  }

  g.edges.resize(num_pairs);
  if (same_kind) g.same_kind_spatial.resize(g.num_nodes() * g.num_nodes());
  if (maps.empty()) return g;
  Var encoded = encode_spatial(tape, model.params, tape.constant(stack_maps(maps)));
  for (std::size_t p = 0; p < num_pairs; ++p) g.edges[p].s = ad::row(encoded, p);
  for (std::size_t k = 0; k < extra.size(); ++k) {
    const auto [v, u] = extra[k];
    g.same_kind_spatial[v * g.num_nodes() + u] = ad::row(encoded, num_pairs + k);
  }
  return g;
}

void compute_context_vectors(SceneGraph& g, const Model& model) {
  Tape& tape = *g.tape;
  const std::size_t d = model.config.hidden_dim;
  if (g.edges.empty()) {
    for (auto& node : g.nodes) node.r = zeros(tape, d);
    return;
  }
  const Var z = pair_sum_matrix(g);
  const std::string subj = "context." + kind_prefix(model.config, true);
  const std::string obj = "context." + kind_prefix(model.config, false);
  const Var rs = dense(tape, model, subj, z, Activation::relu);
  const Var ro = subj == obj ? rs : dense(tape, model, obj, z, Activation::relu);
  const std::size_t m = g.num_objects;

  for (std::size_t i = 0; i < g.num_subjects; ++i) {
    std::vector<Var> cands;
    for (std::size_t j = 0; j < m; ++j) cands.push_back(ad::row(rs, i * m + j));
    g.subject(i).r = ad::reduce(ReduceOp::max, cands);
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<Var> cands;
    for (std::size_t i = 0; i < g.num_subjects; ++i) cands.push_back(ad::row(ro, i * m + j));
    g.object(j).r = ad::reduce(ReduceOp::max, cands);
  }
}

AttentionTable intra_attention(const SceneGraph& g, const ModelConfig& config) {
  Tape& tape = *g.tape;
  AttentionTable table(g.num_nodes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    AttentionRow& row = table[v];
    row.neighbors = intra_neighbors(g, config, v);
    if (row.neighbors.empty()) continue;
    if (!config.use_intra_attention) {
      row.weights = uniform_weights(tape, row.neighbors.size());
      continue;
    }
    std::vector<Var> eps;
    for (std::size_t u : row.neighbors) eps.push_back(ad::cosine_similarity(g.nodes[v].r, g.nodes[u].r));
    row.weights = ad::softmax(ad::stack(eps));
  }
  return table;
}

MessageTable intra_message(const SceneGraph& g, const AttentionTable& alpha, const Model& model) {
  Tape& tape = *g.tape;
  const std::size_t d = model.config.hidden_dim;
  if (alpha.size() != g.num_nodes()) throw ShapeError("intra_message: attention table size mismatch");

  // f_intra(h_u) depends only on u.
  std::vector<Var> transformed(g.num_nodes());
  auto message_of = [&](std::size_t u) {
    if (!transformed[u].valid()) {
      const std::string name = "intra." + kind_prefix(model.config, g.is_subject(u));
      transformed[u] = dense(tape, model, name, g.nodes[u].h, Activation::relu);
    }
    return transformed[u];
  };

  MessageTable out(g.num_nodes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const AttentionRow& row = alpha[v];
    if (row.neighbors.empty()) {
      out[v] = zeros(tape, d);
      continue;
    }
    std::vector<Var> terms;
    for (std::size_t k = 0; k < row.neighbors.size(); ++k) {
      terms.push_back(ad::scale_by(ad::pick(row.weights, k), message_of(row.neighbors[k])));
    }
    Var m = ad::sum(terms);
    if (model.config.intra_mean_divide) m = ad::scale(m, 1.0 / static_cast<double>(terms.size()));
    out[v] = m;
  }
  return out;
}

void interactiveness_weights(SceneGraph& g, const Model& model) {
  Tape& tape = *g.tape;
  if (!g.edges.empty()) {
    const Var w = dense(tape, model, "interactive", pair_sum_matrix(g), Activation::sigmoid);
    for (std::size_t p = 0; p < g.edges.size(); ++p) g.edges[p].w = ad::pick(w, p);
  }
}

InterMessages inter_message(const SceneGraph& g, const Model& model) {
  Tape& tape = *g.tape;
  const ModelConfig& cfg = model.config;
  const std::size_t d = cfg.hidden_dim;
  const std::size_t n = g.num_nodes();
  const bool weighted = cfg.use_interactiveness_weight;

  // Same-kind interactiveness for the homogeneous graph, oriented v -> u.
  std::vector<Var> same_kind_w;
  if (weighted && cfg.homogeneous == HomogeneousMode::inter) {
    same_kind_w.resize(n * n);
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t u = 0; u < n; ++u) {
        if (u == v || g.is_subject(u) != g.is_subject(v)) continue;
        const Var terms[] = {g.nodes[v].h, g.nodes[u].h, edge_spatial(g, v, u)};
        same_kind_w[v * n + u] = ad::pick(dense(tape, model, "interactive", ad::sum(terms), Activation::sigmoid), 0);
      }
    }
  }

  InterMessages out;
  out.messages.resize(n);
  out.weights.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    AttentionRow& row = out.weights[v];
    row.neighbors = inter_neighbors(g, cfg, v);
    if (row.neighbors.empty()) {
      out.messages[v] = zeros(tape, d);
      continue;
    }
    if (weighted) {
      std::vector<Var> logits;
      for (std::size_t u : row.neighbors) {
        if (g.is_subject(u) != g.is_subject(v)) {
          const std::size_t i = g.is_subject(v) ? v : u;
          const std::size_t j = (g.is_subject(v) ? u : v) - g.num_subjects;
          logits.push_back(g.edge(i, j).w);
        } else {
          logits.push_back(same_kind_w[v * n + u]);
        }
      }
      row.weights = ad::softmax(ad::stack(logits));
    } else {
      row.weights = uniform_weights(tape, row.neighbors.size());
    }
    const std::string name = "inter." + kind_prefix(cfg, g.is_subject(v));
    std::vector<Var> cands;
    for (std::size_t k = 0; k < row.neighbors.size(); ++k) {
      const std::size_t u = row.neighbors[k];
      const Var msg = dense(tape, model, name, ad::concat(edge_spatial(g, v, u), g.nodes[u].h), Activation::relu);
      cands.push_back(ad::scale_by(ad::pick(row.weights, k), msg));
    }
    out.messages[v] = ad::reduce(ReduceOp::max, cands);
  }
  return out;
}

void update_nodes(SceneGraph& g, const MessageTable& intra, const MessageTable& inter, const Model& model) {
  Tape& tape = *g.tape;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    std::vector<Var> terms{g.nodes[v].h};
    if (!intra.empty()) terms.push_back(intra.at(v));
    if (!inter.empty()) terms.push_back(inter.at(v));
    const Var mixed = dense(tape, model, "update", ad::sum(terms), Activation::relu);
    g.nodes[v].h = ad::add(mixed, g.nodes[v].h0);
  }
}

Var classify_pairs(SceneGraph& g, const Model& model) {
  if (g.edges.empty()) return {};
  const Var y = dense(*g.tape, model, "classifier", pair_sum_matrix(g), Activation::sigmoid);
  for (std::size_t p = 0; p < g.edges.size(); ++p) g.edges[p].y = ad::row(y, p);
  return y;
}

ForwardResult forward(Tape& tape, const SceneInput& scene, const Model& model) {
  const ModelConfig& cfg = model.config;
  ForwardResult result{init_graph(tape, scene, model), {}, {}, {}, {}};
  SceneGraph& g = result.graph;

  if (!cfg.is_baseline()) {
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
      MessageTable intra, inter;
      if (cfg.intra_active()) {
        if (cfg.use_intra_attention) compute_context_vectors(g, model);
        AttentionTable alpha = intra_attention(g, cfg);
        intra = intra_message(g, alpha, model);
        result.intra_trace.push_back(std::move(alpha));
      }
      if (cfg.inter_active()) {
        if (cfg.use_interactiveness_weight) interactiveness_weights(g, model);
        InterMessages msgs = inter_message(g, model);
        inter = std::move(msgs.messages);
        result.inter_trace.push_back(std::move(msgs.weights));
      }
      update_nodes(g, intra, inter, model);
    }
  }

  result.predictions = classify_pairs(g, model);
  if (cfg.interactiveness_active() && !g.edges.empty()) {
    std::vector<Var> ws;
    for (const auto& e : g.edges) ws.push_back(e.w);
    result.interactiveness = ad::stack(ws);
  }
  return result;
}

Tensor prediction_grid(const ForwardResult& result) {
  const SceneGraph& g = result.graph;
  if (!result.predictions.valid()) {
    return Tensor({g.num_subjects, g.num_objects, 0});
  }
  const Tensor& y = result.predictions.value();
  return y.reshaped({g.num_subjects, g.num_objects, y.dim(1)});
}

Tensor predict(const SceneInput& scene, const Model& model) {
  Tape tape;
  const ForwardResult result = forward(tape, scene, model);
  if (!result.predictions.valid()) {
    return Tensor({scene.subjects.size(), scene.objects.size(), model.config.num_classes});
  }
  return prediction_grid(result);
}

Tensor detection_scores(const Tensor& predictions, std::span<const double> subject_confidence,
                        std::span<const double> object_confidence) {
  if (predictions.rank() != 3 || predictions.dim(0) != subject_confidence.size() ||
      predictions.dim(1) != object_confidence.size()) {
    throw ShapeError("detection_scores: predictions " + shape_str(predictions.shape()) + " do not match " +
                     std::to_string(subject_confidence.size()) + " subjects x " +
                     std::to_string(object_confidence.size()) + " objects");
  }
  const std::size_t m = object_confidence.size(), a = predictions.dim(2);
  Tensor out(predictions.shape());
  for (std::size_t i = 0; i < subject_confidence.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < a; ++c) {
        const std::size_t at = (i * m + j) * a + c;
        out[at] = predictions[at] * subject_confidence[i] * object_confidence[j];
      }
    }
  }
  return out;
}

Tensor detection_scores(const Tensor& predictions, const SceneInput& scene) {
  std::vector<double> sh, so;
  for (const auto& p : scene.subjects) sh.push_back(p.confidence);
  for (const auto& o : scene.objects) so.push_back(o.confidence);
  return detection_scores(predictions, sh, so);
}

}  // namespace hoigraph
