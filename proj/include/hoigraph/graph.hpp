#pragma once

// Heterogeneous graph reasoning over one scene.
//
// Nodes are indexed globally: subjects occupy [0, N), objects [N, N + M).
// Every subject-object pair carries an edge with an encoded spatial feature s.
// One reasoning round runs, in order: context vectors r, intra-class
// attention, intra-class messages, interactiveness weights w, inter-class
// messages and the residual node update h' = mu(h + M_intra + M_inter) + h0.

#include <vector>

#include "hoigraph/autodiff.hpp"
#include "hoigraph/model.hpp"
#include "hoigraph/scene.hpp"

namespace hoigraph {

struct NodeState {
  NodeKind kind = NodeKind::subject;
  Var h;
  Var h0;
  Var r;
  double det_confidence = 1.0;
  BoundingBox box;
};

struct PairEdge {
  Var s;  // encoded spatial feature [D]
  Var w;  // interactiveness in (0, 1), scalar; unset when not computed
  Var y;  // per-class probabilities [A]; set by forward
};

struct SceneGraph {
  Tape* tape = nullptr;
  std::size_t num_subjects = 0;
  std::size_t num_objects = 0;
  std::vector<NodeState> nodes;
  /// Row-major N x M grid.
  std::vector<PairEdge> edges;
  /// Spatial features between same-kind nodes, indexed [v * (N+M) + u];
  /// filled only for the homogeneous inter-message graph.
  std::vector<Var> same_kind_spatial;

  std::size_t num_nodes() const { return nodes.size(); }
  NodeState& subject(std::size_t i) { return nodes[i]; }
  NodeState& object(std::size_t j) { return nodes[num_subjects + j]; }
  const NodeState& subject(std::size_t i) const { return nodes[i]; }
  const NodeState& object(std::size_t j) const { return nodes[num_subjects + j]; }
  PairEdge& edge(std::size_t i, std::size_t j) { return edges[i * num_objects + j]; }
  const PairEdge& edge(std::size_t i, std::size_t j) const { return edges[i * num_objects + j]; }
  bool is_subject(std::size_t node) const { return node < num_subjects; }
};

/// Normalised weights of one node over its neighbours (global node ids).
/// `weights` is unset when the neighbourhood is empty.
struct AttentionRow {
  std::vector<std::size_t> neighbors;
  Var weights;
};

/// One row per node, indexed by global node id.
using AttentionTable = std::vector<AttentionRow>;

/// Per-node message vectors, indexed by global node id.
using MessageTable = std::vector<Var>;

/// Projects raw features to h0 = h, and encodes every pair's spatial map.
SceneGraph init_graph(Tape& tape, const SceneInput& scene, const Model& model);

/// r_v = max over heterogeneous neighbours of f_r(h_p + h_o + s); zero when
/// the node has none.
void compute_context_vectors(SceneGraph& g, const Model& model);

/// Cosine similarity of context vectors, softmax-normalised over each node's
/// homogeneous neighbourhood (self excluded). Uniform weights when intra
/// attention is disabled.
AttentionTable intra_attention(const SceneGraph& g, const ModelConfig& config);

/// M_intra(v) = sum_u alpha_vu f_intra(h_u); zero for empty neighbourhoods.
MessageTable intra_message(const SceneGraph& g, const AttentionTable& alpha, const Model& model);

/// Sets w on every edge: sigmoid(f_w(h_p + h_o + s)).
void interactiveness_weights(SceneGraph& g, const Model& model);

struct InterMessages {
  MessageTable messages;
  /// softmax of w over each node's heterogeneous neighbourhood.
  AttentionTable weights;
};

/// M_inter(v) = element-wise max over neighbours u of
/// softmax_u(w_vu) * f_inter(s_vu concat h_u); zero for empty neighbourhoods.
InterMessages inter_message(const SceneGraph& g, const Model& model);

/// h' = mu(h + M_intra + M_inter) + h0 for every node. Either table may be
/// empty, meaning that message type is absent.
void update_nodes(SceneGraph& g, const MessageTable& intra, const MessageTable& inter, const Model& model);

/// Sets y on every edge with the joint classifier over h_p + h_o + s and
/// returns all predictions as an [N*M, A] matrix (unset when N*M = 0).
Var classify_pairs(SceneGraph& g, const Model& model);

struct ForwardResult {
  SceneGraph graph;
  /// [N*M, A], row i*M + j; unset when the scene has no pairs.
  Var predictions;
  /// [N*M] final-round interactiveness; unset when not computed.
  Var interactiveness;
  std::vector<AttentionTable> intra_trace;
  std::vector<AttentionTable> inter_trace;
};

/// init_graph, `config.iterations` reasoning rounds, then classification.
/// The baseline configuration skips the rounds entirely.
ForwardResult forward(Tape& tape, const SceneInput& scene, const Model& model);

/// Predictions copied out as an [N, M, A] tensor.
Tensor prediction_grid(const ForwardResult& result);

/// Convenience: forward on a private tape, returning [N, M, A].
Tensor predict(const SceneInput& scene, const Model& model);

/// score[i, j, a] = y[i, j, a] * s_h(i) * s_o(j)
Tensor detection_scores(const Tensor& predictions, std::span<const double> subject_confidence,
                        std::span<const double> object_confidence);
Tensor detection_scores(const Tensor& predictions, const SceneInput& scene);

}  // namespace hoigraph
