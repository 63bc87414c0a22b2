#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dagerc/corpus.hpp"

namespace dagerc {

// Edge relation: 1 when source and target share a speaker, 0 otherwise.
struct DagEdge {
  int src = 0;
  int dst = 0;
  int relation = 0;

  bool operator==(const DagEdge&) const = default;
  auto operator<=>(const DagEdge&) const = default;
};

struct DagVariant {
  enum class Kind { kOurs, kSequence, kSingleLocal, kCommon };
  Kind kind = Kind::kOurs;
  int omega = 1;  // kOurs / kSingleLocal
  int kappa = 1;  // kCommon

  static DagVariant ours(int omega) { return {Kind::kOurs, omega, 1}; }
  static DagVariant sequence() { return {Kind::kSequence, 1, 1}; }
  static DagVariant single_local(int omega) { return {Kind::kSingleLocal, omega, 1}; }
  static DagVariant common(int kappa) { return {Kind::kCommon, 1, kappa}; }

  std::string describe() const;
  bool operator==(const DagVariant&) const = default;
};

// Directed acyclic conversation graph. Nodes are utterance indices (0-based);
// every edge satisfies src < dst, so index order is a topological order.
struct ConvDag {
  int n_nodes = 0;
  std::vector<DagEdge> edges;                            // sorted by (dst, src)
  std::vector<std::vector<std::pair<int, int>>> preds;   // per node: (src, relation), src asc
  DagVariant variant;

  bool operator==(const ConvDag&) const = default;
};

// Scans backwards from each utterance, collecting predecessors until omega
// same-speaker turns have been seen (or the conversation start is reached).
// An utterance whose speaker never spoke before connects to all previous ones.
ConvDag build_dag(const Conversation& conversation, int omega);

// sequence: the (i-1, i) chain.
// common(kappa): each utterance connects to its kappa immediate predecessors.
// single_local(omega): the omega-th latest same-speaker predecessor (when it
//   exists) plus the (i-1, i) edge, duplicates merged.
// ours(omega): build_dag.
ConvDag build_variant(const Conversation& conversation, const DagVariant& variant);

struct DagValidation {
  bool direction_ok = true;
  bool remote_ok = true;
  bool local_ok = true;
  bool relation_ok = true;
  // first offending node (or edge target) per failed constraint, -1 if ok
  int direction_bad_node = -1;
  int remote_bad_node = -1;
  int local_bad_node = -1;
  int relation_bad_node = -1;

  bool all_ok() const { return direction_ok && remote_ok && local_ok && relation_ok; }
};

// Structurally independent check of the construction constraints: edges point
// forward, each node reaches exactly back to its cut-off predecessor, every
// node in between is connected, and relations match speaker identity. Works
// by scanning the conversation, not by re-running the builder.
DagValidation validate_dag(const ConvDag& dag, const Conversation& conversation, int omega);

struct DagStats {
  double avg_preds = 0.0;
  long edge_count = 0;
  long node_count = 0;
  long relation_histogram[2] = {0, 0};
};

DagStats dag_stats(const std::vector<ConvDag>& dags);

// Graphviz text; same-speaker edges solid, cross-speaker dashed. Byte-stable.
std::string export_dot(const ConvDag& dag, const Conversation& conversation);

// {"n_nodes": N, "edges": [[src, dst, relation], ...]} with 0-based indices.
std::string export_json(const ConvDag& dag);

}  // namespace dagerc
