#include "dagerc/dag.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dagerc {

namespace {

int relation_of(const Conversation& conv, int src, int dst) {
  return conv.utterances[src].speaker == conv.utterances[dst].speaker ? 1 : 0;
}

ConvDag finalize(const Conversation& conv, std::vector<DagEdge> edges, DagVariant variant) {
  ConvDag dag;
  dag.n_nodes = conv.size();
  dag.variant = variant;
  std::sort(edges.begin(), edges.end(),
            [](const DagEdge& a, const DagEdge& b) { return std::tie(a.dst, a.src) < std::tie(b.dst, b.src); });
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  dag.preds.resize(dag.n_nodes);
  for (const DagEdge& e : edges) dag.preds[e.dst].emplace_back(e.src, e.relation);
  dag.edges = std::move(edges);
  return dag;
}

// 0-based position of the omega-th latest same-speaker utterance before i,
// or -1 when fewer than omega exist.
int cutoff_predecessor(const Conversation& conv, int i, int omega) {
  int seen = 0;
  for (int j = i - 1; j >= 0; --j) {
    if (conv.utterances[j].speaker == conv.utterances[i].speaker && ++seen == omega) return j;
  }
  return -1;
}

}  // namespace

std::string DagVariant::describe() const {
  switch (kind) {
    case Kind::kOurs:
      return "ours(omega=" + std::to_string(omega) + ")";
    case Kind::kSequence:
      return "sequence";
    case Kind::kSingleLocal:
      return "single-local(omega=" + std::to_string(omega) + ")";
    case Kind::kCommon:
      return "common(kappa=" + std::to_string(kappa) + ")";
  }
  return "?";
}

ConvDag build_dag(const Conversation& conversation, int omega) {
  if (conversation.utterances.empty()) throw std::invalid_argument("build_dag: empty conversation");
  if (omega < 1) throw std::invalid_argument("build_dag: omega must be >= 1");

  const int n = conversation.size();
  std::vector<DagEdge> edges;
  for (int i = 1; i < n; ++i) {
    int same_speaker_seen = 0;
    for (int tau = i - 1; tau >= 0 && same_speaker_seen < omega; --tau) {
      if (conversation.utterances[tau].speaker == conversation.utterances[i].speaker) {
        edges.push_back({tau, i, 1});
        ++same_speaker_seen;
      } else {
        edges.push_back({tau, i, 0});
      }
    }
  }
  return finalize(conversation, std::move(edges), DagVariant::ours(omega));
}

ConvDag build_variant(const Conversation& conversation, const DagVariant& variant) {
  if (conversation.utterances.empty())
    throw std::invalid_argument("build_variant: empty conversation");

  const int n = conversation.size();
  std::vector<DagEdge> edges;
  switch (variant.kind) {
    case DagVariant::Kind::kOurs:
      return build_dag(conversation, variant.omega);
    case DagVariant::Kind::kSequence:
      for (int i = 1; i < n; ++i) edges.push_back({i - 1, i, relation_of(conversation, i - 1, i)});
      break;
    case DagVariant::Kind::kCommon:
      if (variant.kappa < 1) throw std::invalid_argument("build_variant: kappa must be >= 1");
      for (int i = 1; i < n; ++i)
        for (int j = std::max(0, i - variant.kappa); j < i; ++j)
          edges.push_back({j, i, relation_of(conversation, j, i)});
      break;
    case DagVariant::Kind::kSingleLocal:
      if (variant.omega < 1) throw std::invalid_argument("build_variant: omega must be >= 1");
      for (int i = 1; i < n; ++i) {
        const int cutoff = cutoff_predecessor(conversation, i, variant.omega);
        if (cutoff >= 0) edges.push_back({cutoff, i, 1});
        edges.push_back({i - 1, i, relation_of(conversation, i - 1, i)});
      }
      break;
  }
  return finalize(conversation, std::move(edges), variant);
}

DagValidation validate_dag(const ConvDag& dag, const Conversation& conversation, int omega) {
  if (dag.n_nodes != conversation.size())
    throw std::invalid_argument("validate_dag: node count does not match conversation length");

  DagValidation v;
  std::set<std::pair<int, int>> present;
  for (const DagEdge& e : dag.edges) {
    if (e.src >= e.dst && v.direction_ok) {
      v.direction_ok = false;
      v.direction_bad_node = e.dst;
    }
    if (!present.insert({e.src, e.dst}).second && v.direction_ok) {
      v.direction_ok = false;  // duplicate edges break the edge-set reading
      v.direction_bad_node = e.dst;
    }
    const int want = relation_of(conversation, e.src, e.dst);
    if (e.relation != want && v.relation_ok) {
      v.relation_ok = false;
      v.relation_bad_node = e.dst;
    }
  }

  for (int i = 1; i < dag.n_nodes; ++i) {
    int cutoff = -1;
    int seen = 0;
    for (int j = i - 1; j >= 0; --j) {
      if (conversation.utterances[j].speaker == conversation.utterances[i].speaker && ++seen == omega) {
        cutoff = j;
        break;
      }
    }
    if (cutoff >= 0) {
      if (!present.count({cutoff, i}) && v.remote_ok) {
        v.remote_ok = false;
        v.remote_bad_node = i;
      }
      for (int j = 0; j < cutoff; ++j) {
        if (present.count({j, i}) && v.remote_ok) {
          v.remote_ok = false;
          v.remote_bad_node = i;
        }
      }
    }
    // with no cut-off the scan exhausts and everything before i is local
    const int local_from = cutoff >= 0 ? cutoff + 1 : 0;
    for (int j = local_from; j < i; ++j) {
      if (!present.count({j, i}) && v.local_ok) {
        v.local_ok = false;
        v.local_bad_node = i;
      }
    }
  }
  return v;
}

DagStats dag_stats(const std::vector<ConvDag>& dags) {
  if (dags.empty()) throw std::invalid_argument("dag_stats: empty input");
  DagStats s;
  for (const ConvDag& d : dags) {
    s.node_count += d.n_nodes;
    s.edge_count += static_cast<long>(d.edges.size());
    for (const DagEdge& e : d.edges) ++s.relation_histogram[e.relation];
  }
  s.avg_preds = s.node_count ? static_cast<double>(s.edge_count) / s.node_count : 0.0;
  return s;
}

std::string export_dot(const ConvDag& dag, const Conversation& conversation) {
  if (dag.n_nodes != conversation.size())
    throw std::invalid_argument("export_dot: node count does not match conversation length");
  std::ostringstream out;
  out << "digraph conversation {\n  rankdir=LR;\n";
  for (int i = 0; i < dag.n_nodes; ++i)
    out << "  u" << (i + 1) << " [label=\"u" << (i + 1) << " "
        << conversation.utterances[i].speaker << "\"];\n";
  for (const DagEdge& e : dag.edges)
    out << "  u" << (e.src + 1) << " -> u" << (e.dst + 1)
        << (e.relation == 1 ? " [style=solid];" : " [style=dashed];") << "\n";
  out << "}\n";
  return out.str();
}

std::string export_json(const ConvDag& dag) {
  nlohmann::json j;
  j["n_nodes"] = dag.n_nodes;
  auto edges = nlohmann::json::array();
  for (const DagEdge& e : dag.edges) edges.push_back({e.src, e.dst, e.relation});
  j["edges"] = std::move(edges);
  return j.dump();
}

}  // namespace dagerc
