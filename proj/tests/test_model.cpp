#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>

#include "dagerc/checkpoint.hpp"
#include "dagerc/gradcheck.hpp"
#include "dagerc/model.hpp"
#include "doctest.h"
#include "support/synthetic.hpp"

using namespace dagerc;

namespace {

Conversation speakers(std::vector<std::string> names) {
  Conversation conv;
  conv.id = "t";
  for (std::size_t i = 0; i < names.size(); ++i) {
    Utterance u;
    u.index = static_cast<int>(i);
    u.speaker = std::move(names[i]);
    conv.utterances.push_back(std::move(u));
  }
  return conv;
}

void set_values(Parameter& p, std::initializer_list<double> values) {
  REQUIRE(static_cast<int>(values.size()) == p.size());
  std::copy(values.begin(), values.end(), p.value.data.begin());
}

void set_identity(Parameter& p) {
  p.value.fill(0.0);
  for (int i = 0; i < std::min(p.rows(), p.cols()); ++i) p.value.at(i, i) = 1.0;
}

std::vector<std::vector<double>> random_features(Rng& rng, int n, int d, double scale = 1.0) {
  std::vector<std::vector<double>> f(n, std::vector<double>(d));
  for (auto& row : f)
    for (double& v : row) v = rng.uniform(-scale, scale);
  return f;
}

ModelConfig small_config(int d_feat = 6, int d_h = 8, int layers = 2, int classes = 3) {
  ModelConfig c;
  c.d_feat = d_feat;
  c.d_h = d_h;
  c.n_layers = layers;
  c.n_classes = classes;
  c.dropout = 0.0;
  c.seed = 1234;
  return c;
}

}  // namespace

TEST_CASE("config invariants are enforced") {
  ModelConfig c = small_config();
  c.n_layers = 0;
  CHECK_THROWS_AS(init_model(c), std::invalid_argument);
  c = small_config();
  c.ablation.use_nodal_unit = false;
  c.ablation.use_contextual_unit = false;
  CHECK_THROWS_AS(init_model(c), std::invalid_argument);
  c = small_config();
  c.d_h = 0;
  CHECK_THROWS_AS(init_model(c), std::invalid_argument);
}

TEST_CASE("same seed gives bit-identical parameters") {
  Model a = init_model(small_config());
  Model b = init_model(small_config());
  const auto &pa = a.store->all(), &pb = b.store->all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value.data == pb[i]->value.data);
  }
}

TEST_CASE("hand-counted parameter total for the smallest config") {
  ModelConfig c = small_config(1, 1, 1, 2);
  // input 1; attention 2; relation 2; gru units 2*9; head 2+1 + out 2+1
  const ParamCount pc = param_count(c);
  CHECK(pc.input_proj == 1);
  CHECK(pc.attention == 2);
  CHECK(pc.relation_transform == 2);
  CHECK(pc.gru_units == 18);
  CHECK(pc.head == 7);
  CHECK(pc.total == 30);
  CHECK(init_model(c).store->total_size() == 30);
}

TEST_CASE("disabling the relation transform removes L*d_h^2 weights") {
  ModelConfig c = small_config(6, 8, 3, 4);
  ModelConfig off = c;
  off.ablation.use_relation_transform = false;
  CHECK(param_count(c).total - param_count(off).total == 3L * 8 * 8);
  CHECK(init_model(c).store->total_size() - init_model(off).store->total_size() == 3L * 8 * 8);
}

TEST_CASE("closed-form count matches allocation for random configs") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    ModelConfig c;
    c.d_feat = 1 + rng.below(20);
    c.d_h = 1 + rng.below(16);
    c.n_layers = 1 + rng.below(4);
    c.n_classes = 2 + rng.below(5);
    c.dropout = 0.0;
    c.seed = rng.next();
    c.ablation.use_relation_transform = rng.below(2) == 0;
    c.ablation.use_nodal_unit = rng.below(2) == 0;
    c.ablation.use_contextual_unit = c.ablation.use_nodal_unit ? rng.below(2) == 0 : true;
    CHECK(param_count(c).total == init_model(c).store->total_size());
  }
}

TEST_CASE("layer output matches the independently computed three-node trace") {
  // speakers A,B,A with omega=1; d_h=2; expected values from the numpy
  // reference in tests/oracle/layer_reference.py
  Conversation conv = speakers({"A", "B", "A"});
  ConvDag dag = build_dag(conv, 1);

  Parameter attn("attn", 1, 4), rel0("rel0", 2, 2), rel1("rel1", 2, 2);
  set_values(attn, {0.2, -0.1, 0.4, 0.3});
  set_values(rel0, {0.5, -0.25, 0.1, 0.3});
  set_values(rel1, {-0.2, 0.35, 0.15, 0.45});

  Parameter h_wz("h_wz", 2, 2), h_uz("h_uz", 2, 2), h_bz("h_bz", 2, 1);
  Parameter h_wr("h_wr", 2, 2), h_ur("h_ur", 2, 2), h_br("h_br", 2, 1);
  Parameter h_wc("h_wc", 2, 2), h_uc("h_uc", 2, 2), h_bc("h_bc", 2, 1);
  set_values(h_wz, {0.1, 0.2, -0.3, 0.4});
  set_values(h_uz, {0.05, -0.15, 0.25, 0.35});
  set_values(h_bz, {0.01, -0.02});
  set_values(h_wr, {-0.1, 0.3, 0.2, -0.4});
  set_values(h_ur, {0.15, 0.05, -0.25, 0.2});
  set_values(h_br, {0.03, 0.04});
  set_values(h_wc, {0.25, -0.05, 0.35, 0.15});
  set_values(h_uc, {-0.3, 0.1, 0.2, -0.2});
  set_values(h_bc, {-0.01, 0.02});

  Parameter m_wz("m_wz", 2, 2), m_uz("m_uz", 2, 2), m_bz("m_bz", 2, 1);
  Parameter m_wr("m_wr", 2, 2), m_ur("m_ur", 2, 2), m_br("m_br", 2, 1);
  Parameter m_wc("m_wc", 2, 2), m_uc("m_uc", 2, 2), m_bc("m_bc", 2, 1);
  set_values(m_wz, {0.2, -0.1, 0.1, 0.3});
  set_values(m_uz, {-0.05, 0.25, 0.15, -0.35});
  set_values(m_bz, {0.02, 0.01});
  set_values(m_wr, {0.3, 0.2, -0.2, 0.1});
  set_values(m_ur, {0.05, -0.05, 0.25, 0.15});
  set_values(m_br, {-0.03, 0.02});
  set_values(m_wc, {-0.15, 0.25, 0.05, 0.45});
  set_values(m_uc, {0.1, -0.3, 0.2, 0.4});
  set_values(m_bc, {0.04, -0.01});

  LayerParams layer;
  layer.attn_w = &attn;
  layer.rel_w[0] = &rel0;
  layer.rel_w[1] = &rel1;
  layer.nodal_gru = GruParams{&h_wz, &h_uz, &h_bz, &h_wr, &h_ur, &h_br, &h_wc, &h_uc, &h_bc};
  layer.context_gru = GruParams{&m_wz, &m_uz, &m_bz, &m_wr, &m_ur, &m_br, &m_wc, &m_uc, &m_bc};

  Tape tape;
  const std::vector<std::vector<double>> h_prev_vals = {
      {0.1, -0.2}, {0.3, 0.05}, {-0.15, 0.25}};
  std::vector<Tape::Ref> h_prev;
  for (const auto& v : h_prev_vals) h_prev.push_back(tape.input(v));

  LayerTrace trace;
  AblationConfig full;
  forward_layer(tape, layer, full, h_prev, dag, &trace);

  const double tol = 1e-10;
  CHECK(trace.attention[0].empty());
  REQUIRE(trace.attention[1].size() == 1);
  CHECK(trace.attention[1][0] == doctest::Approx(1.0).epsilon(tol));
  REQUIRE(trace.attention[2].size() == 2);
  CHECK(trace.attention[2][0] == doctest::Approx(0.49869711208410866).epsilon(tol));
  CHECK(trace.attention[2][1] == doctest::Approx(0.5013028879158913).epsilon(tol));

  CHECK(trace.message[0][0] == doctest::Approx(0.0).epsilon(tol));
  CHECK(trace.message[0][1] == doctest::Approx(0.0).epsilon(tol));
  CHECK(trace.message[1][0] == doctest::Approx(0.07623229900704737).epsilon(tol));
  CHECK(trace.message[1][1] == doctest::Approx(-0.02139908645975286).epsilon(tol));
  CHECK(trace.message[2][0] == doctest::Approx(0.01648657873770397).epsilon(tol));
  CHECK(trace.message[2][1] == doctest::Approx(0.00941809796560645).epsilon(tol));

  CHECK(trace.nodal[0][0] == doctest::Approx(0.01237242668500044).epsilon(tol));
  CHECK(trace.nodal[0][1] == doctest::Approx(0.01168620781512562).epsilon(tol));
  CHECK(trace.contextual[0][0] == doctest::Approx(0.08774139095600524).epsilon(tol));
  CHECK(trace.contextual[0][1] == doctest::Approx(-0.11638776856130373).epsilon(tol));
  CHECK(trace.hidden[0][0] == doctest::Approx(0.10011381764100569).epsilon(tol));
  CHECK(trace.hidden[0][1] == doctest::Approx(-0.1047015607461781).epsilon(tol));

  CHECK(trace.nodal[1][0] == doctest::Approx(0.06262849832489009).epsilon(tol));
  CHECK(trace.nodal[1][1] == doctest::Approx(0.05684128581195882).epsilon(tol));
  CHECK(trace.contextual[1][0] == doctest::Approx(0.1628464596369761).epsilon(tol));
  CHECK(trace.contextual[1][1] == doctest::Approx(0.03706379949148957).epsilon(tol));
  CHECK(trace.hidden[1][0] == doctest::Approx(0.2254749579618662).epsilon(tol));
  CHECK(trace.hidden[1][1] == doctest::Approx(0.09390508530344838).epsilon(tol));

  CHECK(trace.nodal[2][0] == doctest::Approx(-0.02367686597390736).epsilon(tol));
  CHECK(trace.nodal[2][1] == doctest::Approx(0.00751684993323413).epsilon(tol));
  CHECK(trace.contextual[2][0] == doctest::Approx(-0.07430480841222005).epsilon(tol));
  CHECK(trace.contextual[2][1] == doctest::Approx(0.14563919441046033).epsilon(tol));
  CHECK(trace.hidden[2][0] == doctest::Approx(-0.09798167438612741).epsilon(tol));
  CHECK(trace.hidden[2][1] == doctest::Approx(0.15315604434369445).epsilon(tol));
}

TEST_CASE("single utterance runs on a zero message") {
  Model m = init_model(small_config());
  Conversation conv = speakers({"A"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(1);
  Tape tape;
  ForwardTrace trace;
  ForwardResult r =
      forward(m, tape, random_features(rng, 1, 6), dag, false, nullptr, &trace);
  REQUIRE(r.probs.size() == 1);
  for (const auto& msg : trace.layers[0].message)
    for (double v : msg) CHECK(v == 0.0);
  const auto pv = trace.probs[0];
  CHECK(std::accumulate(pv.begin(), pv.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("attention over a single predecessor is exactly one") {
  Model m = init_model(small_config());
  Conversation conv = speakers({"A", "B"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(2);
  Tape tape;
  ForwardTrace trace;
  forward(m, tape, random_features(rng, 2, 6), dag, false, nullptr, &trace);
  for (const LayerTrace& lt : trace.layers) {
    REQUIRE(lt.attention[1].size() == 1);
    CHECK(lt.attention[1][0] == 1.0);
  }
}

TEST_CASE("attention weights normalize per node") {
  Model m = init_model(small_config(6, 8, 2, 3));
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Conversation conv = testsupport::random_conversation(rng, 1, 20, 2 + rng.below(3));
    ConvDag dag = build_dag(conv, 1 + rng.below(3));
    Tape tape;
    ForwardTrace trace;
    forward(m, tape, random_features(rng, conv.size(), 6), dag, false, nullptr, &trace);
    for (const LayerTrace& lt : trace.layers)
      for (int i = 0; i < dag.n_nodes; ++i) {
        if (dag.preds[i].empty()) {
          CHECK(lt.attention[i].empty());
        } else {
          const double sum =
              std::accumulate(lt.attention[i].begin(), lt.attention[i].end(), 0.0);
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
  }
}

TEST_CASE("probabilities are deterministic in eval mode and rows sum to one") {
  Model m = init_model(small_config());
  Conversation conv = speakers({"A", "B", "A", "B", "B"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(4);
  auto feats = random_features(rng, 5, 6);

  Tape t1, t2;
  ForwardTrace tr1, tr2;
  forward(m, t1, feats, dag, false, nullptr, &tr1);
  forward(m, t2, feats, dag, false, nullptr, &tr2);
  for (int i = 0; i < 5; ++i) {
    CHECK(tr1.probs[i] == tr2.probs[i]);
    CHECK(std::accumulate(tr1.probs[i].begin(), tr1.probs[i].end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("head activations are non-negative") {
  Model m = init_model(small_config());
  // relu output feeds the class layer; probe it through the trace-free path by
  // checking the head weights act on non-negative activations: directly
  // recompute z for one conversation
  Conversation conv = speakers({"A", "B", "A"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(5);
  auto feats = random_features(rng, 3, 6);
  Tape tape;
  ForwardTrace trace;
  forward(m, tape, feats, dag, false, nullptr, &trace);

  for (int i = 0; i < 3; ++i) {
    std::vector<double> cat = trace.h0[i];
    for (const LayerTrace& lt : trace.layers)
      cat.insert(cat.end(), lt.hidden[i].begin(), lt.hidden[i].end());
    for (int r = 0; r < m.head_w->rows(); ++r) {
      double z = m.head_b->value.data[r];
      for (int c = 0; c < m.head_w->cols(); ++c) z += m.head_w->value.at(r, c) * cat[c];
      CHECK(std::max(z, 0.0) >= 0.0);
    }
  }
}

TEST_CASE("permuting the class layer permutes probabilities identically") {
  Model m = init_model(small_config(6, 8, 2, 4));
  Conversation conv = speakers({"A", "B", "A"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(6);
  auto feats = random_features(rng, 3, 6);

  Tape t1;
  ForwardTrace base;
  forward(m, t1, feats, dag, false, nullptr, &base);

  const std::vector<int> perm = {2, 0, 3, 1};  // class k moves to perm[k]
  Tensor w = m.out_w->value, b = m.out_b->value;
  for (int k = 0; k < 4; ++k) {
    for (int c = 0; c < m.out_w->cols(); ++c) m.out_w->value.at(perm[k], c) = w.at(k, c);
    m.out_b->value.data[perm[k]] = b.data[k];
  }

  Tape t2;
  ForwardTrace permuted;
  forward(m, t2, feats, dag, false, nullptr, &permuted);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k)
      CHECK(permuted.probs[i][perm[k]] == doctest::Approx(base.probs[i][k]).epsilon(1e-12));
}

TEST_CASE("future features never leak into earlier predictions") {
  Model m = init_model(small_config(6, 8, 2, 3));
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Conversation conv = testsupport::random_conversation(rng, 2, 12, 2 + rng.below(3));
    ConvDag dag = build_dag(conv, 1 + rng.below(2));
    auto feats = random_features(rng, conv.size(), 6);

    Tape t1;
    ForwardTrace before;
    forward(m, t1, feats, dag, false, nullptr, &before);

    const int j = 1 + rng.below(conv.size() - 1);  // mutate utterance j
    auto mutated = feats;
    for (double& v : mutated[j]) v += rng.uniform(0.5, 2.0);

    Tape t2;
    ForwardTrace after;
    forward(m, t2, mutated, dag, false, nullptr, &after);
    for (int i = 0; i < j; ++i) CHECK(before.probs[i] == after.probs[i]);  // bitwise equal
  }
}

TEST_CASE("a single layer carries information across the whole chain") {
  // propagation-friendly weights: the nodal unit forwards the message as-is
  // (closed update gate, hidden = message), the contextual unit contributes
  // tanh of the node's own projected feature, so the layer recurrence is
  // h[i] ~= h[i-1] + tanh(h0[i]) with an identity Jacobian along the chain
  for (int n : {2, 4, 8, 16, 32, 64}) {
    ModelConfig cfg = small_config(8, 8, 1, 3);
    Model m = init_model(cfg);
    set_identity(*m.input_proj);
    LayerParams& layer = m.layers[0];
    set_identity(*layer.rel_w[0]);
    set_identity(*layer.rel_w[1]);
    layer.nodal_gru->update_w->value.fill(0.0);
    layer.nodal_gru->update_u->value.fill(0.0);
    layer.nodal_gru->update_b->value.fill(-40.0);  // nodal output ~= message
    layer.context_gru->update_w->value.fill(0.0);
    layer.context_gru->update_u->value.fill(0.0);
    layer.context_gru->update_b->value.fill(40.0);  // contextual output ~= cand
    layer.context_gru->reset_w->value.fill(0.0);
    layer.context_gru->reset_u->value.fill(0.0);
    layer.context_gru->reset_b->value.fill(40.0);  // reset open: cand sees the state
    layer.context_gru->cand_w->value.fill(0.0);
    set_identity(*layer.context_gru->cand_u);
    layer.context_gru->cand_b->value.fill(0.0);
    for (double& v : m.head_w->value.data) v *= 1e-2;
    for (double& v : m.out_w->value.data) v *= 1e-2;

    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back(i % 2 == 0 ? "A" : "B");
    Conversation conv = speakers(std::move(names));
    ConvDag chain = build_variant(conv, DagVariant::sequence());

    Rng rng(8);
    auto feats = random_features(rng, n, 8, 0.02);
    Tape t1;
    ForwardTrace before;
    forward(m, t1, feats, chain, false, nullptr, &before);

    auto mutated = feats;
    for (double& v : mutated[0]) v += 0.5;
    Tape t2;
    ForwardTrace after;
    forward(m, t2, mutated, chain, false, nullptr, &after);

    double max_diff = 0.0;
    for (std::size_t k = 0; k < before.probs[n - 1].size(); ++k)
      max_diff = std::max(max_diff, std::abs(before.probs[n - 1][k] - after.probs[n - 1][k]));
    CHECK(max_diff > 1e-12);
  }
}

TEST_CASE("ablated layer reduces to shared-transform attention plus the nodal unit") {
  ModelConfig cfg = small_config(5, 4, 1, 3);
  cfg.ablation.use_relation_transform = false;
  cfg.ablation.use_contextual_unit = false;
  Model m = init_model(cfg);

  Conversation conv = speakers({"A", "B", "A", "C"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(9);
  auto feats = random_features(rng, 4, 5);

  Tape tape;
  ForwardTrace trace;
  forward(m, tape, feats, dag, false, nullptr, &trace);

  // direct re-evaluation of the reduced recurrence with the same weights
  const int d = 4;
  auto matvec = [&](const Parameter& w, const std::vector<double>& x, const Parameter* b) {
    std::vector<double> y(w.rows(), 0.0);
    for (int r = 0; r < w.rows(); ++r) {
      double acc = b ? b->value.data[r] : 0.0;
      for (int c = 0; c < w.cols(); ++c) acc += w.value.at(r, c) * x[c];
      y[r] = acc;
    }
    return y;
  };
  auto sigmoid = [](std::vector<double> v) {
    for (double& x : v) x = 1.0 / (1.0 + std::exp(-x));
    return v;
  };

  std::vector<std::vector<double>> h0(4);
  for (int i = 0; i < 4; ++i) h0[i] = matvec(*m.input_proj, feats[i], nullptr);

  const LayerParams& layer = m.layers[0];
  std::vector<std::vector<double>> h1(4);
  for (int i = 0; i < 4; ++i) {
    std::vector<double> msg(d, 0.0);
    if (!dag.preds[i].empty()) {
      std::vector<double> scores;
      for (auto [j, rel] : dag.preds[i]) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += layer.attn_w->value.at(0, k) * h1[j][k];
        for (int k = 0; k < d; ++k) s += layer.attn_w->value.at(0, d + k) * h0[i][k];
        scores.push_back(s);
      }
      const double mx = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::size_t a = 0; a < scores.size(); ++a) {
        const auto [j, rel] = dag.preds[i][a];
        const std::vector<double> t = matvec(*layer.rel_w[0], h1[j], nullptr);  // shared W
        for (int k = 0; k < d; ++k) msg[k] += scores[a] / z * t[k];
      }
    }
    const GruParams& g = *layer.nodal_gru;
    auto zg = sigmoid([&] {
      auto v = matvec(*g.update_w, h0[i], g.update_b);
      auto u = matvec(*g.update_u, msg, nullptr);
      for (int k = 0; k < d; ++k) v[k] += u[k];
      return v;
    }());
    auto rg = sigmoid([&] {
      auto v = matvec(*g.reset_w, h0[i], g.reset_b);
      auto u = matvec(*g.reset_u, msg, nullptr);
      for (int k = 0; k < d; ++k) v[k] += u[k];
      return v;
    }());
    std::vector<double> gated(d);
    for (int k = 0; k < d; ++k) gated[k] = rg[k] * msg[k];
    auto cand = matvec(*g.cand_w, h0[i], g.cand_b);
    auto cu = matvec(*g.cand_u, gated, nullptr);
    h1[i].resize(d);
    for (int k = 0; k < d; ++k)
      h1[i][k] = (1.0 - zg[k]) * msg[k] + zg[k] * std::tanh(cand[k] + cu[k]);
  }

  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < d; ++k)
      CHECK(trace.layers[0].hidden[i][k] == doctest::Approx(h1[i][k]).epsilon(1e-12));
}

TEST_CASE("full-model gradients match finite differences under every ablation") {
  Conversation conv = speakers({"A", "B", "A", "B"});
  ConvDag dag = build_dag(conv, 1);
  Rng frng(39608);
  auto feats = random_features(frng, 4, 6);
  const std::vector<int> labels = {0, 2, 1, 0};

  const AblationConfig ablations[] = {
      {true, true, true}, {false, true, true}, {true, false, true}, {true, true, false}};
  for (const AblationConfig& ab : ablations) {
    ModelConfig cfg = small_config(6, 8, 2, 3);
    cfg.seed = 5;
    cfg.ablation = ab;
    Model m = init_model(cfg);
    // doubled weights keep every gate unsaturated but gradients well above the
    // finite-difference noise floor
    for (auto& p : m.store->all())
      for (double& v : p->value.data) v *= 2.0;

    auto loss_fn = [&](bool with_grads) {
      Tape tape;
      ForwardResult r = forward(m, tape, feats, dag, false, nullptr);
      Tape::Ref loss = conversation_loss(tape, r.probs, labels);
      if (with_grads) tape.backward(loss);
      return tape.value(loss)[0];
    };

    auto params = m.parameters();
    GradCheckReport report = grad_check(params, loss_fn, 1e-5);
    CAPTURE(ab.use_relation_transform);
    CAPTURE(ab.use_nodal_unit);
    CAPTURE(ab.use_contextual_unit);
    CHECK(report.worst < 1e-4);
  }
}

TEST_CASE("loss is the plain sum of per-utterance cross entropies") {
  Tape tape;
  const double p1[] = {1.0, 0.0};
  const double p2[] = {0.25, 0.75};
  std::vector<Tape::Ref> probs = {tape.input(p1), tape.input(p2)};
  std::vector<int> labels = {0, 0};
  Tape::Ref loss = conversation_loss(tape, probs, labels);
  CHECK(tape.value(loss)[0] == doctest::Approx(-std::log(0.25)).epsilon(1e-12));

  // uniform over 4 classes, 3 utterances
  Tape t2;
  const double u4[] = {0.25, 0.25, 0.25, 0.25};
  std::vector<Tape::Ref> probs3 = {t2.input(u4), t2.input(u4), t2.input(u4)};
  std::vector<int> labels3 = {0, 1, 2};
  CHECK(t2.value(conversation_loss(t2, probs3, labels3))[0] ==
        doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip preserves every value") {
  Model m = init_model(small_config(6, 8, 2, 3));
  const std::string path = "model_test_checkpoint.json";
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(back.config == m.config);
  const auto &pa = m.store->all(), &pb = back.store->all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);

  // identical predictions after reload
  Conversation conv = speakers({"A", "B", "A"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(11);
  auto feats = random_features(rng, 3, 6);
  Tape t1, t2;
  ForwardResult r1 = forward(m, t1, feats, dag, false, nullptr);
  ForwardResult r2 = forward(back, t2, feats, dag, false, nullptr);
  for (int i = 0; i < 3; ++i) {
    auto v1 = t1.value(r1.probs[i]);
    auto v2 = t2.value(r2.probs[i]);
    CHECK(std::equal(v1.begin(), v1.end(), v2.begin()));
  }
}

TEST_CASE("forward validates inputs") {
  Model m = init_model(small_config());
  Conversation conv = speakers({"A", "B"});
  ConvDag dag = build_dag(conv, 1);
  Rng rng(12);
  CHECK_THROWS_AS(forward(m, *std::make_unique<Tape>(), random_features(rng, 3, 6), dag, false,
                          nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(forward(m, *std::make_unique<Tape>(), random_features(rng, 2, 5), dag, false,
                          nullptr),
                  std::invalid_argument);
}
