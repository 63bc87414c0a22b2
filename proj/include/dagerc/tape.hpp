#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dagerc/tensor.hpp"

namespace dagerc {

// Reverse-mode tape over f64 vectors. Each operation records the node refs it
// read so the backward sweep can replay exact vector-Jacobian products in
// reverse creation order (creation order is always a valid topological order).
// Parameter gradients accumulate into Parameter::grad across backward calls;
// zeroing them is the caller's job.
class Tape {
 public:
  using Ref = std::int32_t;

  // external input vector (no gradient is propagated into it)
  Ref input(std::span<const double> v);
  Ref zeros(int len);

  // w.value * x (+ bias)
  Ref matvec(Parameter& w, Ref x, Parameter* bias = nullptr);
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref hadamard(Ref a, Ref b);
  Ref concat(Ref a, Ref b);
  Ref sigmoid(Ref x);
  Ref tanh(Ref x);
  Ref relu(Ref x);
  // max-subtracted, entries positive and summing to 1
  Ref softmax(Ref x);
  // gathers single-element nodes into one vector
  Ref stack_scalars(std::span<const Ref> parts);
  // sum_k weights[k] * parts[k], all parts the same length
  Ref weighted_sum(Ref weights, std::span<const Ref> parts);
  // inverted dropout; identity when not training or rate == 0
  Ref dropout(Ref x, double rate, bool training, Rng& rng);
  // -log(max(probs[label], kLogFloor)), single-element output
  Ref cross_entropy(Ref probs, int label);

  // Spans point into the tape's arena and are invalidated by the next
  // operation recorded on this tape; copy out anything held across ops.
  std::span<const double> value(Ref r) const;
  std::span<const double> grad(Ref r) const;
  int size(Ref r) const { return nodes_[r].len; }

  // seeds d(root)/d(root) = 1 and sweeps the tape in reverse; root must be a
  // single-element node
  void backward(Ref root);

  // drops all nodes but keeps arena capacity
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

  static constexpr double kLogFloor = 1e-12;

 private:
  enum class Op : std::uint8_t {
    kInput,
    kZeros,
    kMatVec,
    kAdd,
    kSub,
    kHadamard,
    kConcat,
    kSigmoid,
    kTanh,
    kRelu,
    kSoftmax,
    kStack,
    kWeightedSum,
    kDropout,
    kCrossEntropy,
  };

  struct Node {
    Op op;
    Ref a = -1;
    Ref b = -1;
    Parameter* w = nullptr;
    Parameter* bias = nullptr;
    std::int32_t args_off = 0;
    std::int32_t n_args = 0;
    std::int32_t off = 0;  // into the value/grad arenas
    std::int32_t len = 0;
    std::int32_t aux_off = -1;  // dropout mask
    std::int32_t label = -1;    // cross-entropy target
  };

  Ref alloc(Op op, int len);
  double* val_ptr(Ref r) { return vals_.data() + nodes_[r].off; }
  const double* val_ptr(Ref r) const { return vals_.data() + nodes_[r].off; }
  void check_len(Ref a, Ref b, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<double> aux_;
  std::vector<Ref> args_;
};

// Gate weights and biases of one GRU cell. Input maps are (d_h x d_in),
// recurrent maps (d_h x d_h), biases length d_h.
struct GruParams {
  Parameter* update_w = nullptr;
  Parameter* update_u = nullptr;
  Parameter* update_b = nullptr;
  Parameter* reset_w = nullptr;
  Parameter* reset_u = nullptr;
  Parameter* reset_b = nullptr;
  Parameter* cand_w = nullptr;
  Parameter* cand_u = nullptr;
  Parameter* cand_b = nullptr;
};

// z = sig(Wz in + Uz h + bz); r = sig(Wr in + Ur h + br);
// cand = tanh(Wc in + Uc (r.h) + bc); out = (1-z).h + z.cand
Tape::Ref gru_cell(Tape& t, Tape::Ref input, Tape::Ref hidden, const GruParams& p);

}  // namespace dagerc
