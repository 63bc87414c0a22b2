#include "dagerc/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dagerc {

namespace {

#ifndef NDEBUG
void debug_check_finite(const double* p, int len) {
  for (int i = 0; i < len; ++i) assert(std::isfinite(p[i]) && "tape op produced non-finite value");
}
#else
void debug_check_finite(const double*, int) {}
#endif

}  // namespace

Tape::Ref Tape::alloc(Op op, int len) {
  Node n;
  n.op = op;
  n.len = len;
  n.off = static_cast<std::int32_t>(vals_.size());
  vals_.resize(vals_.size() + len, 0.0);
  nodes_.push_back(n);
  return static_cast<Ref>(nodes_.size() - 1);
}

#ifndef NDEBUG
#define DAGERC_CHECK_FINITE(r) debug_check_finite(val_ptr(r), nodes_[r].len)
#else
#define DAGERC_CHECK_FINITE(r) (void)0
#endif

void Tape::check_len(Ref a, Ref b, const char* what) const {
  if (nodes_[a].len != nodes_[b].len)
    throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                std::to_string(nodes_[a].len) + " vs " +
                                std::to_string(nodes_[b].len) + ")");
}

Tape::Ref Tape::input(std::span<const double> v) {
  Ref r = alloc(Op::kInput, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), val_ptr(r));
  return r;
}

Tape::Ref Tape::zeros(int len) { return alloc(Op::kZeros, len); }

Tape::Ref Tape::matvec(Parameter& w, Ref x, Parameter* bias) {
  if (w.cols() != nodes_[x].len)
    throw std::invalid_argument("matvec: " + w.name + " has " + std::to_string(w.cols()) +
                                " cols, input has length " + std::to_string(nodes_[x].len));
  if (bias && bias->size() != w.rows())
    throw std::invalid_argument("matvec: bias length mismatch for " + w.name);
  Ref r = alloc(Op::kMatVec, w.rows());
  Node& n = nodes_.back();
  n.a = x;
  n.w = &w;
  n.bias = bias;
  const double* xv = val_ptr(x);
  double* out = val_ptr(r);
  const int rows = w.rows(), cols = w.cols();
  const double* wd = w.value.data.data();
  for (int i = 0; i < rows; ++i) {
    const double* wrow = wd + static_cast<std::size_t>(i) * cols;
    double acc = bias ? bias->value.data[i] : 0.0;
    for (int j = 0; j < cols; ++j) acc += wrow[j] * xv[j];
    out[i] = acc;
  }
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::add(Ref a, Ref b) {
  check_len(a, b, "add");
  Ref r = alloc(Op::kAdd, nodes_[a].len);
  Node& n = nodes_.back();
  n.a = a;
  n.b = b;
  const double *av = val_ptr(a), *bv = val_ptr(b);
  double* out = val_ptr(r);
  for (int i = 0; i < n.len; ++i) out[i] = av[i] + bv[i];
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  check_len(a, b, "sub");
  Ref r = alloc(Op::kSub, nodes_[a].len);
  Node& n = nodes_.back();
  n.a = a;
  n.b = b;
  const double *av = val_ptr(a), *bv = val_ptr(b);
  double* out = val_ptr(r);
  for (int i = 0; i < n.len; ++i) out[i] = av[i] - bv[i];
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::hadamard(Ref a, Ref b) {
  check_len(a, b, "hadamard");
  Ref r = alloc(Op::kHadamard, nodes_[a].len);
  Node& n = nodes_.back();
  n.a = a;
  n.b = b;
  const double *av = val_ptr(a), *bv = val_ptr(b);
  double* out = val_ptr(r);
  for (int i = 0; i < n.len; ++i) out[i] = av[i] * bv[i];
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::concat(Ref a, Ref b) {
  Ref r = alloc(Op::kConcat, nodes_[a].len + nodes_[b].len);
  Node& n = nodes_.back();
  n.a = a;
  n.b = b;
  double* out = val_ptr(r);
  std::memcpy(out, val_ptr(a), nodes_[a].len * sizeof(double));
  std::memcpy(out + nodes_[a].len, val_ptr(b), nodes_[b].len * sizeof(double));
  return r;
}

Tape::Ref Tape::sigmoid(Ref x) {
  Ref r = alloc(Op::kSigmoid, nodes_[x].len);
  Node& n = nodes_.back();
  n.a = x;
  const double* xv = val_ptr(x);
  double* out = val_ptr(r);
  for (int i = 0; i < n.len; ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::tanh(Ref x) {
  Ref r = alloc(Op::kTanh, nodes_[x].len);
  Node& n = nodes_.back();
  n.a = x;
  const double* xv = val_ptr(x);
  double* out = val_ptr(r);
  for (int i = 0; i < n.len; ++i) out[i] = std::tanh(xv[i]);
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::relu(Ref x) {
  Ref r = alloc(Op::kRelu, nodes_[x].len);
  Node& n = nodes_.back();
  n.a = x;
  const double* xv = val_ptr(x);
  double* out = val_ptr(r);
  for (int i = 0; i < n.len; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::softmax(Ref x) {
  if (nodes_[x].len == 0) throw std::invalid_argument("softmax: empty input");
  Ref r = alloc(Op::kSoftmax, nodes_[x].len);
  Node& n = nodes_.back();
  n.a = x;
  const double* xv = val_ptr(x);
  double* out = val_ptr(r);
  double mx = xv[0];
  for (int i = 1; i < n.len; ++i) mx = std::max(mx, xv[i]);
  double sum = 0.0;
  for (int i = 0; i < n.len; ++i) {
    out[i] = std::exp(xv[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < n.len; ++i) out[i] /= sum;
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::stack_scalars(std::span<const Ref> parts) {
  for (Ref p : parts)
    if (nodes_[p].len != 1) throw std::invalid_argument("stack_scalars: non-scalar part");
  const std::int32_t args_off = static_cast<std::int32_t>(args_.size());
  args_.insert(args_.end(), parts.begin(), parts.end());
  Ref r = alloc(Op::kStack, static_cast<int>(parts.size()));
  Node& n = nodes_.back();
  n.args_off = args_off;
  n.n_args = static_cast<std::int32_t>(parts.size());
  double* out = val_ptr(r);
  for (std::int32_t k = 0; k < n.n_args; ++k) out[k] = *val_ptr(args_[args_off + k]);
  return r;
}

Tape::Ref Tape::weighted_sum(Ref weights, std::span<const Ref> parts) {
  if (nodes_[weights].len != static_cast<int>(parts.size()))
    throw std::invalid_argument("weighted_sum: weight/part count mismatch");
  if (parts.empty()) throw std::invalid_argument("weighted_sum: empty part list");
  const int d = nodes_[parts[0]].len;
  for (Ref p : parts)
    if (nodes_[p].len != d) throw std::invalid_argument("weighted_sum: ragged part lengths");
  const std::int32_t args_off = static_cast<std::int32_t>(args_.size());
  args_.insert(args_.end(), parts.begin(), parts.end());
  Ref r = alloc(Op::kWeightedSum, d);
  Node& n = nodes_.back();
  n.a = weights;
  n.args_off = args_off;
  n.n_args = static_cast<std::int32_t>(parts.size());
  const double* wv = val_ptr(weights);
  double* out = val_ptr(r);
  for (std::int32_t k = 0; k < n.n_args; ++k) {
    const double* pv = val_ptr(args_[args_off + k]);
    const double wk = wv[k];
    for (int i = 0; i < d; ++i) out[i] += wk * pv[i];
  }
  DAGERC_CHECK_FINITE(r);
  return r;
}

Tape::Ref Tape::dropout(Ref x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const std::int32_t aux_off = static_cast<std::int32_t>(aux_.size());
  const int len = nodes_[x].len;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < len; ++i) aux_.push_back(rng.uniform01() < rate ? 0.0 : keep_scale);
  Ref r = alloc(Op::kDropout, len);
  Node& n = nodes_.back();
  n.a = x;
  n.aux_off = aux_off;
  const double* xv = val_ptr(x);
  double* out = val_ptr(r);
  for (int i = 0; i < len; ++i) out[i] = xv[i] * aux_[aux_off + i];
  return r;
}

Tape::Ref Tape::cross_entropy(Ref probs, int label) {
  if (label < 0 || label >= nodes_[probs].len)
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(nodes_[probs].len) + " classes");
  Ref r = alloc(Op::kCrossEntropy, 1);
  Node& n = nodes_.back();
  n.a = probs;
  n.label = label;
  const double p = std::max(val_ptr(probs)[label], kLogFloor);
  *val_ptr(r) = -std::log(p);
  DAGERC_CHECK_FINITE(r);
  return r;
}

std::span<const double> Tape::value(Ref r) const {
  return {vals_.data() + nodes_[r].off, static_cast<std::size_t>(nodes_[r].len)};
}

std::span<const double> Tape::grad(Ref r) const {
  return {grads_.data() + nodes_[r].off, static_cast<std::size_t>(nodes_[r].len)};
}

void Tape::backward(Ref root) {
  if (nodes_[root].len != 1) throw std::invalid_argument("backward: root must be a scalar node");
  grads_.assign(vals_.size(), 0.0);
  grads_[nodes_[root].off] = 1.0;

  for (Ref i = root; i >= 0; --i) {
    const Node& n = nodes_[i];
    const double* g = grads_.data() + n.off;
    switch (n.op) {
      case Op::kInput:
      case Op::kZeros:
        break;
      case Op::kMatVec: {
        const int rows = n.w->rows(), cols = n.w->cols();
        const double* xv = val_ptr(n.a);
        const double* wd = n.w->value.data.data();
        double* wg = n.w->grad.data.data();
        double* xg = grads_.data() + nodes_[n.a].off;
        for (int r = 0; r < rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          double* wgrow = wg + static_cast<std::size_t>(r) * cols;
          const double* wrow = wd + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) {
            wgrow[c] += gr * xv[c];
            xg[c] += gr * wrow[c];
          }
        }
        if (n.bias) {
          double* bg = n.bias->grad.data.data();
          for (int r = 0; r < rows; ++r) bg[r] += g[r];
        }
        break;
      }
      case Op::kAdd: {
        double* ga = grads_.data() + nodes_[n.a].off;
        double* gb = grads_.data() + nodes_[n.b].off;
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        break;
      }
      case Op::kSub: {
        double* ga = grads_.data() + nodes_[n.a].off;
        double* gb = grads_.data() + nodes_[n.b].off;
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k];
          gb[k] -= g[k];
        }
        break;
      }
      case Op::kHadamard: {
        double* ga = grads_.data() + nodes_[n.a].off;
        double* gb = grads_.data() + nodes_[n.b].off;
        const double* av = val_ptr(n.a);
        const double* bv = val_ptr(n.b);
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k] * bv[k];
          gb[k] += g[k] * av[k];
        }
        break;
      }
      case Op::kConcat: {
        double* ga = grads_.data() + nodes_[n.a].off;
        double* gb = grads_.data() + nodes_[n.b].off;
        const int la = nodes_[n.a].len;
        for (int k = 0; k < la; ++k) ga[k] += g[k];
        for (int k = 0; k < nodes_[n.b].len; ++k) gb[k] += g[la + k];
        break;
      }
      case Op::kSigmoid: {
        double* ga = grads_.data() + nodes_[n.a].off;
        const double* y = val_ptr(i);
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case Op::kTanh: {
        double* ga = grads_.data() + nodes_[n.a].off;
        const double* y = val_ptr(i);
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case Op::kRelu: {
        double* ga = grads_.data() + nodes_[n.a].off;
        const double* xv = val_ptr(n.a);
        for (int k = 0; k < n.len; ++k)
          if (xv[k] > 0.0) ga[k] += g[k];
        break;
      }
      case Op::kSoftmax: {
        double* ga = grads_.data() + nodes_[n.a].off;
        const double* y = val_ptr(i);
        double dot = 0.0;
        for (int k = 0; k < n.len; ++k) dot += g[k] * y[k];
        for (int k = 0; k < n.len; ++k) ga[k] += y[k] * (g[k] - dot);
        break;
      }
      case Op::kStack: {
        for (std::int32_t k = 0; k < n.n_args; ++k)
          grads_[nodes_[args_[n.args_off + k]].off] += g[k];
        break;
      }
      case Op::kWeightedSum: {
        const double* wv = val_ptr(n.a);
        double* gw = grads_.data() + nodes_[n.a].off;
        for (std::int32_t k = 0; k < n.n_args; ++k) {
          const Ref part = args_[n.args_off + k];
          const double* pv = val_ptr(part);
          double* gp = grads_.data() + nodes_[part].off;
          double dot = 0.0;
          const double wk = wv[k];
          for (int j = 0; j < n.len; ++j) {
            dot += g[j] * pv[j];
            gp[j] += wk * g[j];
          }
          gw[k] += dot;
        }
        break;
      }
      case Op::kDropout: {
        double* ga = grads_.data() + nodes_[n.a].off;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * aux_[n.aux_off + k];
        break;
      }
      case Op::kCrossEntropy: {
        const double p = std::max(val_ptr(n.a)[n.label], kLogFloor);
        grads_[nodes_[n.a].off + n.label] += g[0] * (-1.0 / p);
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  aux_.clear();
  args_.clear();
}

Tape::Ref gru_cell(Tape& t, Tape::Ref input, Tape::Ref hidden, const GruParams& p) {
  Tape::Ref z = t.sigmoid(t.add(t.matvec(*p.update_w, input, p.update_b),
                                t.matvec(*p.update_u, hidden)));
  Tape::Ref r = t.sigmoid(t.add(t.matvec(*p.reset_w, input, p.reset_b),
                                t.matvec(*p.reset_u, hidden)));
  Tape::Ref cand = t.tanh(t.add(t.matvec(*p.cand_w, input, p.cand_b),
                                t.matvec(*p.cand_u, t.hadamard(r, hidden))));
  // (1-z).h + z.cand, written as h + z.(cand - h)
  return t.add(hidden, t.hadamard(z, t.sub(cand, hidden)));
}

}  // namespace dagerc
