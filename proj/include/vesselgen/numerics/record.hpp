#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vesselgen/numerics/ops.hpp"
#include "vesselgen/numerics/tensor.hpp"

namespace vesselgen {

/// Handle to a value inside a computation record.
struct Var {
  std::size_t id = 0;
};

enum class OpKind {
  input,
  parameter,
  elementwise,
  conv2d,
  dense,
  group_norm,
  add_channelwise,
  upsample2x,
  sum,
  mean,
};

template <typename Real>
using GradientMap = std::map<std::string, BasicTensor<Real>>;

/// Ordered log of primitive operations (a tape). Every node refers only to
/// earlier nodes, so the log is topologically sorted by construction and can
/// be replayed from its leaves or differentiated in reverse.
template <typename Real>
class BasicRecord {
 public:
  using TensorT = BasicTensor<Real>;

  struct Node {
    OpKind kind = OpKind::input;
    Elementwise elementwise_op = Elementwise::add;
    std::vector<std::size_t> inputs;
    std::size_t stride = 1, padding = 0, groups = 1;
    double eps = 0.0;
    std::string name;  // parameters only
    bool needs_grad = false;
    TensorT value;
  };

  Var input(TensorT value) {
    Node n;
    n.kind = OpKind::input;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var parameter(std::string name, TensorT value) {
    Node n;
    n.kind = OpKind::parameter;
    n.name = std::move(name);
    n.needs_grad = true;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var apply(Elementwise op, Var a) {
    if (is_binary(op)) throw ShapeError(std::string(to_string(op)) + " is binary");
    Node n = make(OpKind::elementwise, {a.id});
    n.elementwise_op = op;
    n.value = elementwise(op, value(a));
    return push(std::move(n));
  }

  Var apply(Elementwise op, Var a, Var b) {
    Node n = make(OpKind::elementwise, {a.id, b.id});
    n.elementwise_op = op;
    n.value = elementwise(op, value(a), value(b));
    return push(std::move(n));
  }

  Var add(Var a, Var b) { return apply(Elementwise::add, a, b); }
  Var sub(Var a, Var b) { return apply(Elementwise::sub, a, b); }
  Var mul(Var a, Var b) { return apply(Elementwise::mul, a, b); }
  Var exp(Var a) { return apply(Elementwise::exp, a); }
  Var silu(Var a) { return apply(Elementwise::silu, a); }

  Var conv2d(Var x, Var kernel, std::optional<Var> bias, std::size_t stride, std::size_t padding) {
    Node n = make(OpKind::conv2d, {x.id, kernel.id});
    if (bias) n.inputs.push_back(bias->id);
    n.stride = stride;
    n.padding = padding;
    n.value = vesselgen::conv2d(value(x), value(kernel), bias ? &value(*bias) : nullptr, stride,
                                padding);
    return push(std::move(n));
  }

  Var dense(Var x, Var weight, std::optional<Var> bias) {
    Node n = make(OpKind::dense, {x.id, weight.id});
    if (bias) n.inputs.push_back(bias->id);
    n.value = vesselgen::dense(value(x), value(weight), bias ? &value(*bias) : nullptr);
    return push(std::move(n));
  }

  Var group_norm(Var x, Var gain, Var offset, std::size_t groups, double eps = 1e-5) {
    Node n = make(OpKind::group_norm, {x.id, gain.id, offset.id});
    n.groups = groups;
    n.eps = eps;
    n.value = vesselgen::group_norm(value(x), value(gain), value(offset), groups, eps);
    return push(std::move(n));
  }

  Var add_channelwise(Var x, Var v) {
    Node n = make(OpKind::add_channelwise, {x.id, v.id});
    n.value = vesselgen::add_channelwise(value(x), value(v));
    return push(std::move(n));
  }

  Var upsample2x(Var x) {
    Node n = make(OpKind::upsample2x, {x.id});
    n.value = upsample_nearest2x(value(x));
    return push(std::move(n));
  }

  Var sum(Var x) {
    Node n = make(OpKind::sum, {x.id});
    n.value = TensorT::scalar(sum_all(value(x)));
    return push(std::move(n));
  }

  Var mean(Var x) {
    Node n = make(OpKind::mean, {x.id});
    n.value = TensorT::scalar(mean_all(value(x)));
    return push(std::move(n));
  }

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Re-executes every operation from the recorded leaves. The result has
  /// the same node layout; with identical leaves the values are identical.
  BasicRecord replay() const {
    BasicRecord out;
    out.nodes_.reserve(nodes_.size());
    for (const auto& n : nodes_) {
      Node copy = n;
      if (n.kind != OpKind::input && n.kind != OpKind::parameter) copy.value = out.evaluate(n);
      out.nodes_.push_back(std::move(copy));
    }
    return out;
  }

  /// Gradient of a scalar node with respect to every parameter leaf, keyed
  /// by parameter name. Input leaves receive nothing.
  GradientMap<Real> backward(Var loss) const {
    const auto& root = nodes_.at(loss.id);
    if (!root.value.is_scalar()) {
      throw ShapeError("backward needs a scalar loss, got shape " +
                       shape_string(root.value.shape()));
    }
    std::vector<std::vector<Real>> adj(loss.id + 1);
    adj[loss.id] = {Real(1)};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!n.needs_grad || adj[i].empty()) continue;
      propagate(n, adj[i], adj);
      if (n.kind != OpKind::parameter) std::vector<Real>().swap(adj[i]);
    }
    GradientMap<Real> grads;
    for (std::size_t i = 0; i <= loss.id; ++i) {
      const Node& n = nodes_[i];
      if (n.kind != OpKind::parameter) continue;
      std::vector<Real> g = adj[i].empty() ? std::vector<Real>(n.value.size(), Real(0))
                                           : std::move(adj[i]);
      auto [it, fresh] = grads.emplace(n.name, TensorT(n.value.shape(), std::move(g)));
      if (!fresh) throw ParameterError("duplicate parameter name " + n.name);
    }
    return grads;
  }

 private:
  Node make(OpKind kind, std::vector<std::size_t> inputs) const {
    Node n;
    n.kind = kind;
    for (auto id : inputs) {
      if (id >= nodes_.size()) throw IndexError("record input refers to unknown node");
      n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
    }
    n.inputs = std::move(inputs);
    return n;
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const TensorT& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }

  TensorT evaluate(const Node& n) const {
    switch (n.kind) {
      case OpKind::elementwise:
        return n.inputs.size() == 2 ? elementwise(n.elementwise_op, in(n, 0), in(n, 1))
                                    : elementwise(n.elementwise_op, in(n, 0));
      case OpKind::conv2d:
        return vesselgen::conv2d(in(n, 0), in(n, 1), n.inputs.size() > 2 ? &in(n, 2) : nullptr,
                                 n.stride, n.padding);
      case OpKind::dense:
        return vesselgen::dense(in(n, 0), in(n, 1), n.inputs.size() > 2 ? &in(n, 2) : nullptr);
      case OpKind::group_norm:
        return vesselgen::group_norm(in(n, 0), in(n, 1), in(n, 2), n.groups, n.eps);
      case OpKind::add_channelwise: return vesselgen::add_channelwise(in(n, 0), in(n, 1));
      case OpKind::upsample2x: return upsample_nearest2x(in(n, 0));
      case OpKind::sum: return TensorT::scalar(sum_all(in(n, 0)));
      case OpKind::mean: return TensorT::scalar(mean_all(in(n, 0)));
      default: return n.value;
    }
  }

  std::vector<Real>& slot(std::vector<std::vector<Real>>& adj, const Node& n, std::size_t k) const {
    auto& a = adj[n.inputs[k]];
    if (a.empty()) a.assign(nodes_[n.inputs[k]].value.size(), Real(0));
    return a;
  }

  bool wants(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].needs_grad; }

  void propagate(const Node& n, const std::vector<Real>& g,
                 std::vector<std::vector<Real>>& adj) const {
    switch (n.kind) {
      case OpKind::input:
      case OpKind::parameter: return;
      case OpKind::elementwise: return propagate_elementwise(n, g, adj);
      case OpKind::conv2d:
        conv2d_backward<Real>(in(n, 0), in(n, 1), n.stride, n.padding, g,
                              wants(n, 0) ? &slot(adj, n, 0) : nullptr,
                              wants(n, 1) ? &slot(adj, n, 1) : nullptr,
                              n.inputs.size() > 2 && wants(n, 2) ? &slot(adj, n, 2) : nullptr);
        return;
      case OpKind::dense: {
        const auto& x = in(n, 0);
        const auto& w = in(n, 1);
        const std::size_t rows = x.dim(0), in_dim = x.dim(1), out_dim = w.dim(0);
        if (wants(n, 0))
          detail::gemm(false, false, rows, in_dim, out_dim, Real(1), g.data(), w.data(), Real(1),
                       slot(adj, n, 0).data());
        if (wants(n, 1))
          detail::gemm(true, false, out_dim, in_dim, rows, Real(1), g.data(), x.data(), Real(1),
                       slot(adj, n, 1).data());
        if (n.inputs.size() > 2 && wants(n, 2)) {
          auto& gb = slot(adj, n, 2);
          for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = 0.0;
            for (std::size_t r = 0; r < rows; ++r) acc += g[r * out_dim + o];
            gb[o] += Real(acc);
          }
        }
        return;
      }
      case OpKind::group_norm:
        group_norm_backward<Real>(in(n, 0), in(n, 1), n.groups, n.eps, g,
                                  wants(n, 0) ? &slot(adj, n, 0) : nullptr,
                                  wants(n, 1) ? &slot(adj, n, 1) : nullptr,
                                  wants(n, 2) ? &slot(adj, n, 2) : nullptr);
        return;
      case OpKind::add_channelwise: {
        const auto& x = in(n, 0);
        const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
        if (wants(n, 0)) {
          auto& gx = slot(adj, n, 0);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (wants(n, 1)) {
          auto& gv = slot(adj, n, 1);
          for (std::size_t p = 0; p < planes; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += g[p * hw + i];
            gv[p] += Real(acc);
          }
        }
        return;
      }
      case OpKind::upsample2x: {
        if (!wants(n, 0)) return;
        const auto& x = in(n, 0);
        const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        auto& gx = slot(adj, n, 0);
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t i = 0; i < 2 * h; ++i)
            for (std::size_t j = 0; j < 2 * w; ++j)
              gx[(p * h + i / 2) * w + j / 2] += g[(p * 2 * h + i) * 2 * w + j];
        return;
      }
      case OpKind::sum:
      case OpKind::mean: {
        if (!wants(n, 0)) return;
        auto& gx = slot(adj, n, 0);
        const Real scale = n.kind == OpKind::sum ? g[0] : Real(g[0] / double(gx.size()));
        for (auto& v : gx) v += scale;
        return;
      }
    }
  }

  void propagate_elementwise(const Node& n, const std::vector<Real>& g,
                             std::vector<std::vector<Real>>& adj) const {
    const auto& a = in(n, 0);
    if (!is_binary(n.elementwise_op)) {
      if (!wants(n, 0)) return;
      auto& ga = slot(adj, n, 0);
      if (n.elementwise_op == Elementwise::exp) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const Real s = detail::sigmoid(a[i]);
          ga[i] += g[i] * s * (Real(1) + a[i] * (Real(1) - s));
        }
      }
      return;
    }
    const auto& b = in(n, 1);
    const bool scalar_b = b.is_scalar() && !a.is_scalar();
    const Real sign = n.elementwise_op == Elementwise::sub ? Real(-1) : Real(1);
    if (wants(n, 0)) {
      auto& ga = slot(adj, n, 0);
      if (n.elementwise_op == Elementwise::mul) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[scalar_b ? 0 : i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (wants(n, 1)) {
      auto& gb = slot(adj, n, 1);
      if (scalar_b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
          acc += n.elementwise_op == Elementwise::mul ? double(g[i]) * a[i] : sign * g[i];
        gb[0] += Real(acc);
      } else if (n.elementwise_op == Elementwise::mul) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      }
    }
  }

  std::vector<Node> nodes_;
};

using Record = BasicRecord<float>;

}  // namespace vesselgen
