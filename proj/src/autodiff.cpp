#include "gibbs/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gibbs/error.hpp"

namespace gibbs {

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) grad = Tensor(value.shape());
  for (auto& g : grad.data()) g = 0.0;
}

const Tensor& Var::value() const { return graph_->value(id_); }

Tensor Var::grad() const {
  if (graph_->has_grad(id_)) return graph_->grad(id_);
  return Tensor(shape());
}

bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (!p.grad.same_shape(p.value)) p.zero_grad();
  Node n;
  n.external = &p.value;
  n.requires_grad = true;
  Parameter* target = &p;
  n.backward = [target](Graph& g, std::size_t self) {
    auto src = g.grad(self).data();
    auto dst = target->grad.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  };
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::make(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.graph() != this) throw ContractError("op mixes nodes from different graphs");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Tensor& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw ContractError("backward root belongs to another graph");
  if (!value(root.id()).is_scalar())
    throw ContractError("backward needs a scalar root, got shape " +
                        shape_str(value(root.id()).shape()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad(root.id())[0] = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return g.make(std::move(y), {a}, [ia, deriv](Graph& g, std::size_t self) {
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += go[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = *a.graph();
  Tensor out;
  gemm_nn(a.value(), b.value(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return g.make(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) gemm_nt(go, g.value(ib), g.grad(ia), true);
    if (g.requires_grad(ib)) gemm_tn(g.value(ia), go, g.grad(ib), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = *a.graph();
  Tensor out;
  gemm_nt(a.value(), b.value(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return g.make(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    // C = A B^T: dA = dC B, dB = dC^T A
    if (g.requires_grad(ia)) gemm_nn(go, g.value(ib), g.grad(ia), true);
    if (g.requires_grad(ib)) gemm_tn(go, g.value(ia), g.grad(ib), true);
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (bv.rank() != 1 || bv.size() != c)
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " vs input " +
                         shape_str(xv.shape()));
  Tensor out = xv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) += bv[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return g.make(std::move(out), {x, bias}, [ix, ib, r, c](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ix)) add_into(g.grad(ix), go);
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += go.at(i, j);
    }
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->make(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) add_into(g.grad(ia), go);
    if (g.requires_grad(ib)) add_into(g.grad(ib), go);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->make(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) add_into(g.grad(ia), go);
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->make(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        // split on sign so exp never overflows
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var maxout2(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (c % 2 != 0) throw DimensionError("maxout2 needs an even last extent, got " + std::to_string(c));
  const std::size_t k = c / 2;
  Tensor out({r, k});
  std::vector<unsigned char> pick_second(r * k);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double a = xv.at(i, 2 * j), b = xv.at(i, 2 * j + 1);
      const bool second = b > a;
      pick_second[i * k + j] = second;
      out.at(i, j) = second ? b : a;
    }
  const std::size_t ix = x.id();
  return g.make(std::move(out), {x},
                [ix, r, k, pick = std::move(pick_second)](Graph& g, std::size_t self) {
                  const Tensor& go = g.grad(self);
                  Tensor& gx = g.grad(ix);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < k; ++j)
                      gx.at(i, 2 * j + pick[i * k + j]) += go.at(i, j);
                });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.graph()->make(Tensor::scalar(s), {a}, [ia](Graph& g, std::size_t self) {
    const double go = g.grad(self)[0];
    for (auto& v : g.grad(ia).data()) v += go;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v;
    out[i] = s;
  }
  const std::size_t ia = a.id();
  return a.graph()->make(std::move(out), {a}, [ia, r, c](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += go[i];
  });
}

Var gather_rows(Var x, const std::vector<std::size_t>& rows) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.shape().at(0);
  const std::size_t width = n ? xv.size() / n : 0;
  Shape shape = xv.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw DimensionError("gather_rows index out of range");
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = xv[rows[i] * width + j];
  }
  const std::size_t ix = x.id();
  return x.graph()->make(std::move(out), {x}, [ix, rows, width](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad(ix);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) gx[rows[i] * width + j] += go[i * width + j];
  });
}

Var bce_rows(Var p, const Tensor& x) {
  const Tensor& pv = p.value();
  if (pv.rank() != 2 || !pv.same_shape(x))
    throw DimensionError("bce_rows: prediction " + shape_str(pv.shape()) + " vs target " +
                         shape_str(x.shape()));
  const std::size_t r = pv.rows(), c = pv.cols();
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double q = std::clamp(pv.at(i, j), kProbClamp, 1.0 - kProbClamp);
      const double t = x.at(i, j);
      s -= t * std::log(q) + (1.0 - t) * std::log1p(-q);
    }
    out[i] = s;
  }
  const std::size_t ip = p.id();
  return p.graph()->make(std::move(out), {p}, [ip, x, r, c](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& pv = g.value(ip);
    Tensor& gp = g.grad(ip);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double q = pv.at(i, j);
        if (q <= kProbClamp || q >= 1.0 - kProbClamp) continue;
        const double t = x.at(i, j);
        gp.at(i, j) += go[i] * (-t / q + (1.0 - t) / (1.0 - q));
      }
  });
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& v : row) {
      v = std::exp(v - m);
      z += v;
    }
    for (auto& v : row) v /= z;
  }
  return out;
}

Var softmax_xent_rows(Var logits, const std::vector<int>& labels) {
  const Tensor& lv = logits.value();
  const std::size_t r = lv.rows(), c = lv.cols();
  if (labels.size() != r) throw DimensionError("softmax_xent_rows: one label per row required");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw ContractError("label " + std::to_string(l) + " out of range");
  Tensor prob = softmax_rows(lv);
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    auto row = lv.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    out[i] = m + std::log(z) - row[static_cast<std::size_t>(labels[i])];
  }
  const std::size_t il = logits.id();
  return logits.graph()->make(
      std::move(out), {logits},
      [il, labels, r, c, prob = std::move(prob)](Graph& g, std::size_t self) {
        const Tensor& go = g.grad(self);
        Tensor& gl = g.grad(il);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gl.at(i, j) += go[i] * (prob.at(i, j) - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0));
      });
}

Var batchnorm(Var h, double eps) {
  const Tensor& hv = h.value();
  const std::size_t r = hv.rows(), c = hv.cols();
  if (r < 2) throw ContractError("batchnorm needs at least two rows");
  Tensor out({r, c});
  std::vector<double> inv_scale(c);
  for (std::size_t j = 0; j < c; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < r; ++i) m += hv.at(i, j);
    m /= static_cast<double>(r);
    double v = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      const double d = hv.at(i, j) - m;
      out.at(i, j) = d;
      v += d * d;
    }
    v /= static_cast<double>(r);
    inv_scale[j] = 1.0 / std::sqrt(v + eps);
    for (std::size_t i = 0; i < r; ++i) out.at(i, j) *= inv_scale[j];
  }
  const std::size_t ih = h.id();
  return h.graph()->make(std::move(out), {h},
                         [ih, r, c, inv = std::move(inv_scale)](Graph& g, std::size_t self) {
                           const Tensor& go = g.grad(self);
                           const Tensor& y = g.value(self);
                           Tensor& gh = g.grad(ih);
                           const double n = static_cast<double>(r);
                           for (std::size_t j = 0; j < c; ++j) {
                             double gy = 0.0, gsum = 0.0;
                             for (std::size_t i = 0; i < r; ++i) {
                               gy += go.at(i, j) * y.at(i, j);
                               gsum += go.at(i, j);
                             }
                             gy /= n;
                             gsum /= n;
                             // d = h - mean(h), y = d / s: dL/dd = (g - y mean(g y)) / s
                             for (std::size_t i = 0; i < r; ++i)
                               gh.at(i, j) += inv[j] * (go.at(i, j) - gsum - y.at(i, j) * gy);
                           }
                         });
}

}  // namespace gibbs
