#include "hoigraph/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <limits>

#include "hoigraph/errors.hpp"

namespace hoigraph {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw DomainError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw DomainError("operands recorded on different tapes");
  return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

void require_vector(const Tensor& a, std::string_view op, std::string_view name) {
  if (a.rank() != 1) {
    throw ShapeError(std::string(op) + ": " + std::string(name) + " must be a vector, got " +
                     shape_str(a.shape()));
  }
}

void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  Tensor& slot = t.grad_slot(id);
  double* dst = slot.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < slot.size(); ++i) dst[i] += src[i];
}

double apply_activation(double z, Activation act) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::sigmoid:
      return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return z;
}

// Derivative expressed through the activation output y.
double activation_slope(double y, Activation act) {
  switch (act) {
    case Activation::identity:
      return 1.0;
    case Activation::relu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid:
      return y * (1.0 - y);
  }
  return 1.0;
}

// Output columns [lo, hi) whose input column ox * stride + kj - pad lies in [0, width).
std::pair<std::size_t, std::size_t> valid_columns(std::size_t kj, std::size_t stride, std::size_t pad,
                                                  std::size_t width, std::size_t out_w) {
  const std::size_t lo = kj >= pad ? 0 : (pad - kj + stride - 1) / stride;
  // Largest ox with ox * stride + kj - pad <= width - 1.
  const std::size_t limit = width - 1 + pad;
  const std::size_t hi = limit < kj ? 0 : std::min(out_w, (limit - kj) / stride + 1);
  return {std::min(lo, hi), hi};
}

// Lays each input row out as its stride phases end to end (columns p, p + s,
// p + 2s, ... for p = 0..s-1), so a strided read becomes a contiguous one.
class PhaseLayout {
 public:
  PhaseLayout(std::size_t width, std::size_t stride) : width_(width), stride_(stride), offset_(stride + 1, 0) {
    for (std::size_t p = 0; p < stride; ++p) offset_[p + 1] = offset_[p] + (width > p ? (width - p + stride - 1) / stride : 0);
  }
  // Position within a split row of input column `col`.
  std::size_t locate(std::size_t col) const { return offset_[col % stride_] + col / stride_; }
  void split(const double* x, std::size_t rows, double* out) const {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = x + r * width_;
      double* dst = out + r * width_;
      for (std::size_t p = 0; p < stride_; ++p) {
        for (std::size_t c = p; c < width_; c += stride_) *dst++ = src[c];
      }
    }
  }
  void merge_add(const double* split_rows, std::size_t rows, double* x) const {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = split_rows + r * width_;
      double* dst = x + r * width_;
      for (std::size_t p = 0; p < stride_; ++p) {
        for (std::size_t c = p; c < width_; c += stride_) dst[c] += *src++;
      }
    }
  }

 private:
  std::size_t width_;
  std::size_t stride_;
  std::vector<std::size_t> offset_;
};

// `xs` is the input in PhaseLayout order.
void im2col(const double* xs, const PhaseLayout& layout, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w, double* col) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* dst = col + ((c * k + ki) * k + kj) * plane;
        const auto [lo, hi] = valid_columns(kj, stride, pad, width, out_w);
        const std::size_t start = hi > lo ? layout.locate(lo * stride + kj - pad) : 0;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          double* line = dst + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(line, line + out_w, 0.0);
            continue;
          }
          const double* src = xs + (c * height + static_cast<std::size_t>(iy)) * width + start;
          std::fill(line, line + lo, 0.0);
          std::copy(src, src + (hi - lo), line + lo);
          std::fill(line + hi, line + out_w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into `xs`, which is in PhaseLayout order.
void col2im(const double* col, const PhaseLayout& layout, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w, double* xs) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* src = col + ((c * k + ki) * k + kj) * plane;
        const auto [lo, hi] = valid_columns(kj, stride, pad, width, out_w);
        const std::size_t start = hi > lo ? layout.locate(lo * stride + kj - pad) : 0;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          double* dst = xs + (c * height + static_cast<std::size_t>(iy)) * width + start;
          const double* line = src + oy * out_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox - lo] += line[ox];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(const std::string& name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor grad(value.shape());
  index_.emplace(name, entries_.size());
  names_.push_back(name);
  entries_.push_back({std::move(value), std::move(grad)});
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (std::size_t i = 0; i < entries_.size(); ++i) out.add(names_[i], Tensor(entries_[i].value.shape()));
  return out;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw DomainError("constant: non-finite value");
  Entry e;
  e.op = "constant";
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  return {this, entries_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  entries_.back().op = "variable";
  entries_.back().requires_grad = true;
  return v;
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (bound_store_ != nullptr && bound_store_ != &store) {
    throw DomainError("tape already bound to a different parameter store");
  }
  bound_store_ = &store;
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return {this, it->second};
  Entry e;
  e.op = "param";
  e.ref = &store.value(name);
  e.requires_grad = true;
  e.param_name = name;
  entries_.push_back(std::move(e));
  param_nodes_.emplace(name, entries_.size() - 1);
  return {this, entries_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Entry& e = entries_.at(id);
  return e.ref ? *e.ref : e.value;
}

Tensor Tape::grad(Var v) const {
  const Entry& e = entries_.at(v.id());
  if (e.grad.shape() == value(v.id()).shape() && !e.grad.empty()) return e.grad;
  return Tensor(value(v.id()).shape());
}

Tensor& Tape::grad_slot(std::size_t id) {
  Entry& e = entries_[id];
  if (e.grad.size() != value(id).size() || e.grad.empty()) e.grad = Tensor(value(id).shape());
  return e.grad;
}

Var Tape::push(std::string_view op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  if (!value.all_finite()) throw DomainError(std::string(op) + ": produced a non-finite value");
  Entry e;
  e.op = op;
  e.value = std::move(value);
  e.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) throw DomainError(std::string(op) + ": operand from another tape");
    e.inputs.push_back(in.id());
    e.requires_grad = e.requires_grad || entries_[in.id()].requires_grad;
  }
  if (e.requires_grad) e.backward = std::move(backward);
  entries_.push_back(std::move(e));
  return {this, entries_.size() - 1};
}

const std::vector<double>& Tape::param_transpose(std::size_t id) {
  auto it = transposed_.find(id);
  if (it != transposed_.end()) return it->second;
  const Tensor& w = value(id);
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  std::vector<double> wt(rows * cols);
  for (std::size_t o = 0; o < rows; ++o) {
    for (std::size_t k = 0; k < cols; ++k) wt[k * rows + o] = w[o * cols + k];
  }
  return transposed_.emplace(id, std::move(wt)).first->second;
}

void Tape::propagate(Var loss) {
  if (loss.tape() != this) throw DomainError("backward: loss recorded on another tape");
  if (value(loss.id()).size() != 1) {
    throw DomainError("backward: loss must be scalar, got shape " + shape_str(value(loss.id()).shape()));
  }
  for (auto& e : entries_) e.grad = Tensor();
  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (!e.requires_grad || !e.backward || e.grad.empty()) continue;
    e.backward(*this, e.grad);
  }
}

void backward(Tape& tape, Var loss, ParamStore& params) {
  tape.propagate(loss);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const auto& e = tape.entry(i);
    if (e.param_name.empty() || e.grad.empty()) continue;
    Tensor& slot = params.grad(e.param_name);
    if (slot.shape() != e.grad.shape()) throw ShapeError("gradient shape mismatch for " + e.param_name);
    for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += e.grad[k];
  }
}

std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (k == 0 || k > in + 2 * padding) {
    throw ShapeError("window " + std::to_string(k) + " larger than padded input " + std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// Primitives

namespace ad {

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("add", {a, b}, std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    accumulate(tp, ia, g);
    accumulate(tp, ib, g);
  });
}

Var sum(std::span<const Var> terms) {
  if (terms.empty()) throw DomainError("sum: empty term list");
  Tape& t = tape_of(terms[0]);
  Tensor out = terms[0].value();
  std::vector<std::size_t> ids{terms[0].id()};
  for (std::size_t k = 1; k < terms.size(); ++k) {
    tape_of(terms[0], terms[k]);
    require_same_shape(out, terms[k].value(), "sum");
    const Tensor& v = terms[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    ids.push_back(terms[k].id());
  }
  return t.push("sum", std::vector<Var>(terms.begin(), terms.end()), std::move(out),
                [ids](Tape& tp, const Tensor& g) {
                  for (std::size_t id : ids) accumulate(tp, id, g);
                });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("mul", {a, b}, std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor& va = tp.value(ia);
    const Tensor& vb = tp.value(ib);
    Tensor ga(va.shape()), gb(vb.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * vb[i];
      gb[i] = g[i] * va[i];
    }
    accumulate(tp, ia, ga);
    accumulate(tp, ib, gb);
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t ia = a.id();
  return t.push("scale", {a}, std::move(out), [ia, factor](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.values()) v *= factor;
    accumulate(tp, ia, ga);
  });
}

Var scale_by(Var scalar, Var v) {
  Tape& t = tape_of(scalar, v);
  if (scalar.value().size() != 1) throw ShapeError("scale_by: factor must be scalar, got " + shape_str(scalar.shape()));
  const double s = scalar.value()[0];
  Tensor out = v.value();
  for (auto& x : out.values()) x *= s;
  const std::size_t is = scalar.id(), iv = v.id();
  return t.push("scale_by", {scalar, v}, std::move(out), [is, iv](Tape& tp, const Tensor& g) {
    const Tensor& vv = tp.value(iv);
    const double sv = tp.value(is)[0];
    Tensor gs(tp.value(is).shape());
    Tensor gv(vv.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      gs[0] += g[i] * vv[i];
      gv[i] = g[i] * sv;
    }
    accumulate(tp, is, gs);
    accumulate(tp, iv, gv);
  });
}

Var total(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return t.push("total", {a}, Tensor::scalar(s), [ia](Tape& tp, const Tensor& g) {
    accumulate(tp, ia, Tensor(tp.value(ia).shape(), g[0]));
  });
}

Var activate(Var x, Activation act) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.values()) v = apply_activation(v, act);
  const std::size_t ix = x.id();
  const std::size_t self = t.size();
  return t.push("activate", {x}, std::move(out), [ix, self, act](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(self);
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * activation_slope(y[i], act);
    accumulate(tp, ix, gx);
  });
}

Var linear(Var x, Var weight, Var bias, Activation act) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (w.rank() != 2) throw ShapeError("linear: weight W must be a matrix, got " + shape_str(w.shape()));
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != out_dim) {
    throw ShapeError("linear: bias b " + shape_str(b.shape()) + " does not match W rows " + std::to_string(out_dim));
  }
  std::size_t batch = 1;
  Shape out_shape{out_dim};
  if (xv.rank() == 1) {
    if (xv.dim(0) != in_dim) {
      throw ShapeError("linear: input x " + shape_str(xv.shape()) + " does not match W columns " +
                       std::to_string(in_dim));
    }
  } else if (xv.rank() == 2 && xv.dim(1) == in_dim) {
    batch = xv.dim(0);
    out_shape = {batch, out_dim};
  } else {
    throw ShapeError("linear: input x " + shape_str(xv.shape()) + " does not match W " + shape_str(w.shape()));
  }

  // Each output row is accumulated over the input index in ascending order,
  // so a row's value does not depend on its position in the batch.
  std::vector<double> local;
  const std::vector<double>* wt = nullptr;
  if (t.entry(weight.id()).ref != nullptr) {
    wt = &t.param_transpose(weight.id());
  } else {
    local.resize(in_dim * out_dim);
    for (std::size_t o = 0; o < out_dim; ++o) {
      for (std::size_t k = 0; k < in_dim; ++k) local[k * out_dim + o] = w[o * in_dim + k];
    }
    wt = &local;
  }
  Tensor out(out_shape);
  // k outer keeps one weight row hot across the batch without changing any
  // row's summation order.
  for (std::size_t k = 0; k < in_dim; ++k) {
    const double* col = wt->data() + k * out_dim;
    for (std::size_t r = 0; r < batch; ++r) {
      const double xk = xv[r * in_dim + k];
      double* y = out.data() + r * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) y[o] += xk * col[o];
    }
  }
  for (std::size_t r = 0; r < batch; ++r) {
    double* y = out.data() + r * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) y[o] = apply_activation(y[o] + b[o], act);
  }

  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  const std::size_t self = t.size();
  return t.push("linear", {x, weight, bias}, std::move(out),
                [ix, iw, ib, self, act, batch, in_dim, out_dim](Tape& tp, const Tensor& g) {
                  Tensor dz = g;
                  if (act != Activation::identity) {
                    const Tensor& yv = tp.value(self);
                    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activation_slope(yv[i], act);
                  }
                  const Tensor& wv = tp.value(iw);
                  const Tensor& xv = tp.value(ix);
                  double* gx = tp.requires_grad(ix) ? tp.grad_slot(ix).data() : nullptr;
                  double* gw = tp.requires_grad(iw) ? tp.grad_slot(iw).data() : nullptr;
                  double* gb = tp.requires_grad(ib) ? tp.grad_slot(ib).data() : nullptr;
                  for (std::size_t o = 0; o < out_dim; ++o) {
                    const double* wrow = wv.data() + o * in_dim;
                    for (std::size_t r = 0; r < batch; ++r) {
                      const double d = dz[r * out_dim + o];
                      if (d == 0.0) continue;
                      const double* xr = xv.data() + r * in_dim;
                      if (gx) {
                        double* gxr = gx + r * in_dim;
                        for (std::size_t k = 0; k < in_dim; ++k) gxr[k] += d * wrow[k];
                      }
                      if (gw) {
                        double* gwr = gw + o * in_dim;
                        for (std::size_t k = 0; k < in_dim; ++k) gwr[k] += d * xr[k];
                      }
                      if (gb) gb[o] += d;
                    }
                  }
                });
}

Var concat(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_vector(a.value(), "concat", "first operand");
  require_vector(b.value(), "concat", "second operand");
  const std::size_t na = a.value().size();
  std::vector<double> data(a.value().storage());
  data.insert(data.end(), b.value().storage().begin(), b.value().storage().end());
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t total = data.size();
  Tensor out({total}, std::move(data));
  return t.push("concat", {a, b}, std::move(out), [ia, ib, na](Tape& tp, const Tensor& g) {
    std::span<const double> all = g.values();
    accumulate(tp, ia, Tensor::vector(all.subspan(0, na)));
    accumulate(tp, ib, Tensor::vector(all.subspan(na)));
  });
}

Var softmax(Var v) {
  Tape& t = tape_of(v);
  const Tensor& x = v.value();
  require_vector(x, "softmax", "input");
  if (x.empty()) throw DomainError("softmax: empty input");
  const double peak = *std::max_element(x.values().begin(), x.values().end());
  Tensor out(x.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    z += out[i];
  }
  for (auto& p : out.values()) p /= z;
  const std::size_t iv = v.id();
  const std::size_t self = t.size();
  return t.push("softmax", {v}, std::move(out), [iv, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = y[i] * (g[i] - dot);
    accumulate(tp, iv, gx);
  });
}

Var cosine_similarity(Var a, Var b) {
  constexpr double kMinNorm = 1e-12;
  Tape& t = tape_of(a, b);
  require_vector(a.value(), "cosine_similarity", "a");
  require_same_shape(a.value(), b.value(), "cosine_similarity");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const bool dead = na < kMinNorm || nb < kMinNorm;
  const double cos = dead ? 0.0 : std::clamp(dot / (na * nb), -1.0, 1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("cosine", {a, b}, Tensor::scalar(cos), [ia, ib, dead, na, nb, dot](Tape& tp, const Tensor& g) {
    if (dead) return;
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(ib);
    // Unclamped value keeps the gradient consistent with the smooth function.
    const double c = dot / (na * nb);
    Tensor gx(x.shape()), gy(y.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      gx[i] = g[0] * (y[i] / (na * nb) - c * x[i] / (na * na));
      gy[i] = g[0] * (x[i] / (na * nb) - c * y[i] / (nb * nb));
    }
    accumulate(tp, ia, gx);
    accumulate(tp, ib, gy);
  });
}

Var stack(std::span<const Var> scalars) {
  if (scalars.empty()) throw DomainError("stack: no scalars");
  Tape& t = tape_of(scalars[0]);
  Tensor out({scalars.size()});
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    tape_of(scalars[0], scalars[i]);
    if (scalars[i].value().size() != 1) throw ShapeError("stack: element " + std::to_string(i) + " is not scalar");
    out[i] = scalars[i].value()[0];
    ids.push_back(scalars[i].id());
  }
  return t.push("stack", std::vector<Var>(scalars.begin(), scalars.end()), std::move(out),
                [ids](Tape& tp, const Tensor& g) {
                  for (std::size_t i = 0; i < ids.size(); ++i) accumulate(tp, ids[i], Tensor::scalar(g[i]));
                });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DomainError("stack_rows: no rows");
  Tape& t = tape_of(rows[0]);
  const std::size_t n = rows[0].value().size();
  std::vector<double> data;
  data.reserve(rows.size() * n);
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tape_of(rows[0], rows[i]);
    require_vector(rows[i].value(), "stack_rows", "row");
    if (rows[i].value().size() != n) throw ShapeError("stack_rows: row " + std::to_string(i) + " has a different length");
    data.insert(data.end(), rows[i].value().storage().begin(), rows[i].value().storage().end());
    ids.push_back(rows[i].id());
  }
  Tensor out({rows.size(), n}, std::move(data));
  return t.push("stack_rows", std::vector<Var>(rows.begin(), rows.end()), std::move(out),
                [ids, n](Tape& tp, const Tensor& g) {
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    accumulate(tp, ids[i], Tensor::vector(g.values().subspan(i * n, n)));
                  }
                });
}

Var pick(Var v, std::size_t index) {
  Tape& t = tape_of(v);
  if (index >= v.value().size()) throw ShapeError("pick: index " + std::to_string(index) + " out of range");
  const std::size_t iv = v.id();
  return t.push("pick", {v}, Tensor::scalar(v.value()[index]), [iv, index](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(iv)) return;
    tp.grad_slot(iv)[index] += g[0];
  });
}

Var reduce(ReduceOp op, std::span<const Var> inputs) {
  if (inputs.empty()) throw DomainError("reduce: empty input list");
  Tape& t = tape_of(inputs[0]);
  const Tensor& first = inputs[0].value();
  require_vector(first, "reduce", "input 0");
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    tape_of(inputs[0], inputs[k]);
    require_same_shape(first, inputs[k].value(), "reduce");
  }
  const std::size_t n = first.size();
  Tensor out = first;
  std::vector<std::size_t> argmax(n, 0);
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const Tensor& v = inputs[k].value();
    for (std::size_t i = 0; i < n; ++i) {
      if (op == ReduceOp::max) {
        if (v[i] > out[i]) {
          out[i] = v[i];
          argmax[i] = k;
        }
      } else {
        out[i] += v[i];
      }
    }
  }
  const double count = static_cast<double>(inputs.size());
  if (op == ReduceOp::mean) {
    for (auto& x : out.values()) x /= count;
  }
  std::vector<std::size_t> ids;
  for (const Var& v : inputs) ids.push_back(v.id());
  std::string_view name = op == ReduceOp::max ? "reduce_max" : op == ReduceOp::mean ? "reduce_mean" : "reduce_sum";
  return t.push(name, std::vector<Var>(inputs.begin(), inputs.end()), std::move(out),
                [ids, argmax = std::move(argmax), op, count](Tape& tp, const Tensor& g) {
                  if (op == ReduceOp::max) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const std::size_t src = ids[argmax[i]];
                      if (tp.requires_grad(src)) tp.grad_slot(src)[i] += g[i];
                    }
                    return;
                  }
                  Tensor share = g;
                  if (op == ReduceOp::mean) {
                    for (auto& x : share.values()) x /= count;
                  }
                  for (std::size_t id : ids) accumulate(tp, id, share);
                });
}

Var row(Var matrix, std::size_t index) {
  Tape& t = tape_of(matrix);
  const Tensor& m = matrix.value();
  if (m.rank() != 2 || index >= m.dim(0)) {
    throw ShapeError("row: index " + std::to_string(index) + " invalid for " + shape_str(m.shape()));
  }
  const std::size_t cols = m.dim(1);
  Tensor out = Tensor::vector(m.values().subspan(index * cols, cols));
  const std::size_t im = matrix.id();
  return t.push("row", {matrix}, std::move(out), [im, index, cols](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(im)) return;
    double* dst = tp.grad_slot(im).data() + index * cols;
    for (std::size_t i = 0; i < cols; ++i) dst[i] += g[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return t.push("reshape", {x}, std::move(out), [ix](Tape& tp, const Tensor& g) {
    accumulate(tp, ix, g);  // same element order, only the shape differs
  });
}

Var conv2d(Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding, Activation act) {
  Tape& t = tape_of(input, kernels);
  const bool has_bias = bias.valid();
  if (has_bias) tape_of(input, bias);
  const Tensor& x = input.value();
  const Tensor& k = kernels.value();
  if (k.rank() != 4 || k.dim(2) != k.dim(3)) {
    throw ShapeError("conv2d: kernels must be [Cout, Cin, k, k], got " + shape_str(k.shape()));
  }
  const bool batched = x.rank() == 4;
  if (x.rank() != 3 && !batched) throw ShapeError("conv2d: input must be [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t height = x.dim(batched ? 2 : 1);
  const std::size_t width = x.dim(batched ? 3 : 2);
  const std::size_t cout = k.dim(0), ksize = k.dim(2);
  if (k.dim(1) != cin) {
    throw ShapeError("conv2d: kernels expect " + std::to_string(k.dim(1)) + " input channels, input has " +
                     std::to_string(cin));
  }
  if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != cout)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.value().shape()) + " does not match " + std::to_string(cout) +
                     " output channels");
  }
  const std::size_t out_h = conv_output_size(height, ksize, stride, padding);
  const std::size_t out_w = conv_output_size(width, ksize, stride, padding);
  const std::size_t plane = out_h * out_w;
  const std::size_t patch = cin * ksize * ksize;

  Shape out_shape = batched ? Shape{batch, cout, out_h, out_w} : Shape{cout, out_h, out_w};
  Tensor out(out_shape);
  const std::size_t item = cin * height * width;
  const PhaseLayout layout(width, stride);
  // Columns are rebuilt per item (here and in backward) so the buffers stay in cache.
  std::vector<double> split(item);
  RowMat col(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
  auto kmat = as_matrix(k, cout, patch);
  for (std::size_t b = 0; b < batch; ++b) {
    layout.split(x.data() + b * item, cin * height, split.data());
    im2col(split.data(), layout, cin, height, width, ksize, stride, padding, out_h, out_w, col.data());
    MatMap y(out.data() + b * cout * plane, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
    y.noalias() = kmat * col;
    if (has_bias) {
      y.colwise() += ConstVecMap(bias.value().data(), static_cast<Eigen::Index>(cout));
    }
  }
  if (act != Activation::identity) {
    for (auto& v : out.values()) v = apply_activation(v, act);
  }

  const std::size_t ix = input.id(), ik = kernels.id();
  const std::size_t ib = has_bias ? bias.id() : 0;
  const std::size_t self = t.size();
  std::vector<Var> operands{input, kernels};
  if (has_bias) operands.push_back(bias);
  return t.push("conv2d", std::move(operands), std::move(out),
                [=](Tape& tp, const Tensor& g_out) {
                  const bool want_k = tp.requires_grad(ik);
                  const bool want_b = has_bias && tp.requires_grad(ib);
                  const bool want_x = tp.requires_grad(ix);
                  Tensor masked;
                  if (act != Activation::identity) {
                    const Tensor& yv = tp.value(self);
                    masked = g_out;
                    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= activation_slope(yv[i], act);
                  }
                  const Tensor& g = act != Activation::identity ? masked : g_out;
                  RowMat buf(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
                  std::vector<double> split(item);
                  const Tensor& xv = tp.value(ix);
                  for (std::size_t b = 0; b < batch; ++b) {
                    ConstMatMap gy(g.data() + b * cout * plane, static_cast<Eigen::Index>(cout),
                                   static_cast<Eigen::Index>(plane));
                    if (want_k) {
                      layout.split(xv.data() + b * item, cin * height, split.data());
                      im2col(split.data(), layout, cin, height, width, ksize, stride, padding, out_h, out_w,
                             buf.data());
                      auto gk = as_matrix(tp.grad_slot(ik), cout, patch);
                      gk.noalias() += gy * buf.transpose();
                    }
                    if (want_b) {
                      VecMap gb(tp.grad_slot(ib).data(), static_cast<Eigen::Index>(cout));
                      gb += gy.rowwise().sum();
                    }
                    if (want_x) {
                      buf.noalias() = as_matrix(tp.value(ik), cout, patch).transpose() * gy;
                      std::fill(split.begin(), split.end(), 0.0);
                      col2im(buf.data(), layout, cin, height, width, ksize, stride, padding, out_h, out_w,
                             split.data());
                      layout.merge_add(split.data(), cin * height, tp.grad_slot(ix).data() + b * item);
                    }
                  }
                });
}

Var max_pool2d(Var input, std::size_t window, std::size_t stride) {
  Tape& t = tape_of(input);
  const Tensor& x = input.value();
  const bool batched = x.rank() == 4;
  if (x.rank() != 3 && !batched) throw ShapeError("max_pool2d: input must be [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = batched ? x.dim(0) * x.dim(1) : x.dim(0);
  const std::size_t height = x.dim(x.rank() - 2), width = x.dim(x.rank() - 1);
  const std::size_t out_h = conv_output_size(height, window, stride, 0);
  const std::size_t out_w = conv_output_size(width, window, stride, 0);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  Tensor out(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * height * width;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::size_t best = (oy * stride) * width + ox * stride;
        for (std::size_t wy = 0; wy < window; ++wy) {
          for (std::size_t wx = 0; wx < window; ++wx) {
            const std::size_t at = (oy * stride + wy) * width + ox * stride + wx;
            if (src[at] > src[best]) best = at;
          }
        }
        const std::size_t o = (p * out_h + oy) * out_w + ox;
        out[o] = src[best];
        (*argmax)[o] = p * height * width + best;
      }
    }
  }
  const std::size_t ix = input.id();
  return t.push("max_pool2d", {input}, std::move(out), [ix, argmax](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(ix)) return;
    Tensor& gx = tp.grad_slot(ix);
    for (std::size_t o = 0; o < g.size(); ++o) gx[(*argmax)[o]] += g[o];
  });
}

Var binary_cross_entropy(Var probs, const Tensor& targets, double clamp) {
  Tape& t = tape_of(probs);
  const Tensor& p = probs.value();
  if (p.size() != targets.size()) {
    throw ShapeError("binary_cross_entropy: predictions " + shape_str(p.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  const std::size_t n = p.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::clamp(p[i], clamp, 1.0 - clamp);
    loss -= targets[i] * std::log(c) + (1.0 - targets[i]) * std::log(1.0 - c);
  }
  if (n > 0) loss /= static_cast<double>(n);
  const std::size_t ip = probs.id();
  return t.push("bce", {probs}, Tensor::scalar(loss), [ip, targets, clamp, n](Tape& tp, const Tensor& g) {
    if (n == 0 || !tp.requires_grad(ip)) return;
    const Tensor& pv = tp.value(ip);
    Tensor& gp = tp.grad_slot(ip);
    for (std::size_t i = 0; i < n; ++i) {
      if (pv[i] < clamp || pv[i] > 1.0 - clamp) continue;
      gp[i] += -g[0] * (targets[i] / pv[i] - (1.0 - targets[i]) / (1.0 - pv[i])) / static_cast<double>(n);
    }
  });
}

}  // namespace ad
}  // namespace hoigraph
