#include "dgdn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

namespace dgdn {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += "x";
  }
  out += "]";
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

// Tape shared by the attached inputs, nullptr if all are detached.
GradTape* common_tape(std::initializer_list<const Tensor*> ts) {
  GradTape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw TapeError("operation mixes tensors from two different tapes");
    }
  }
  return tape;
}

void axpy(std::span<double> acc, double alpha, std::span<const double> x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += alpha * x[i];
}

}  // namespace

// ----------------------------------------------------------------- Tensor --

std::int64_t numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  Tensor t;
  t.data_ = std::make_shared<std::vector<double>>(numel(shape), value);
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values) {
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("shape " + shape_str(shape) + " expects " + std::to_string(numel(shape)) +
                     " elements, got " + std::to_string(values.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

std::int64_t Tensor::size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

std::span<const double> Tensor::values() const {
  if (!data_) throw Error("values() on an undefined tensor");
  return {data_->data(), data_->size()};
}

std::span<double> Tensor::mutable_values() {
  if (!data_) throw Error("mutable_values() on an undefined tensor");
  // Leaf mutation only; const_cast is confined to this accessor.
  auto* buf = const_cast<std::vector<double>*>(data_.get());
  return {buf->data(), buf->size()};
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() expects a single-element tensor, shape " + shape_str(shape_));
  return (*data_)[0];
}

double Tensor::at(int c, int y, int x) const {
  if (rank() != 3) throw ShapeError("at(c,y,x) expects a rank-3 tensor, shape " + shape_str(shape_));
  const int h = shape_[1], w = shape_[2];
  return (*data_)[(static_cast<std::int64_t>(c) * h + y) * w + x];
}

Tensor Tensor::grad() const {
  if (!on_tape()) throw TapeError("grad() on a detached tensor");
  return tape_->grad_tensor(node_);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

// --------------------------------------------------------------- GradTape --

Tensor GradTape::watch(const Tensor& t, bool trainable) {
  if (!t.defined()) throw TapeError("watch() on an undefined tensor");
  if (t.on_tape()) throw TapeError("watch() on a tensor that is already attached");
  Tensor handle = t.detached();
  handle.tape_ = this;
  handle.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{handle, {}, {}, {}, trainable});
  return handle;
}

Tensor GradTape::record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  for (int id : inputs) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw TapeError("record() input id out of range");
    }
  }
  value.tape_ = this;
  value.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{value, std::move(inputs), std::move(backward), {}, false});
  return value;
}

int GradTape::capture(const Tensor& t) {
  if (t.on_tape()) {
    if (t.tape() != this) throw TapeError("tensor belongs to a different tape");
    return t.node();
  }
  return watch(t, /*trainable=*/false).node();
}

std::span<double> GradTape::grad_of(int node) {
  Node& n = nodes_.at(node);
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return {n.grad.data(), n.grad.size()};
}

Tensor GradTape::grad_tensor(int node) const {
  const Node& n = nodes_.at(node);
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor::from_data(n.value.shape(), n.grad);
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.on_tape() || loss.tape() != this) {
    throw TapeError("backward() needs a loss recorded on this tape");
  }
  if (loss.rank() != 0) throw ShapeError("backward() needs a rank-0 loss");

  for (Node& n : nodes_) n.grad.clear();
  grad_of(loss.node())[0] = 1.0;

  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  // Leaves disconnected from the loss still report an (all-zero) gradient.
  for (Node& n : nodes_) {
    if (n.trainable && n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  }
}

// --------------------------------------------------------------------- ops --

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor value = Tensor::from_data(a.shape(), std::move(out));

  GradTape* tape = common_tape({&a, &b});
  if (!tape) return value;
  const int ia = tape->capture(a), ib = tape->capture(b);
  return tape->record(std::move(value), {ia, ib}, [ia, ib](GradTape& t, int self) {
    auto g = t.grad_of(self);
    axpy(t.grad_of(ia), 1.0, g);
    axpy(t.grad_of(ib), 1.0, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor value = Tensor::from_data(a.shape(), std::move(out));

  GradTape* tape = common_tape({&a, &b});
  if (!tape) return value;
  const int ia = tape->capture(a), ib = tape->capture(b);
  return tape->record(std::move(value), {ia, ib}, [ia, ib](GradTape& t, int self) {
    auto g = t.grad_of(self);
    axpy(t.grad_of(ia), 1.0, g);
    axpy(t.grad_of(ib), -1.0, g);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor value = Tensor::from_data(a.shape(), std::move(out));

  GradTape* tape = common_tape({&a, &b});
  if (!tape) return value;
  const int ia = tape->capture(a), ib = tape->capture(b);
  return tape->record(std::move(value), {ia, ib}, [ia, ib](GradTape& t, int self) {
    auto g = t.grad_of(self);
    auto av = t.value_of(ia).values(), bv = t.value_of(ib).values();
    auto ga = t.grad_of(ia), gb = t.grad_of(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor value = Tensor::scalar(acc);

  GradTape* tape = common_tape({&x});
  if (!tape) return value;
  const int ix = tape->capture(x);
  return tape->record(std::move(value), {ix}, [ix](GradTape& t, int self) {
    const double g = t.grad_of(self)[0];
    auto gx = t.grad_of(ix);
    for (double& v : gx) v += g;
  });
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.rank() != 0) throw ShapeError("scale() expects a rank-0 scale factor");
  const double sv = s.item();
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sv;
  Tensor value = Tensor::from_data(x.shape(), std::move(out));

  GradTape* tape = common_tape({&x, &s});
  if (!tape) return value;
  const int ix = tape->capture(x), is = tape->capture(s);
  return tape->record(std::move(value), {ix, is}, [ix, is](GradTape& t, int self) {
    auto g = t.grad_of(self);
    auto xv = t.value_of(ix).values();
    const double sv = t.value_of(is).values()[0];
    axpy(t.grad_of(ix), sv, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
    t.grad_of(is)[0] += acc;
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor value = Tensor::from_data(x.shape(), std::move(out));

  GradTape* tape = common_tape({&x});
  if (!tape) return value;
  const int ix = tape->capture(x);
  return tape->record(std::move(value), {ix}, [ix](GradTape& t, int self) {
    auto g = t.grad_of(self);
    auto xv = t.value_of(ix).values();
    auto gx = t.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

namespace {

double softplus_value(double z) {
  // For large z, ln(1+exp(z)) = z + ln(1+exp(-z)) avoids overflow.
  return z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Tensor softplus(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_value(xv[i]);
  Tensor value = Tensor::from_data(x.shape(), std::move(out));

  GradTape* tape = common_tape({&x});
  if (!tape) return value;
  const int ix = tape->capture(x);
  return tape->record(std::move(value), {ix}, [ix](GradTape& t, int self) {
    auto g = t.grad_of(self);
    auto xv = t.value_of(ix).values();
    auto gx = t.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * logistic(xv[i]);
  });
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  double acc = 0.0;
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  Tensor value = Tensor::scalar(acc);

  GradTape* tape = common_tape({&a, &b});
  if (!tape) return value;
  const int ia = tape->capture(a), ib = tape->capture(b);
  return tape->record(std::move(value), {ia, ib}, [ia, ib](GradTape& t, int self) {
    const double g = t.grad_of(self)[0];
    auto av = t.value_of(ia).values(), bv = t.value_of(ib).values();
    auto ga = t.grad_of(ia), gb = t.grad_of(ib);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      ga[i] += g * s;
      gb[i] -= g * s;
    }
  });
}

namespace {

// out[o][y][x] = bias[o] + sum_{c,dy,dx} in[c][y+dy-ph][x+dx-pw] * ker[o][c][dy][dx]
void conv2d_forward(std::span<const double> in, int cin, int h, int w,
                    std::span<const double> ker, int cout, int kh, int kw,
                    std::span<const double> bias, std::span<double> out) {
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  for (int o = 0; o < cout; ++o) {
    double* op = out.data() + static_cast<std::int64_t>(o) * h * w;
    for (int i = 0; i < h * w; ++i) op[i] = bias[o];
    for (int c = 0; c < cin; ++c) {
      const double* ip = in.data() + static_cast<std::int64_t>(c) * h * w;
      const double* kp = ker.data() + ((static_cast<std::int64_t>(o) * cin + c) * kh) * kw;
      for (int dy = 0; dy < kh; ++dy) {
        for (int dx = 0; dx < kw; ++dx) {
          const double kv = kp[dy * kw + dx];
          if (kv == 0.0) continue;
          const int y0 = std::max(0, ph - dy), y1 = std::min(h, h + ph - dy);
          const int x0 = std::max(0, pw - dx), x1 = std::min(w, w + pw - dx);
          for (int y = y0; y < y1; ++y) {
            const double* row = ip + (y + dy - ph) * w + (dx - pw);
            double* orow = op + y * w;
            for (int x = x0; x < x1; ++x) orow[x] += kv * row[x];
          }
        }
      }
    }
  }
}

void conv2d_backward(std::span<const double> in, int cin, int h, int w,
                     std::span<const double> ker, int cout, int kh, int kw,
                     std::span<const double> gout, std::span<double> gin,
                     std::span<double> gker, std::span<double> gbias) {
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  for (int o = 0; o < cout; ++o) {
    const double* gp = gout.data() + static_cast<std::int64_t>(o) * h * w;
    double bacc = 0.0;
    for (int i = 0; i < h * w; ++i) bacc += gp[i];
    gbias[o] += bacc;
    for (int c = 0; c < cin; ++c) {
      const double* ip = in.data() + static_cast<std::int64_t>(c) * h * w;
      double* gip = gin.data() + static_cast<std::int64_t>(c) * h * w;
      const std::int64_t kbase = ((static_cast<std::int64_t>(o) * cin + c) * kh) * kw;
      for (int dy = 0; dy < kh; ++dy) {
        for (int dx = 0; dx < kw; ++dx) {
          const double kv = ker[kbase + dy * kw + dx];
          double kacc = 0.0;
          const int y0 = std::max(0, ph - dy), y1 = std::min(h, h + ph - dy);
          const int x0 = std::max(0, pw - dx), x1 = std::min(w, w + pw - dx);
          for (int y = y0; y < y1; ++y) {
            const double* irow = ip + (y + dy - ph) * w + (dx - pw);
            double* girow = gip + (y + dy - ph) * w + (dx - pw);
            const double* grow = gp + y * w;
            for (int x = x0; x < x1; ++x) {
              kacc += grow[x] * irow[x];
              girow[x] += grow[x] * kv;
            }
          }
          gker[kbase + dy * kw + dx] += kacc;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be cin x h x w");
  if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be cout x cin x kh x kw");
  if (bias.rank() != 1) throw ShapeError("conv2d: bias must be rank-1");
  const int cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const int cout = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (kernel.shape()[1] != cin) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.shape()[1]) +
                     " input channels, input has " + std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (bias.shape()[0] != cout) throw ShapeError("conv2d: bias length must equal cout");

  std::vector<double> out(static_cast<std::size_t>(cout) * h * w);
  conv2d_forward(input.values(), cin, h, w, kernel.values(), cout, kh, kw, bias.values(), out);
  Tensor value = Tensor::from_data({cout, h, w}, std::move(out));

  GradTape* tape = common_tape({&input, &kernel, &bias});
  if (!tape) return value;
  const int ii = tape->capture(input), ik = tape->capture(kernel), ib = tape->capture(bias);
  return tape->record(std::move(value), {ii, ik, ib},
                      [ii, ik, ib, cin, h, w, cout, kh, kw](GradTape& t, int self) {
                        auto g = t.grad_of(self);
                        conv2d_backward(t.value_of(ii).values(), cin, h, w,
                                        t.value_of(ik).values(), cout, kh, kw, g,
                                        t.grad_of(ii), t.grad_of(ik), t.grad_of(ib));
                      });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  const int h = parts[0].shape().size() == 3 ? parts[0].shape()[1] : -1;
  const int w = h >= 0 ? parts[0].shape()[2] : -1;
  int channels = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 3) throw ShapeError("concat_channels: parts must be rank-3");
    if (p.shape()[1] != h || p.shape()[2] != w) {
      throw ShapeError("concat_channels: spatial extents differ, " + shape_str(p.shape()) +
                       " vs " + shape_str(parts[0].shape()));
    }
    channels += p.shape()[0];
  }

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(channels) * h * w);
  for (const Tensor& p : parts) {
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  Tensor value = Tensor::from_data({channels, h, w}, std::move(out));

  GradTape* tape = nullptr;
  for (const Tensor& p : parts) {
    GradTape* pt = common_tape({&p});
    if (pt) {
      if (tape && tape != pt) throw TapeError("concat_channels mixes tapes");
      tape = pt;
    }
  }
  if (!tape) return value;

  std::vector<int> ids;
  std::vector<std::int64_t> sizes;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) {
    ids.push_back(tape->capture(p));
    sizes.push_back(p.size());
  }
  return tape->record(std::move(value), ids, [ids, sizes](GradTape& t, int self) {
    auto g = t.grad_of(self);
    std::int64_t offset = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      axpy(t.grad_of(ids[i]), 1.0, g.subspan(offset, sizes[i]));
      offset += sizes[i];
    }
  });
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

}  // namespace dgdn
