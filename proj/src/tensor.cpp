#include "recipeflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

namespace recipeflow::tensor {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
  }
}

std::shared_ptr<detail::Node> make_node(std::vector<int> shape, std::vector<double> value) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

// Marks the result differentiable and returns the tape iff grads must flow.
Tape* trace(const std::shared_ptr<detail::Node>& out,
            std::initializer_list<const detail::Node*> inputs) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  bool any = false;
  for (const detail::Node* in : inputs) {
    if (in && in->requires_grad) any = true;
  }
  if (!any) return nullptr;
  out->requires_grad = true;
  return tape;
}

// ---- matmul kernels (accumulating) ----

// C(m x n) += A(m x k) * B(k x n)
void mm_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = a[l];
      if (av == 0.0) continue;
      const double* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C(m x k) += A(m x n) * B(k x n)^T
void mm_nt_acc(const double* A, const double* B, double* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * n;
    double* c = C + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* b = B + static_cast<size_t>(j) * n;
      double s = 0.0;
      for (int l = 0; l < n; ++l) s += a[l] * b[l];
      c[j] += s;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n)
void mm_tn_acc(const double* A, const double* B, double* C, int k, int m, int n) {
  for (int l = 0; l < m; ++l) {
    const double* a = A + static_cast<size_t>(l) * k;
    const double* b = B + static_cast<size_t>(l) * n;
    for (int i = 0; i < k; ++i) {
      const double av = a[i];
      if (av == 0.0) continue;
      double* c = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

// ---- Tensor ----

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  long long sz = 1;
  for (int d : shape) sz *= d;
  auto n = make_node(std::move(shape), std::vector<double>(sz, 0.0));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  long long sz = 1;
  for (int d : shape) sz *= d;
  auto n = make_node(std::move(shape), std::vector<double>(sz, v));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  long long sz = 1;
  for (int d : shape) sz *= d;
  if (sz != static_cast<long long>(data.size())) {
    throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  }
  auto n = make_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return from_data({1, n}, std::move(v));
}

int Tensor::rows() const {
  require_2d(*this, "rows");
  return node_->shape[0];
}

int Tensor::cols() const {
  require_2d(*this, "cols");
  return node_->shape[1];
}

std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item: tensor has " + std::to_string(size()) + " elements");
  }
  return node_->value[0];
}

double Tensor::operator()(int r, int c) const {
  require_2d(*this, "operator()");
  return node_->value[static_cast<size_t>(r) * node_->shape[1] + c];
}

double& Tensor::at(int r, int c) {
  require_2d(*this, "at");
  return node_->value[static_cast<size_t>(r) * node_->shape[1] + c];
}

// ---- Tape ----

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ArgumentError("backward: loss must be a scalar tensor");
  }
  auto n = loss.node();
  n->ensure_grad();
  n->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- primitive ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  auto out = make_node({m, n}, std::vector<double>(static_cast<size_t>(m) * n, 0.0));
  mm_acc(a.value().data(), b.value().data(), out->value.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  if (Tape* tape = trace(out, {an.get(), bn.get()})) {
    tape->record([an, bn, out, m, k, n] {
      if (out->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        mm_nt_acc(out->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        mm_tn_acc(an->value.data(), out->grad.data(), bn->grad.data(), k, m, n);
      }
    });
  }
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.ndim() == 2 && b.ndim() == 2 && b.shape()[0] == 1 &&
                         a.shape()[1] == b.shape()[1] && a.shape()[0] != 1;
  if (!broadcast && a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  auto out = make_node(a.shape(), a.value());
  if (broadcast) {
    const int rows = a.shape()[0], cols = a.shape()[1];
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) out->value[static_cast<size_t>(r) * cols + c] += b.value()[c];
    }
  } else {
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] += b.value()[i];
  }
  auto an = a.node(), bn = b.node();
  if (Tape* tape = trace(out, {an.get(), bn.get()})) {
    tape->record([an, bn, out, broadcast] {
      if (out->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (broadcast) {
          const int cols = bn->shape[1];
          const int rows = an->shape[0];
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
              bn->grad[c] += out->grad[static_cast<size_t>(r) * cols + c];
            }
          }
        } else {
          for (size_t i = 0; i < out->grad.size(); ++i) bn->grad[i] += out->grad[i];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  auto out = make_node(a.shape(), a.value());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] -= b.value()[i];
  auto an = a.node(), bn = b.node();
  if (Tape* tape = trace(out, {an.get(), bn.get()})) {
    tape->record([an, bn, out] {
      if (out->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) bn->grad[i] -= out->grad[i];
      }
    });
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  auto out = make_node(a.shape(), a.value());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] *= b.value()[i];
  auto an = a.node(), bn = b.node();
  if (Tape* tape = trace(out, {an.get(), bn.get()})) {
    tape->record([an, bn, out] {
      if (out->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) bn->grad[i] += out->grad[i] * an->value[i];
      }
    });
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v *= s;
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, s] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * s;
    });
  }
  return Tensor(out);
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v += s;
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
    });
  }
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch, " + shape_str(p.shape()));
    }
    rows += p.rows();
  }
  auto out = make_node({rows, cols}, std::vector<double>());
  out->value.reserve(static_cast<size_t>(rows) * cols);
  for (const Tensor& p : parts) {
    out->value.insert(out->value.end(), p.value().begin(), p.value().end());
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  bool any = false;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    if (p.requires_grad()) any = true;
  }
  Tape* tape = Tape::active();
  if (tape && any) {
    out->requires_grad = true;
    tape->record([nodes, out] {
      if (out->grad.empty()) return;
      size_t off = 0;
      for (const auto& n : nodes) {
        const size_t len = n->value.size();
        if (n->requires_grad) {
          n->ensure_grad();
          for (size_t i = 0; i < len; ++i) n->grad[i] += out->grad[off + i];
        }
        off += len;
      }
    });
  }
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch, " + shape_str(p.shape()));
    }
    cols += p.cols();
  }
  auto out = make_node({rows, cols}, std::vector<double>(static_cast<size_t>(rows) * cols));
  int coff = 0;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    for (int r = 0; r < rows; ++r) {
      std::memcpy(out->value.data() + static_cast<size_t>(r) * cols + coff,
                  p.value().data() + static_cast<size_t>(r) * pc, sizeof(double) * pc);
    }
    coff += pc;
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  bool any = false;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    if (p.requires_grad()) any = true;
  }
  Tape* tape = Tape::active();
  if (tape && any) {
    out->requires_grad = true;
    tape->record([nodes, out, rows, cols] {
      if (out->grad.empty()) return;
      int coff2 = 0;
      for (const auto& n : nodes) {
        const int pc = n->shape[1];
        if (n->requires_grad) {
          n->ensure_grad();
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < pc; ++c) {
              n->grad[static_cast<size_t>(r) * pc + c] +=
                  out->grad[static_cast<size_t>(r) * cols + coff2 + c];
            }
          }
        }
        coff2 += pc;
      }
    });
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require_2d(a, "slice_rows");
  const int rows = a.rows(), cols = a.cols();
  if (r0 < 0 || r1 > rows || r0 >= r1) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                     ") on " + shape_str(a.shape()));
  }
  auto out = make_node({r1 - r0, cols},
                       std::vector<double>(a.value().begin() + static_cast<size_t>(r0) * cols,
                                           a.value().begin() + static_cast<size_t>(r1) * cols));
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, r0, cols] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        an->grad[static_cast<size_t>(r0) * cols + i] += out->grad[i];
      }
    });
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require_2d(a, "slice_cols");
  const int rows = a.rows(), cols = a.cols();
  if (c0 < 0 || c1 > cols || c0 >= c1) {
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") on " + shape_str(a.shape()));
  }
  const int w = c1 - c0;
  auto out = make_node({rows, w}, std::vector<double>(static_cast<size_t>(rows) * w));
  for (int r = 0; r < rows; ++r) {
    std::memcpy(out->value.data() + static_cast<size_t>(r) * w,
                a.value().data() + static_cast<size_t>(r) * cols + c0, sizeof(double) * w);
  }
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, c0, cols, w, rows] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < w; ++c) {
          an->grad[static_cast<size_t>(r) * cols + c0 + c] +=
              out->grad[static_cast<size_t>(r) * w + c];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const int rows = a.rows(), cols = a.cols();
  auto out = make_node({cols, rows}, std::vector<double>(a.size()));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out->value[static_cast<size_t>(c) * rows + r] = a.value()[static_cast<size_t>(r) * cols + c];
    }
  }
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, rows, cols] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          an->grad[static_cast<size_t>(r) * cols + c] +=
              out->grad[static_cast<size_t>(c) * rows + r];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto out = make_node({1}, {s});
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      const double g = out->grad[0];
      for (double& x : an->grad) x += g;
    });
  }
  return Tensor(out);
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto out = make_node({1}, {s * inv});
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, inv] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      const double g = out->grad[0] * inv;
      for (double& x : an->grad) x += g;
    });
  }
  return Tensor(out);
}

Tensor relu(const Tensor& a) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v = v > 0.0 ? v : 0.0;
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        if (an->value[i] > 0.0) an->grad[i] += out->grad[i];
      }
    });
  }
  return Tensor(out);
}

Tensor sigmoid(const Tensor& a) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v = 1.0 / (1.0 + std::exp(-v));
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        const double y = out->value[i];
        an->grad[i] += out->grad[i] * y * (1.0 - y);
      }
    });
  }
  return Tensor(out);
}

Tensor tanh_t(const Tensor& a) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v = std::tanh(v);
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        const double y = out->value[i];
        an->grad[i] += out->grad[i] * (1.0 - y * y);
      }
    });
  }
  return Tensor(out);
}

Tensor log_t(const Tensor& a) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v = std::log(v);
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        an->grad[i] += out->grad[i] / an->value[i];
      }
    });
  }
  return Tensor(out);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  auto out = make_node(a.shape(), a.value());
  for (double& v : out->value) v = std::min(hi, std::max(lo, v));
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, lo, hi] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        const double x = an->value[i];
        if (x > lo && x < hi) an->grad[i] += out->grad[i];
      }
    });
  }
  return Tensor(out);
}

namespace {

Tensor softmax_impl(const Tensor& a, const std::vector<uint8_t>* keep) {
  require_2d(a, "softmax_rows");
  const int rows = a.rows(), cols = a.cols();
  if (keep && static_cast<long long>(keep->size()) != a.size()) {
    throw ShapeError("masked_softmax_rows: mask length " + std::to_string(keep->size()) +
                     " does not match " + shape_str(a.shape()));
  }
  auto out = make_node(a.shape(), std::vector<double>(a.size(), 0.0));
  for (int r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r) * cols;
    double mx = -1e300;
    bool any = false;
    for (int c = 0; c < cols; ++c) {
      if (keep && !(*keep)[off + c]) continue;
      mx = std::max(mx, a.value()[off + c]);
      any = true;
    }
    if (!any) continue;  // fully masked row stays all-zero
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      if (keep && !(*keep)[off + c]) continue;
      const double e = std::exp(a.value()[off + c] - mx);
      out->value[off + c] = e;
      z += e;
    }
    for (int c = 0; c < cols; ++c) out->value[off + c] /= z;
  }
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, rows, cols] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += out->grad[off + c] * out->value[off + c];
        for (int c = 0; c < cols; ++c) {
          an->grad[off + c] += out->value[off + c] * (out->grad[off + c] - dot);
        }
      }
    });
  }
  return Tensor(out);
}

}  // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_impl(a, nullptr); }

Tensor masked_softmax_rows(const Tensor& a, const std::vector<uint8_t>& keep) {
  return softmax_impl(a, &keep);
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(a, "layer_norm");
  const int rows = a.rows(), cols = a.cols();
  if (gain.ndim() != 2 || gain.shape()[0] != 1 || gain.shape()[1] != cols ||
      bias.shape() != gain.shape()) {
    throw ShapeError("layer_norm: gain/bias must be [1, " + std::to_string(cols) + "]");
  }
  auto out = make_node(a.shape(), std::vector<double>(a.size()));
  std::vector<double> inv_std(rows), mu(rows);
  for (int r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r) * cols;
    double m = 0.0;
    for (int c = 0; c < cols; ++c) m += a.value()[off + c];
    m /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = a.value()[off + c] - m;
      var += d * d;
    }
    var /= cols;
    mu[r] = m;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      const double xh = (a.value()[off + c] - m) * inv_std[r];
      out->value[off + c] = xh * gain.value()[c] + bias.value()[c];
    }
  }
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  if (Tape* tape = trace(out, {an.get(), gn.get(), bn.get()})) {
    tape->record([an, gn, bn, out, rows, cols, mu, inv_std] {
      if (out->grad.empty()) return;
      for (int r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r) * cols;
        // xh_c = (x_c - mu) * inv_std
        if (gn->requires_grad || bn->requires_grad) {
          if (gn->requires_grad) gn->ensure_grad();
          if (bn->requires_grad) bn->ensure_grad();
          for (int c = 0; c < cols; ++c) {
            const double xh = (an->value[off + c] - mu[r]) * inv_std[r];
            if (gn->requires_grad) gn->grad[c] += out->grad[off + c] * xh;
            if (bn->requires_grad) bn->grad[c] += out->grad[off + c];
          }
        }
        if (an->requires_grad) {
          an->ensure_grad();
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double dxh = out->grad[off + c] * gn->value[c];
            const double xh = (an->value[off + c] - mu[r]) * inv_std[r];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
          }
          for (int c = 0; c < cols; ++c) {
            const double dxh = out->grad[off + c] * gn->value[c];
            const double xh = (an->value[off + c] - mu[r]) * inv_std[r];
            an->grad[off + c] +=
                inv_std[r] * (dxh - sum_dxh / cols - xh * sum_dxh_xh / cols);
          }
        }
      }
    });
  }
  return Tensor(out);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup");
  const int vocab = table.rows(), dim = table.cols();
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ShapeError("embedding_lookup: empty id list");
  auto out = make_node({n, dim}, std::vector<double>(static_cast<size_t>(n) * dim));
  for (int r = 0; r < n; ++r) {
    const int id = ids[r];
    if (id < 0 || id >= vocab) {
      throw ArgumentError("embedding_lookup: id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(vocab) + ")");
    }
    std::memcpy(out->value.data() + static_cast<size_t>(r) * dim,
                table.value().data() + static_cast<size_t>(id) * dim, sizeof(double) * dim);
  }
  auto tn = table.node();
  if (Tape* tape = trace(out, {tn.get()})) {
    tape->record([tn, out, ids, dim] {
      if (out->grad.empty()) return;
      tn->ensure_grad();
      for (size_t r = 0; r < ids.size(); ++r) {
        double* dst = tn->grad.data() + static_cast<size_t>(ids[r]) * dim;
        const double* src = out->grad.data() + r * dim;
        for (int c = 0; c < dim; ++c) dst[c] += src[c];
      }
    });
  }
  return Tensor(out);
}

Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ArgumentError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.size());
  auto out = make_node(a.shape(), a.value());
  for (size_t i = 0; i < out->value.size(); ++i) {
    const double m = uniform_real(rng) >= rate ? keep_scale : 0.0;
    (*mask)[i] = m;
    out->value[i] *= m;
  }
  auto an = a.node();
  if (Tape* tape = trace(out, {an.get()})) {
    tape->record([an, out, mask] {
      if (out->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * (*mask)[i];
    });
  }
  return Tensor(out);
}

double uniform_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

double normal_real(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform_real(rng);  // (0, 1]
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  if (hi < lo) throw ArgumentError("uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

// ---- parameters ----

Tensor ParameterStore::create(const std::string& name, std::vector<int> shape,
                              std::mt19937_64& rng, bool xavier, bool trainable) {
  if (has(name)) throw ArgumentError("parameter name not unique: " + name);
  Tensor t = Tensor::zeros(shape, true);
  if (xavier) {
    const double fan_in = shape.size() == 2 ? shape[0] : shape.back();
    const double fan_out = shape.size() == 2 ? shape[1] : shape.back();
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : t.value()) v = (2.0 * uniform_real(rng) - 1.0) * limit;
  }
  params_.push_back({name, t, trainable});
  return t;
}

Tensor ParameterStore::create_zeros(const std::string& name, std::vector<int> shape,
                                    bool trainable) {
  if (has(name)) throw ArgumentError("parameter name not unique: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.push_back({name, t, trainable});
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ArgumentError("unknown parameter: " + name);
}

bool ParameterStore::has(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

std::string params_to_json(const ParameterStore& store) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  auto& jp = j["params"] = nlohmann::ordered_json::object();
  for (const Parameter& p : store.all()) {
    nlohmann::ordered_json e;
    e["shape"] = p.tensor.shape();
    e["data"] = p.tensor.value();
    jp[p.name] = std::move(e);
  }
  return j.dump();
}

void params_from_json(ParameterStore& store, const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw ConfigError("checkpoint: unsupported format_version");
  }
  const auto& jp = j.at("params");
  if (jp.size() != store.all().size()) {
    throw ConfigError("checkpoint: parameter count mismatch (" + std::to_string(jp.size()) +
                      " vs " + std::to_string(store.all().size()) + ")");
  }
  for (Parameter& p : store.all()) {
    if (!jp.contains(p.name)) throw ConfigError("checkpoint: missing parameter " + p.name);
    const auto& e = jp.at(p.name);
    const auto shape = e.at("shape").get<std::vector<int>>();
    if (shape != p.tensor.shape()) {
      throw ConfigError("checkpoint: shape mismatch for " + p.name);
    }
    auto data = e.at("data").get<std::vector<double>>();
    if (data.size() != p.tensor.value().size()) {
      throw ConfigError("checkpoint: data length mismatch for " + p.name);
    }
    p.tensor.value() = std::move(data);
  }
}

// ---- Adam ----

Adam::Adam(double lr_, double beta1, double beta2, double eps)
    : lr(lr_), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterStore& store) {
  auto& params = store.all();
  if (states_.size() < params.size()) states_.resize(params.size());
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    if (!p.trainable || !p.tensor.has_grad()) continue;
    auto& val = p.tensor.value();
    auto& g = p.tensor.grad();
    State& st = states_[pi];
    if (st.m.empty()) {
      st.m.assign(val.size(), 0.0);
      st.v.assign(val.size(), 0.0);
    }
    for (size_t i = 0; i < val.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace recipeflow::tensor
