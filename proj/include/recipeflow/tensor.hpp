#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "recipeflow/errors.hpp"

namespace recipeflow::tensor {

namespace detail {
struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;

  long long size() const {
    long long s = 1;
    for (int d : shape) s *= d;
    return s;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

// Row-major n-d array of doubles sharing storage; ops recorded on the active
// Tape enable exact reverse-mode gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);  // 1 x n

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  long long size() const { return node_->size(); }
  int rows() const;  // 2-d only
  int cols() const;

  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& grad();  // allocates zeros on first use
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad();

  double item() const;                     // scalar tensors
  double operator()(int r, int c) const;   // 2-d read access
  double& at(int r, int c);

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Records backward closures for one logical forward pass. Thread-confined:
// the active tape is a thread-local set by Tape::Scope.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  // Seeds d(loss)/d(loss) = 1 and runs recorded closures in reverse.
  // Gradients accumulate into .grad buffers until zeroed by the caller.
  void backward(const Tensor& loss);
  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

  static Tape* active();

  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<std::function<void()>> ops_;
};

// ---- primitive ops (forward + tape entry) ----

Tensor matmul(const Tensor& a, const Tensor& b);
// b may match a's shape or be a 1 x cols row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor transpose(const Tensor& a);
Tensor sum(const Tensor& a);   // full reduction to scalar
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax_rows(const Tensor& a);
// keep[r*cols+c] == 0 masks the entry out; fully masked rows yield all-zero
// weights instead of NaN.
Tensor masked_softmax_rows(const Tensor& a, const std::vector<uint8_t>& keep);
// gain/bias are 1 x d rows; normalization is per row of a.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
// Inverted dropout; identity when train is false.
Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937_64& rng);

double uniform_real(std::mt19937_64& rng);                       // [0, 1)
double normal_real(std::mt19937_64& rng);                        // N(0, 1)
int uniform_int(std::mt19937_64& rng, int lo, int hi);           // inclusive

// ---- parameters ----

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

class ParameterStore {
 public:
  // Xavier-uniform init scaled by fan-in/fan-out; pass init_std < 0 for zeros.
  Tensor create(const std::string& name, std::vector<int> shape, std::mt19937_64& rng,
                bool xavier = true, bool trainable = true);
  Tensor create_zeros(const std::string& name, std::vector<int> shape, bool trainable = true);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// Checkpoint payload: {"format_version": 1, "params": {name: {"shape": [...],
// "data": [...]}}}. load_params requires identical names and shapes.
std::string params_to_json(const ParameterStore& store);
void params_from_json(ParameterStore& store, const std::string& json_text);

// ---- optimizer ----

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterStore& store);

  double lr;

 private:
  struct State {
    std::vector<double> m, v;
  };
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<State> states_;
};

}  // namespace recipeflow::tensor
