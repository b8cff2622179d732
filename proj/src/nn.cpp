#include "recipeflow/nn.hpp"

#include <cmath>

namespace recipeflow::tensor {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

Tensor linear(const Tensor& x, const Tensor& w) { return matmul(x, w); }

LstmParams make_lstm_params(ParameterStore& store, const std::string& prefix, int input_dim,
                            int hidden, std::mt19937_64& rng) {
  LstmParams p;
  p.w_ih = store.create(prefix + ".w_ih", {input_dim, 4 * hidden}, rng);
  p.w_hh = store.create(prefix + ".w_hh", {hidden, 4 * hidden}, rng);
  p.b = store.create_zeros(prefix + ".b", {1, 4 * hidden});
  for (int c = hidden; c < 2 * hidden; ++c) p.b.value()[c] = 1.0;  // forget gate bias
  return p;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& params) {
  const int hidden = h_prev.cols();
  Tensor z = add(add(matmul(x, params.w_ih), matmul(h_prev, params.w_hh)), params.b);
  Tensor i = sigmoid(slice_cols(z, 0, hidden));
  Tensor f = sigmoid(slice_cols(z, hidden, 2 * hidden));
  Tensor g = tanh_t(slice_cols(z, 2 * hidden, 3 * hidden));
  Tensor o = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh_t(c));
  return {h, c};
}

Tensor bilstm(const Tensor& seq, const LstmParams& fwd, const LstmParams& bwd, int hidden) {
  const int len = seq.rows();
  std::vector<Tensor> h_fwd(len), h_bwd(len);
  Tensor h = Tensor::zeros({1, hidden});
  Tensor c = Tensor::zeros({1, hidden});
  for (int t = 0; t < len; ++t) {
    auto [nh, nc] = lstm_cell(slice_rows(seq, t, t + 1), h, c, fwd);
    h = nh;
    c = nc;
    h_fwd[t] = h;
  }
  h = Tensor::zeros({1, hidden});
  c = Tensor::zeros({1, hidden});
  for (int t = len - 1; t >= 0; --t) {
    auto [nh, nc] = lstm_cell(slice_rows(seq, t, t + 1), h, c, bwd);
    h = nh;
    c = nc;
    h_bwd[t] = h;
  }
  std::vector<Tensor> rows;
  rows.reserve(len);
  for (int t = 0; t < len; ++t) {
    rows.push_back(concat_cols({h_fwd[t], h_bwd[t]}));
  }
  return concat_rows(rows);
}

AttentionParams make_attention_params(ParameterStore& store, const std::string& prefix,
                                      int d_model, std::mt19937_64& rng) {
  AttentionParams p;
  p.w_q = store.create(prefix + ".w_q", {d_model, d_model}, rng);
  p.w_k = store.create(prefix + ".w_k", {d_model, d_model}, rng);
  p.w_v = store.create(prefix + ".w_v", {d_model, d_model}, rng);
  p.w_o = store.create(prefix + ".w_o", {d_model, d_model}, rng);
  return p;
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int n_heads, const AttentionParams& params,
                            const std::vector<uint8_t>* keep, double dropout_rate, bool train,
                            std::mt19937_64* rng) {
  const int d_model = queries.cols();
  if (d_model % n_heads != 0) {
    throw ConfigError("multi_head_attention: n_heads " + std::to_string(n_heads) +
                      " does not divide d_model " + std::to_string(d_model));
  }
  const int dh = d_model / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(queries, params.w_q);
  Tensor k = matmul(keys, params.w_k);
  Tensor v = matmul(values, params.w_v);
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor weights = keep ? masked_softmax_rows(logits, *keep) : softmax_rows(logits);
    if (dropout_rate > 0.0 && train && rng) {
      weights = dropout(weights, dropout_rate, train, *rng);
    }
    heads.push_back(matmul(weights, vh));
  }
  return matmul(concat_cols(heads), params.w_o);
}

Tensor attention_pool(const Tensor& states, const Tensor& query_vec) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(states.cols()));
  // 1 x L weights over the L states
  Tensor logits = scale(matmul(query_vec, transpose(states)), inv_sqrt);
  Tensor alpha = softmax_rows(logits);
  return matmul(alpha, states);
}

Tensor positional_encoding(int n, int d) {
  Tensor pe = Tensor::zeros({n, d});
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < d) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace recipeflow::tensor
