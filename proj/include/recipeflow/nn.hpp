#pragma once

#include <optional>

#include "recipeflow/tensor.hpp"

namespace recipeflow::tensor {

// y = x W + b; b optional.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w);

struct LstmParams {
  Tensor w_ih;  // input_dim x 4*hidden, gate order i f g o
  Tensor w_hh;  // hidden x 4*hidden
  Tensor b;     // 1 x 4*hidden
};

// Creates w_ih/w_hh Xavier-initialized and b zero except forget gate bias 1.
LstmParams make_lstm_params(ParameterStore& store, const std::string& prefix, int input_dim,
                            int hidden, std::mt19937_64& rng);

// Standard LSTM recurrences; x is 1 x input_dim, h/c are 1 x hidden.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& params);

// seq is L x input_dim; output is L x 2*hidden (forward and backward states
// concatenated per position).
Tensor bilstm(const Tensor& seq, const LstmParams& fwd, const LstmParams& bwd, int hidden);

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // d_model x d_model, no biases
};

AttentionParams make_attention_params(ParameterStore& store, const std::string& prefix,
                                      int d_model, std::mt19937_64& rng);

// Scaled dot-product attention with n_heads; `keep`, when given, is a
// q_rows x kv_rows mask (0 = forbidden). A query with every key masked
// yields a zero context vector. Dropout applies to attention weights.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int n_heads, const AttentionParams& params,
                            const std::vector<uint8_t>* keep = nullptr, double dropout_rate = 0.0,
                            bool train = false, std::mt19937_64* rng = nullptr);

// Pools L x d states into 1 x d with weights softmax(states q^T / sqrt(d)).
Tensor attention_pool(const Tensor& states, const Tensor& query_vec);

// Fixed sinusoidal table, n x d, not trainable.
Tensor positional_encoding(int n, int d);

}  // namespace recipeflow::tensor
