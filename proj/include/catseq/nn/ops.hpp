#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "catseq/nn/autograd.hpp"

namespace catseq::nn {

// All ops treat tensors as row-major matrices; rank-1 tensors act as one row.

Var matmul(const Var& a, const Var& b);
/// y = x W + b, with b broadcast over the rows of x.
Var dense(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
/// Tanh approximation of GELU.
Var gelu(const Var& a);

/// Row j of the result is table[indices[j]].
Var embedding(const Var& table, const std::vector<std::size_t>& indices);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var select_rows(const Var& x, const std::vector<std::size_t>& rows);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x);
/// Scalar sum(x .* weights); weights are constant.
Var weighted_sum(const Var& x, const Tensor& weights);
Var mean_of(const std::vector<Var>& scalars);

/// Boolean visibility matrix, query_len x key_len, row-major.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> visible;

  static AttentionMask full(std::size_t queries, std::size_t keys);
  static AttentionMask causal(std::size_t length);
  bool operator()(std::size_t q, std::size_t k) const { return visible[q * keys + k] != 0; }
};

/// Multi-head scaled dot-product attention. Q and K are split into `heads`
/// column blocks; masked keys get exactly zero weight.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              const AttentionMask* mask = nullptr);

/// Attention weights of one head, (queries x keys); forward only.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, std::size_t head,
                         const AttentionMask* mask = nullptr);

/// Row-wise softmax; forward only.
Tensor softmax_rows(const Tensor& logits);

/// Mean over rows of -sum(t * log softmax(logits)). Targets are rows of
/// (possibly multi-hot normalized) distributions.
Var softmax_cross_entropy(const Var& logits, const Tensor& targets);
Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& target_index);

/// Column range [begin, end) used by grouped_cross_entropy.
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Row r contributes the cross-entropy of logits restricted to ranges[r]
/// against column targets[r]; the result is the mean over rows. Columns
/// outside a row's range get no gradient from that row.
Var grouped_cross_entropy(const Var& logits, const std::vector<ColumnRange>& ranges,
                          const std::vector<std::size_t>& targets);

struct LstmParams {
  Var w_input;      // in x 4H, gate blocks [input, forget, candidate, output]
  Var w_recurrent;  // H x 4H
  Var bias;         // 4H

  std::size_t hidden() const { return w_recurrent.shape()[0]; }
};

struct LstmState {
  Var h;
  Var c;
};

LstmState lstm_zero_state(std::size_t batch, std::size_t hidden);
LstmState lstm_step(const Var& x, const LstmState& prev, const LstmParams& params);

}  // namespace catseq::nn
