#pragma once

#include <cstddef>
#include <vector>

#include "dacl/tensor.hpp"

namespace dacl {

/// Two-layer MLP from the pooled context vector to one logit per head:
/// W2 . relu(W1 . q + b1) + b2.
struct Regulator {
    Tensor w1;  // [d, r]
    Tensor b1;  // [r]
    Tensor w2;  // [r, h]
    Tensor b2;  // [h]
};

/// Per-example head weights; every row lies on the probability simplex.
struct HeadGate {
    Tensor alpha;  // [B, h]
};

/// Multi-head attention projections. Head i owns its own query/key/value maps.
struct AttentionParams {
    std::vector<Tensor> wq;  // h x [d, d_h]
    std::vector<Tensor> wk;
    std::vector<Tensor> wv;
    Tensor wo;  // [d, d]
    Tensor bo;  // [d]
};

/// [B, n] 0/1 tensor built from an int mask.
Tensor mask_tensor(const std::vector<int>& mask, std::size_t batch, std::size_t seq_len);

/// [B, 1, n] additive bias: 0 on live positions, -1e9 on padding.
Tensor attention_bias(const Tensor& mask);

/// Masked mean of token states over live positions: [B, n, d] -> [B, d].
/// Throws ContractError if a row has no live position.
Tensor global_context(const Tensor& hidden, const Tensor& mask);

/// alpha = softmax(regulator(q)) per row.
HeadGate head_weights(const Tensor& context, const Regulator& regulator);

/// Constant 1/h weights, used when the adaptive gate is disabled.
HeadGate uniform_gate(std::size_t batch, std::size_t n_heads);

/// head_i = softmax((H Wq_i)(H Wk_i)^T / sqrt(d_h) + bias)(H Wv_i) * alpha_i;
/// output = concat(head_1..head_h) Wo + bo. Queries, keys and values all come from
/// the token states; the pooled context only drives the gate.
Tensor dynamic_mha(const Tensor& hidden, const HeadGate& gate, const AttentionParams& params, const Tensor& bias);

/// Shannon entropy (nats) of each gate row; ln h at the uniform gate.
std::vector<double> attention_entropy(const HeadGate& gate);

}  // namespace dacl
