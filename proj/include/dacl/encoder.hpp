#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "dacl/attention.hpp"
#include "dacl/config.hpp"
#include "dacl/tensor.hpp"
#include "dacl/text.hpp"

namespace dacl {

struct EmbeddingTables {
    Tensor token;     // [V, d]
    Tensor position;  // [max_len, d]
    Tensor segment;   // [2, d]
};

/// Post-norm Transformer layer whose attention sublayer is gated per head.
struct EncoderLayer {
    AttentionParams attention;
    std::optional<Regulator> regulator;  // absent: uniform head weights
    Tensor ln1_gain, ln1_bias;
    Tensor ffn_w1, ffn_b1;  // [d, 4d], [4d]
    Tensor ffn_w2, ffn_b2;  // [4d, d], [d]
    Tensor ln2_gain, ln2_bias;
};

/// Per-call forward settings. Dropout draws come from `rng` only when training.
struct ForwardContext {
    bool train = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;
};

struct EncoderOutput {
    Tensor hidden;               // [B, n, d]
    Tensor mask;                 // [B, n]
    std::vector<HeadGate> gates;  // one per layer
};

/// E = E_token + E_position + E_segment for every position of the batch.
Tensor embed(const Batch& batch, const EmbeddingTables& tables);

/// One layer: gated attention -> residual + layer_norm -> FFN -> residual + layer_norm.
Tensor encoder_layer(const Tensor& x, const EncoderLayer& layer, const Tensor& mask, const Tensor& bias,
                     ForwardContext& ctx, HeadGate* gate_out = nullptr);

/// Embeds the batch and runs it through `layers`.
EncoderOutput encode(const Batch& batch, const EmbeddingTables& tables, const std::vector<EncoderLayer>& layers,
                     ForwardContext& ctx);

/// Mean over live positions; throws ContractError on a row with none.
Tensor pool_mean(const Tensor& hidden, const Tensor& mask);

/// Hidden state at position 0 ([CLS]).
Tensor pool_cls(const Tensor& hidden);

}  // namespace dacl
