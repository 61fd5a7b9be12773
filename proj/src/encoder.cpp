#include "dacl/encoder.hpp"

#include "dacl/errors.hpp"
#include "dacl/ops.hpp"

namespace dacl {

Tensor embed(const Batch& batch, const EmbeddingTables& tables) {
    const std::size_t b = batch.size, n = batch.seq_len;
    if (batch.token_ids.size() != b * n || batch.segment_ids.size() != b * n) {
        throw ShapeError("batch id matrices do not match size x seq_len");
    }
    if (n > tables.position.dim(0)) {
        throw std::out_of_range("sequence length " + std::to_string(n) + " exceeds position table of " +
                                std::to_string(tables.position.dim(0)) + " rows");
    }
    auto tokens = embedding_lookup(tables.token, batch.token_ids, {b, n});
    auto segments = embedding_lookup(tables.segment, batch.segment_ids, {b, n});
    auto positions = slice(tables.position, 0, 0, n);  // [n, d] broadcast over the batch
    return add(add(tokens, positions), segments);
}

Tensor encoder_layer(const Tensor& x, const EncoderLayer& layer, const Tensor& mask, const Tensor& bias,
                     ForwardContext& ctx, HeadGate* gate_out) {
    HeadGate gate = layer.regulator ? head_weights(global_context(x, mask), *layer.regulator)
                                    : uniform_gate(x.dim(0), layer.attention.wq.size());
    auto attended = dynamic_mha(x, gate, layer.attention, bias);
    if (ctx.train) attended = dropout(attended, ctx.dropout, true, *ctx.rng);
    auto h = layer_norm(add(x, attended), layer.ln1_gain, layer.ln1_bias);

    auto ff = relu(add(matmul(h, layer.ffn_w1), layer.ffn_b1));
    ff = add(matmul(ff, layer.ffn_w2), layer.ffn_b2);
    if (ctx.train) ff = dropout(ff, ctx.dropout, true, *ctx.rng);
    if (gate_out) *gate_out = std::move(gate);
    return layer_norm(add(h, ff), layer.ln2_gain, layer.ln2_bias);
}

EncoderOutput encode(const Batch& batch, const EmbeddingTables& tables, const std::vector<EncoderLayer>& layers,
                     ForwardContext& ctx) {
    if (ctx.train && ctx.dropout > 0.0 && ctx.rng == nullptr) {
        throw ContractError("training forward pass needs a dropout generator");
    }
    EncoderOutput out;
    out.mask = mask_tensor(batch.attention_mask, batch.size, batch.seq_len);
    const auto bias = attention_bias(out.mask);
    out.hidden = embed(batch, tables);
    out.gates.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out.hidden = encoder_layer(out.hidden, layers[l], out.mask, bias, ctx, &out.gates[l]);
    }
    return out;
}

// Same masked average as the attention gate's context vector.
Tensor pool_mean(const Tensor& hidden, const Tensor& mask) { return global_context(hidden, mask); }

Tensor pool_cls(const Tensor& hidden) {
    if (hidden.rank() != 3) throw ShapeError("pool_cls expects [B, n, d], got " + shape_str(hidden.shape()));
    return reshape(slice(hidden, 1, 0, 1), {hidden.dim(0), hidden.dim(2)});
}

}  // namespace dacl
