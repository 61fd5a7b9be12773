#include "dacl/attention.hpp"

#include <cmath>

#include "dacl/errors.hpp"
#include "dacl/ops.hpp"

namespace dacl {

namespace {
constexpr double kMaskedScore = -1e9;
}

Tensor mask_tensor(const std::vector<int>& mask, std::size_t batch, std::size_t seq_len) {
    if (mask.size() != batch * seq_len) throw ShapeError("mask does not have batch x seq_len entries");
    std::vector<double> values(mask.begin(), mask.end());
    return Tensor::from({batch, seq_len}, std::move(values));
}

Tensor attention_bias(const Tensor& mask) {
    if (mask.rank() != 2) throw ShapeError("attention mask must be [B, n], got " + shape_str(mask.shape()));
    std::vector<double> bias(mask.numel());
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = mask.data()[i] != 0.0 ? 0.0 : kMaskedScore;
    return Tensor::from({mask.dim(0), 1, mask.dim(1)}, std::move(bias));
}

Tensor global_context(const Tensor& hidden, const Tensor& mask) {
    if (hidden.rank() != 3 || mask.rank() != 2 || hidden.dim(0) != mask.dim(0) || hidden.dim(1) != mask.dim(1)) {
        throw ShapeError("global_context: hidden " + shape_str(hidden.shape()) + " vs mask " +
                         shape_str(mask.shape()));
    }
    const std::size_t batch = mask.dim(0), n = mask.dim(1);
    std::vector<double> inv_count(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        double live = 0.0;
        for (std::size_t i = 0; i < n; ++i) live += mask.data()[b * n + i];
        if (live < 1.0) throw ContractError("masked mean over a row with no live positions");
        inv_count[b] = 1.0 / live;
    }
    auto summed = sum(mul(hidden, reshape(mask, {batch, n, 1})), 1);
    return mul(summed, Tensor::from({batch, 1}, std::move(inv_count)));
}

HeadGate head_weights(const Tensor& context, const Regulator& regulator) {
    auto hidden = relu(add(matmul(context, regulator.w1), regulator.b1));
    auto logits = add(matmul(hidden, regulator.w2), regulator.b2);
    return HeadGate{softmax(logits, 1)};
}

HeadGate uniform_gate(std::size_t batch, std::size_t n_heads) {
    return HeadGate{Tensor::full({batch, n_heads}, 1.0 / static_cast<double>(n_heads))};
}

Tensor dynamic_mha(const Tensor& hidden, const HeadGate& gate, const AttentionParams& params, const Tensor& bias) {
    const std::size_t n_heads = params.wq.size();
    if (hidden.rank() != 3) throw ShapeError("dynamic_mha expects [B, n, d], got " + shape_str(hidden.shape()));
    const std::size_t batch = hidden.dim(0), d = hidden.dim(2);
    if (n_heads == 0 || params.wk.size() != n_heads || params.wv.size() != n_heads) {
        throw ShapeError("dynamic_mha: inconsistent head parameter counts");
    }
    const std::size_t head_dim = params.wq[0].dim(1);
    if (head_dim * n_heads != d) {
        throw ShapeError("dynamic_mha: " + std::to_string(n_heads) + " heads of width " + std::to_string(head_dim) +
                         " do not tile d=" + std::to_string(d));
    }
    if (gate.alpha.shape() != Shape{batch, n_heads}) {
        throw ShapeError("dynamic_mha: gate " + shape_str(gate.alpha.shape()) + " does not match batch " +
                         std::to_string(batch) + " x heads " + std::to_string(n_heads));
    }
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t i = 0; i < n_heads; ++i) {
        auto q = matmul(hidden, params.wq[i]);
        auto k = matmul(hidden, params.wk[i]);
        auto v = matmul(hidden, params.wv[i]);
        auto scores = add(scale(matmul(q, transpose(k)), score_scale), bias);
        auto head = matmul(softmax(scores, 2), v);
        auto alpha_i = reshape(slice(gate.alpha, 1, i, 1), {batch, 1, 1});
        heads.push_back(mul(head, alpha_i));
    }
    return add(matmul(concat(heads, 2), params.wo), params.bo);
}

std::vector<double> attention_entropy(const HeadGate& gate) {
    const std::size_t batch = gate.alpha.dim(0), h = gate.alpha.dim(1);
    std::vector<double> out(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < h; ++i) {
            const double p = gate.alpha.data()[b * h + i];
            if (p > 0.0) out[b] -= p * std::log(p);
        }
    }
    return out;
}

}  // namespace dacl
