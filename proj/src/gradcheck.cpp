#include "dacl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dacl/ops.hpp"

namespace dacl {

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, double step, double tolerance) {
    GradCheckResult result{name, 0, 0.0, tolerance};
    for (auto& t : inputs) t.zero_grad();
    auto loss = loss_fn();
    backward(loss);

    for (auto& t : inputs) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto values = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double plus = 0.0, minus = 0.0;
            {
                NoGradGuard guard;
                values[i] = saved + step;
                plus = loss_fn().item();
                values[i] = saved - step;
                minus = loss_fn().item();
            }
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * step);
            result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
            ++result.entries;
        }
    }
    return result;
}

namespace {

struct OpCase {
    std::string name;
    // Builds inputs and an op closure for one random trial.
    std::function<void(std::mt19937_64&, std::vector<Tensor>&, std::function<Tensor(const std::vector<Tensor>&)>&)>
        setup;
};

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor::from(shape, std::move(v), true);
}

Tensor normal(const Shape& shape, std::mt19937_64& rng) { return Tensor::randn(shape, 1.0, rng, true); }

// Values bounded away from zero so relu's kink stays out of the difference stencil.
Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng) {
    auto t = normal(shape, rng);
    for (auto& v : t.mutable_data()) v = (v >= 0 ? 1.0 : -1.0) * (0.1 + std::abs(v));
    return t;
}

std::vector<OpCase> op_cases() {
    using Inputs = std::vector<Tensor>;
    using Fn = std::function<Tensor(const Inputs&)>;
    std::vector<OpCase> cases;

    cases.push_back({"matmul", [](auto& rng, Inputs& in, Fn& f) {
                         auto m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                         in = {normal({m, k}, rng), normal({k, n}, rng)};
                         f = [](const Inputs& x) { return matmul(x[0], x[1]); };
                     }});
    cases.push_back({"matmul_batched", [](auto& rng, Inputs& in, Fn& f) {
                         auto b = pick(rng, 1, 3), m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                         if (pick(rng, 0, 1)) {
                             in = {normal({b, m, k}, rng), normal({b, k, n}, rng)};
                         } else {
                             in = {normal({b, m, k}, rng), normal({k, n}, rng)};
                         }
                         f = [](const Inputs& x) { return matmul(x[0], x[1]); };
                     }});
    auto broadcast_pair = [](std::mt19937_64& rng, Inputs& in) {
        auto b = pick(rng, 1, 3), m = pick(rng, 1, 3), n = pick(rng, 1, 4);
        Shape rhs;
        switch (pick(rng, 0, 3)) {
            case 0: rhs = {b, m, n}; break;
            case 1: rhs = {n}; break;
            case 2: rhs = {b, 1, n}; break;
            default: rhs = {b, m, 1}; break;
        }
        in = {normal({b, m, n}, rng), normal(rhs, rng)};
    };
    cases.push_back({"add", [broadcast_pair](auto& rng, Inputs& in, Fn& f) {
                         broadcast_pair(rng, in);
                         f = [](const Inputs& x) { return add(x[0], x[1]); };
                     }});
    cases.push_back({"sub", [broadcast_pair](auto& rng, Inputs& in, Fn& f) {
                         broadcast_pair(rng, in);
                         f = [](const Inputs& x) { return sub(x[0], x[1]); };
                     }});
    cases.push_back({"mul", [broadcast_pair](auto& rng, Inputs& in, Fn& f) {
                         broadcast_pair(rng, in);
                         f = [](const Inputs& x) { return mul(x[0], x[1]); };
                     }});
    cases.push_back({"scale", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)};
                         double c = std::normal_distribution<double>(0.0, 2.0)(rng);
                         f = [c](const Inputs& x) { return scale(x[0], c); };
                     }});
    cases.push_back({"relu", [](auto& rng, Inputs& in, Fn& f) {
                         in = {away_from_zero({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)};
                         f = [](const Inputs& x) { return relu(x[0]); };
                     }});
    cases.push_back({"exp", [](auto& rng, Inputs& in, Fn& f) {
                         in = {uniform({pick(rng, 1, 4), pick(rng, 1, 4)}, -1.0, 1.0, rng)};
                         f = [](const Inputs& x) { return exp(x[0]); };
                     }});
    cases.push_back({"log", [](auto& rng, Inputs& in, Fn& f) {
                         in = {uniform({pick(rng, 1, 4), pick(rng, 1, 4)}, 0.5, 2.0, rng)};
                         f = [](const Inputs& x) { return log(x[0]); };
                     }});
    cases.push_back({"sum", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 1, 4)}, rng)};
                         f = [](const Inputs& x) { return sum(x[0]); };
                     }});
    cases.push_back({"sum_axis", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, rng)};
                         auto axis = pick(rng, 0, 2);
                         f = [axis](const Inputs& x) { return sum(x[0], axis); };
                     }});
    cases.push_back({"mean", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, rng)};
                         auto axis = pick(rng, 0, 2);
                         f = [axis](const Inputs& x) { return mean(x[0], axis); };
                     }});
    cases.push_back({"softmax", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4)}, rng)};
                         auto axis = pick(rng, 0, 2);
                         f = [axis](const Inputs& x) { return softmax(x[0], axis); };
                     }});
    cases.push_back({"logsumexp", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4)}, rng)};
                         auto axis = pick(rng, 0, 2);
                         f = [axis](const Inputs& x) { return logsumexp(x[0], axis); };
                     }});
    cases.push_back({"transpose", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng)};
                         f = [](const Inputs& x) { return transpose(x[0]); };
                     }});
    cases.push_back({"reshape", [](auto& rng, Inputs& in, Fn& f) {
                         auto a = pick(rng, 1, 3), b = pick(rng, 1, 3), c = pick(rng, 1, 3);
                         in = {normal({a, b, c}, rng)};
                         f = [a, b, c](const Inputs& x) { return reshape(x[0], {a * b, c}); };
                     }});
    cases.push_back({"concat", [](auto& rng, Inputs& in, Fn& f) {
                         Shape s0{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
                         auto axis = pick(rng, 0, 2);
                         Shape s1 = s0;
                         s1[axis] = pick(rng, 1, 3);
                         in = {normal(s0, rng), normal(s1, rng)};
                         f = [axis](const Inputs& x) { return concat({x[0], x[1]}, axis); };
                     }});
    cases.push_back({"slice", [](auto& rng, Inputs& in, Fn& f) {
                         Shape s{pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 1, 3)};
                         auto axis = pick(rng, 0, 2);
                         auto start = pick(rng, 0, s[axis] - 1);
                         auto len = pick(rng, 1, s[axis] - start);
                         in = {normal(s, rng)};
                         f = [axis, start, len](const Inputs& x) { return slice(x[0], axis, start, len); };
                     }});
    cases.push_back({"embedding_lookup", [](auto& rng, Inputs& in, Fn& f) {
                         auto rows = pick(rng, 2, 5), d = pick(rng, 1, 4), n = pick(rng, 1, 6);
                         std::vector<int> ids(n);
                         for (auto& id : ids) id = static_cast<int>(pick(rng, 0, rows - 1));
                         in = {normal({rows, d}, rng)};
                         f = [ids, n](const Inputs& x) { return embedding_lookup(x[0], ids, {n}); };
                     }});
    cases.push_back({"dropout", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)};
                         auto seed = rng();
                         // A fresh generator per call pins the mask across the stencil.
                         f = [seed](const Inputs& x) {
                             std::mt19937_64 mask_rng(seed);
                             return dropout(x[0], 0.3, true, mask_rng);
                         };
                     }});
    cases.push_back({"layer_norm", [](auto& rng, Inputs& in, Fn& f) {
                         auto d = pick(rng, 2, 5);
                         auto gain = normal({d}, rng);
                         in = {normal({pick(rng, 1, 3), d}, rng), gain, normal({d}, rng)};
                         f = [](const Inputs& x) { return layer_norm(x[0], x[1], x[2]); };
                     }});
    cases.push_back({"cosine_similarity", [](auto& rng, Inputs& in, Fn& f) {
                         Shape s{pick(rng, 1, 3), pick(rng, 2, 4)};
                         in = {normal(s, rng), normal(s, rng)};
                         f = [](const Inputs& x) { return cosine_similarity(x[0], x[1]); };
                     }});
    cases.push_back({"l2_normalize", [](auto& rng, Inputs& in, Fn& f) {
                         in = {normal({pick(rng, 1, 3), pick(rng, 2, 4)}, rng)};
                         f = [](const Inputs& x) { return l2_normalize(x[0]); };
                     }});
    return cases;
}

}  // namespace

std::vector<GradCheckResult> check_all_ops(std::uint64_t seed, int trials, double tolerance) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheckResult> results;
    for (const auto& c : op_cases()) {
        GradCheckResult worst{c.name, 0, 0.0, tolerance};
        for (int t = 0; t < trials; ++t) {
            std::vector<Tensor> inputs;
            std::function<Tensor(const std::vector<Tensor>&)> op;
            c.setup(rng, inputs, op);
            // Random weights turn the output into a scalar with a generic gradient.
            Tensor probe;
            {
                NoGradGuard guard;
                probe = op(inputs);
            }
            auto weights = Tensor::randn(probe.shape(), 1.0, rng);
            auto r = check_gradients(
                c.name, [&] { return sum(mul(op(inputs), weights)); }, inputs, 1e-5, tolerance);
            worst.entries += r.entries;
            worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
        }
        results.push_back(worst);
    }
    return results;
}

}  // namespace dacl
