#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dacl/errors.hpp"
#include "dacl/ops.hpp"

namespace dacl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using detail::ImplPtr;
using detail::TensorImpl;

// [outer, len, inner] view of a shape around one axis.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) out.push_back(shape[i]);
    }
    if (out.empty()) out.push_back(1);
    return out;
}

// Broadcast of b onto a, resolved per row of a's last dim: row r of a pairs with
// b values starting at offsets[r], advancing by `stride` (0 or 1) along the row.
struct Broadcast {
    std::size_t row_len = 1;
    std::size_t stride = 1;
    std::vector<std::size_t> offsets;
    bool same_shape = false;
};

Broadcast resolve_broadcast(const Shape& a, const Shape& b_in, const char* op) {
    auto fail = [&] {
        throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b_in) + " onto " + shape_str(a));
    };
    if (b_in.size() > a.size()) fail();
    Shape b(a.size() - b_in.size(), 1);
    b.insert(b.end(), b_in.begin(), b_in.end());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (b[i] != a[i] && b[i] != 1) fail();
    }
    Broadcast bc;
    bc.same_shape = (b == a);
    bc.row_len = a.back();
    bc.stride = b.back() == 1 ? 0 : 1;
    if (bc.same_shape) return bc;

    const std::size_t rank = a.size();
    std::vector<std::size_t> b_strides(rank, 0);
    std::size_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
        b_strides[i] = b[i] == 1 ? 0 : acc;
        acc *= b[i];
    }
    const std::size_t rows = shape_numel(a) / bc.row_len;
    bc.offsets.resize(rows);
    std::vector<std::size_t> idx(rank, 0);  // odometer over a's leading dims
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (std::size_t i = 0; i + 1 < rank; ++i) off += idx[i] * b_strides[i];
        bc.offsets[r] = off;
        for (std::size_t i = rank - 1; i-- > 0;) {
            if (++idx[i] < a[i]) break;
            idx[i] = 0;
        }
    }
    return bc;
}

template <typename F>
void for_each_pair(const Broadcast& bc, std::size_t n, F&& f) {
    if (bc.same_shape) {
        for (std::size_t i = 0; i < n; ++i) f(i, i);
        return;
    }
    for (std::size_t r = 0; r < bc.offsets.size(); ++r) {
        const std::size_t base = r * bc.row_len;
        const std::size_t off = bc.offsets[r];
        for (std::size_t j = 0; j < bc.row_len; ++j) f(base + j, off + j * bc.stride);
    }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
    const auto& x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, name, [ai, deriv](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * deriv(ai->data[i], o.data[i]);
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    auto fail = [&] { throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb)); };
    if (sa.size() < 2 || sb.size() < 2) fail();
    const std::size_t m = sa[sa.size() - 2], k = sa.back();
    const std::size_t kb = sb[sb.size() - 2], n = sb.back();
    if (k != kb) fail();

    const bool shared_rhs = sb.size() == 2;
    std::size_t batch = 1;
    if (!shared_rhs) {
        if (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) fail();
        for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
    }
    // A shared right operand folds a's leading dims into rows.
    const std::size_t rows = shared_rhs ? shape_numel(sa) / k : m;

    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(shape_numel(out_shape));
    for (std::size_t t = 0; t < batch; ++t) {
        ConstMatMap A(a.data().data() + t * rows * k, rows, k);
        ConstMatMap B(b.data().data() + t * k * n, k, n);
        MatMap C(out.data() + t * rows * n, rows, n);
        C.noalias() = A * B;
    }
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(std::move(out_shape), std::move(out), {a, b}, "matmul",
                       [ai, bi, batch, rows, k, n](const TensorImpl& o) {
                           for (std::size_t t = 0; t < batch; ++t) {
                               ConstMatMap G(o.grad.data() + t * rows * n, rows, n);
                               if (ai->requires_grad) {
                                   ConstMatMap B(bi->data.data() + t * k * n, k, n);
                                   MatMap GA(ai->ensure_grad().data() + t * rows * k, rows, k);
                                   GA.noalias() += G * B.transpose();
                               }
                               if (bi->requires_grad) {
                                   ConstMatMap A(ai->data.data() + t * rows * k, rows, k);
                                   MatMap GB(bi->ensure_grad().data() + t * k * n, k, n);
                                   GB.noalias() += A.transpose() * G;
                               }
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    auto bc = resolve_broadcast(a.shape(), b.shape(), "add");
    const auto& x = a.data();
    const auto& y = b.data();
    std::vector<double> out(x.size());
    for_each_pair(bc, x.size(), [&](std::size_t i, std::size_t j) { out[i] = x[i] + y[j]; });
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, "add", [ai, bi, bc](const TensorImpl& o) {
        if (ai->requires_grad) {
            auto ga = ai->ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        }
        if (bi->requires_grad) {
            auto gb = bi->ensure_grad();
            for_each_pair(bc, o.grad.size(), [&](std::size_t i, std::size_t j) { gb[j] += o.grad[i]; });
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    auto bc = resolve_broadcast(a.shape(), b.shape(), "sub");
    const auto& x = a.data();
    const auto& y = b.data();
    std::vector<double> out(x.size());
    for_each_pair(bc, x.size(), [&](std::size_t i, std::size_t j) { out[i] = x[i] - y[j]; });
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, "sub", [ai, bi, bc](const TensorImpl& o) {
        if (ai->requires_grad) {
            auto ga = ai->ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        }
        if (bi->requires_grad) {
            auto gb = bi->ensure_grad();
            for_each_pair(bc, o.grad.size(), [&](std::size_t i, std::size_t j) { gb[j] -= o.grad[i]; });
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    auto bc = resolve_broadcast(a.shape(), b.shape(), "mul");
    const auto& x = a.data();
    const auto& y = b.data();
    std::vector<double> out(x.size());
    for_each_pair(bc, x.size(), [&](std::size_t i, std::size_t j) { out[i] = x[i] * y[j]; });
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, "mul", [ai, bi, bc](const TensorImpl& o) {
        if (ai->requires_grad) {
            auto ga = ai->ensure_grad();
            for_each_pair(bc, o.grad.size(), [&](std::size_t i, std::size_t j) { ga[i] += o.grad[i] * bi->data[j]; });
        }
        if (bi->requires_grad) {
            auto gb = bi->ensure_grad();
            for_each_pair(bc, o.grad.size(), [&](std::size_t i, std::size_t j) { gb[j] += o.grad[i] * ai->data[i]; });
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        a, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    ImplPtr ai = a.impl();
    return make_result({1}, {total}, {a}, "sum", [ai](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (auto& g : ga) g += o.grad[0];
    });
}

Tensor sum(const Tensor& a, std::size_t axis) {
    auto s = split_axis(a.shape(), axis);
    const auto& x = a.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t l = 0; l < s.len; ++l)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += x[(o * s.len + l) * s.inner + i];
    ImplPtr ai = a.impl();
    return make_result(drop_axis(a.shape(), axis), std::move(out), {a}, "sum_axis", [ai, s](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t p = 0; p < s.outer; ++p)
            for (std::size_t l = 0; l < s.len; ++l)
                for (std::size_t i = 0; i < s.inner; ++i) ga[(p * s.len + l) * s.inner + i] += o.grad[p * s.inner + i];
    });
}

Tensor mean(const Tensor& a, std::size_t axis) {
    auto n = a.dim(axis);
    return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    auto s = split_axis(a.shape(), axis);
    const auto& x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
                double e = std::exp(x[base + l * s.inner] - mx);
                out[base + l * s.inner] = e;
                total += e;
            }
            for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
        }
    }
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, "softmax", [ai, s](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t p = 0; p < s.outer; ++p) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = p * s.len * s.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < s.len; ++l) {
                    auto k = base + l * s.inner;
                    dot += o.grad[k] * o.data[k];
                }
                for (std::size_t l = 0; l < s.len; ++l) {
                    auto k = base + l * s.inner;
                    ga[k] += o.data[k] * (o.grad[k] - dot);
                }
            }
        }
    });
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
    auto s = split_axis(a.shape(), axis);
    const auto& x = a.data();
    std::vector<double> out(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) total += std::exp(x[base + l * s.inner] - mx);
            out[o * s.inner + i] = mx + std::log(total);
        }
    }
    ImplPtr ai = a.impl();
    return make_result(drop_axis(a.shape(), axis), std::move(out), {a}, "logsumexp", [ai, s](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t p = 0; p < s.outer; ++p) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = p * s.len * s.inner + i;
                const double lse = o.data[p * s.inner + i];
                const double g = o.grad[p * s.inner + i];
                for (std::size_t l = 0; l < s.len; ++l) {
                    auto k = base + l * s.inner;
                    ga[k] += g * std::exp(ai->data[k] - lse);
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    const auto& sa = a.shape();
    if (sa.size() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(sa));
    const std::size_t r = sa[sa.size() - 2], c = sa.back();
    const std::size_t batch = shape_numel(sa) / (r * c);
    Shape out_shape = sa;
    std::swap(out_shape[sa.size() - 2], out_shape.back());
    const auto& x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t t = 0; t < batch; ++t)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[t * r * c + j * r + i] = x[t * r * c + i * c + j];
    ImplPtr ai = a.impl();
    return make_result(std::move(out_shape), std::move(out), {a}, "transpose", [ai, batch, r, c](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t t = 0; t < batch; ++t)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[t * r * c + i * c + j] += o.grad[t * r * c + j * r + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
    }
    ImplPtr ai = a.impl();
    return make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a}, "reshape",
                       [ai](const TensorImpl& o) {
                           auto ga = ai->ensure_grad();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
                       });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    auto s0 = split_axis(first, axis);
    std::vector<std::size_t> lens;
    std::size_t total_len = 0;
    for (const auto& p : parts) {
        const auto& sp = p.shape();
        bool ok = sp.size() == first.size();
        for (std::size_t i = 0; ok && i < sp.size(); ++i) ok = (i == axis) || sp[i] == first[i];
        if (!ok) throw ShapeError("concat: " + shape_str(sp) + " does not match " + shape_str(first));
        lens.push_back(sp[axis]);
        total_len += sp[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = total_len;
    std::vector<double> out(shape_numel(out_shape));
    std::size_t at = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& x = parts[k].data();
        const std::size_t block = lens[k] * s0.inner;
        for (std::size_t o = 0; o < s0.outer; ++o)
            std::copy_n(x.begin() + o * block, block, out.begin() + (o * total_len + at) * s0.inner);
        at += lens[k];
    }
    std::vector<ImplPtr> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    const std::size_t outer = s0.outer, inner = s0.inner;
    return make_result(std::move(out_shape), std::move(out), parts, "concat",
                       [impls, lens, total_len, outer, inner](const TensorImpl& o) {
                           std::size_t at = 0;
                           for (std::size_t k = 0; k < impls.size(); ++k) {
                               const std::size_t block = lens[k] * inner;
                               if (impls[k]->requires_grad) {
                                   auto g = impls[k]->ensure_grad();
                                   for (std::size_t p = 0; p < outer; ++p)
                                       for (std::size_t i = 0; i < block; ++i)
                                           g[p * block + i] += o.grad[(p * total_len + at) * inner + i];
                               }
                               at += lens[k];
                           }
                       });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    auto s = split_axis(a.shape(), axis);
    if (length == 0 || start + length > s.len) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[axis] = length;
    const auto& x = a.data();
    std::vector<double> out(shape_numel(out_shape));
    const std::size_t block = length * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(x.begin() + (o * s.len + start) * s.inner, block, out.begin() + o * block);
    ImplPtr ai = a.impl();
    return make_result(std::move(out_shape), std::move(out), {a}, "slice", [ai, s, start, block](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t p = 0; p < s.outer; ++p)
            for (std::size_t i = 0; i < block; ++i) ga[(p * s.len + start) * s.inner + i] += o.grad[p * block + i];
    });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, const Shape& ids_shape) {
    if (table.rank() != 2) throw ShapeError("embedding table must be rank 2, got " + shape_str(table.shape()));
    if (shape_numel(ids_shape) != ids.size()) {
        throw ShapeError("embedding ids do not fill shape " + shape_str(ids_shape));
    }
    const std::size_t rows = table.dim(0), d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw std::out_of_range("embedding id " + std::to_string(id) + " outside table of " +
                                    std::to_string(rows) + " rows");
        }
    }
    Shape out_shape = ids_shape;
    out_shape.push_back(d);
    std::vector<double> out(ids.size() * d);
    const auto& t = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(t.begin() + static_cast<std::size_t>(ids[i]) * d, d, out.begin() + i * d);
    ImplPtr ti = table.impl();
    std::vector<int> id_copy(ids.begin(), ids.end());
    return make_result(std::move(out_shape), std::move(out), {table}, "embedding_lookup",
                       [ti, id_copy = std::move(id_copy), d](const TensorImpl& o) {
                           auto g = ti->ensure_grad();
                           for (std::size_t i = 0; i < id_copy.size(); ++i) {
                               const std::size_t row = static_cast<std::size_t>(id_copy[i]) * d;
                               for (std::size_t j = 0; j < d; ++j) g[row + j] += o.grad[i * d + j];
                           }
                       });
}

Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
    if (!train || p == 0.0) return a;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(a.numel());
    for (auto& m : mask) m = uniform(rng) < p ? 0.0 : keep_scale;
    const auto& x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, "dropout", [ai, mask = std::move(mask)](const TensorImpl& o) {
        auto ga = ai->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * mask[i];
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d) {
        throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match last dim of " + shape_str(x.shape()));
    }
    if (eps <= 0.0) throw ConfigError("layer_norm eps must be positive");
    const std::size_t rows = x.numel() / d;
    const auto& in = x.data();
    const auto& g = gain.data();
    const auto& b = bias.data();
    std::vector<double> out(in.size());
    std::vector<double> xhat(in.size());
    std::vector<double> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (row[j] - mu) * rstd[r];
            out[r * d + j] = xhat[r * d + j] * g[j] + b[j];
        }
    }
    ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl();
    return make_result(
        x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
        [xi, gi, bi, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](const TensorImpl& o) {
            if (gi->requires_grad) {
                auto gg = gi->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gg[j] += o.grad[r * d + j] * xhat[r * d + j];
            }
            if (bi->requires_grad) {
                auto gb = bi->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += o.grad[r * d + j];
            }
            if (xi->requires_grad) {
                auto gx = xi->ensure_grad();
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = o.grad[r * d + j] * gi->data[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[r * d + j];
                    }
                    mean_dxhat *= inv_d;
                    mean_dxhat_xhat *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = o.grad[r * d + j] * gi->data[j];
                        gx[r * d + j] += rstd[r] * (dxh - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
                    }
                }
            }
        });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("cosine_similarity: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    const auto& x = a.data();
    const auto& y = b.data();
    std::vector<double> out(rows), na(rows), nb(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += x[r * d + j] * y[r * d + j];
            xx += x[r * d + j] * x[r * d + j];
            yy += y[r * d + j] * y[r * d + j];
        }
        na[r] = std::sqrt(xx);
        nb[r] = std::sqrt(yy);
        if (na[r] == 0.0 || nb[r] == 0.0) throw ContractError("cosine_similarity of a zero vector");
        out[r] = dot / (na[r] * nb[r]);
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    if (out_shape.empty()) out_shape.push_back(1);
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(std::move(out_shape), std::move(out), {a, b}, "cosine_similarity",
                       [ai, bi, d, rows, na = std::move(na), nb = std::move(nb)](const TensorImpl& o) {
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double c = o.data[r], g = o.grad[r];
                               const double* x = ai->data.data() + r * d;
                               const double* y = bi->data.data() + r * d;
                               if (ai->requires_grad) {
                                   auto ga = ai->ensure_grad();
                                   for (std::size_t j = 0; j < d; ++j)
                                       ga[r * d + j] += g * (y[j] / (na[r] * nb[r]) - c * x[j] / (na[r] * na[r]));
                               }
                               if (bi->requires_grad) {
                                   auto gb = bi->ensure_grad();
                                   for (std::size_t j = 0; j < d; ++j)
                                       gb[r * d + j] += g * (x[j] / (na[r] * nb[r]) - c * y[j] / (nb[r] * nb[r]));
                               }
                           }
                       });
}

Tensor l2_normalize(const Tensor& a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    const auto& x = a.data();
    std::vector<double> out(x.size()), norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += x[r * d + j] * x[r * d + j];
        norms[r] = std::sqrt(ss);
        if (norms[r] == 0.0) throw ContractError("l2_normalize of a zero vector");
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] / norms[r];
    }
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, "l2_normalize",
                       [ai, d, rows, norms = std::move(norms)](const TensorImpl& o) {
                           auto ga = ai->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < d; ++j) dot += o.grad[r * d + j] * o.data[r * d + j];
                               for (std::size_t j = 0; j < d; ++j)
                                   ga[r * d + j] += (o.grad[r * d + j] - o.data[r * d + j] * dot) / norms[r];
                           }
                       });
}

}  // namespace dacl
