#include "dacl/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "dacl/errors.hpp"

namespace dacl {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_next_seq = 0;

detail::ImplPtr new_impl(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return impl;
}

void check_finite([[maybe_unused]] const std::vector<double>& values, [[maybe_unused]] const char* op) {
#ifdef DACL_CHECK_FINITE
    // NaN and Inf are the values with an all-ones exponent; an OR over that test vectorizes.
    constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
    bool bad = false;
    for (double v : values) bad |= (std::bit_cast<std::uint64_t>(v) & kExponent) == kExponent;
    if (bad) throw std::domain_error(std::string("non-finite value produced by ") + op);
#endif
}

Tensor finish_result(Shape shape, std::vector<double> values, std::vector<detail::ImplPtr> inputs, const char* op,
                     detail::BackwardFn rule) {
    check_finite(values, op);
    bool needs_grad = false;
    if (t_grad_enabled) {
        for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
    }
    auto impl = new_impl(std::move(shape), std::move(values), needs_grad);
    if (needs_grad) {
        auto node = std::make_shared<detail::Node>();
        node->seq = t_next_seq++;
        node->op = op;
        node->inputs = std::move(inputs);
        node->backward = std::move(rule);
        impl->node = std::move(node);
    }
    return Tensor(std::move(impl));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::span<double> detail::TensorImpl::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(new_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    return from(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!impl_) throw ContractError("use of undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for shape " + shape_str(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw std::out_of_range("index out of range for shape " + shape_str(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (impl_->node) throw ContractError("requires_grad can only be changed on leaf tensors");
    impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->ensure_grad(); }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

const char* Tensor::op_name() const { return impl_ && impl_->node ? impl_->node->op : "leaf"; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tape Tape::record(const Tensor& root) {
    Tape tape;
    std::unordered_set<const detail::TensorImpl*> seen;
    std::vector<detail::ImplPtr> stack;
    if (root.impl() && root.impl()->node) stack.push_back(root.impl());
    while (!stack.empty()) {
        auto cur = std::move(stack.back());
        stack.pop_back();
        if (!seen.insert(cur.get()).second) continue;
        for (const auto& in : cur->node->inputs) {
            if (in->node && !seen.count(in.get())) stack.push_back(in);
        }
        tape.outputs_.push_back(std::move(cur));
    }
    std::sort(tape.outputs_.begin(), tape.outputs_.end(),
              [](const auto& a, const auto& b) { return a->node->seq < b->node->seq; });
    return tape;
}

std::size_t Tape::backward(const Tensor& root) const {
    root.impl()->ensure_grad()[0] += 1.0;
    std::size_t visits = 0;
    for (auto it = outputs_.rbegin(); it != outputs_.rend(); ++it) {
        const auto& out = **it;
        ++visits;
        if (out.grad.empty()) continue;  // no gradient reached this node
        out.node->backward(out);
    }
    return visits;
}

BackwardStats backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) throw ContractError("backward() on a loss that is not connected to the tape");
    BackwardStats stats;
    if (!loss.impl()->node) {
        loss.impl()->ensure_grad()[0] += 1.0;
        return stats;
    }
    auto tape = Tape::record(loss);
    stats.nodes = tape.size();
    stats.visits = tape.backward(loss);
    return stats;
}

Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs, const char* op,
                   detail::BackwardFn rule) {
    std::vector<detail::ImplPtr> impls;
    impls.reserve(inputs.size());
    for (const auto& t : inputs) impls.push_back(t.impl());
    return finish_result(std::move(shape), std::move(values), std::move(impls), op, std::move(rule));
}

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs, const char* op,
                   detail::BackwardFn rule) {
    std::vector<detail::ImplPtr> impls;
    impls.reserve(inputs.size());
    for (const auto& t : inputs) impls.push_back(t.impl());
    return finish_result(std::move(shape), std::move(values), std::move(impls), op, std::move(rule));
}

}  // namespace dacl
