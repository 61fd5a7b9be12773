#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dacl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something is accumulated
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves

    std::span<double> ensure_grad();
};

using ImplPtr = std::shared_ptr<TensorImpl>;

// Receives the output whose grad is complete and pushes it into the inputs.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
    std::uint64_t seq = 0;  // creation order, which is a topological order
    const char* op = "";
    std::vector<ImplPtr> inputs;
    BackwardFn backward;
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// Copies share storage (handle semantics). Values are treated as immutable once an
/// op has consumed them; only parameters are written in place, by the optimizer,
/// between forward passes.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Fresh leaf with copied values and no history.
    Tensor detach() const;

    const char* op_name() const;
    const detail::ImplPtr& impl() const { return impl_; }

   private:
    detail::ImplPtr impl_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

bool grad_enabled();

/// The recorded operations reachable from a root, in topological (creation) order.
class Tape {
   public:
    static Tape record(const Tensor& root);

    std::size_t size() const { return outputs_.size(); }
    const std::vector<detail::ImplPtr>& outputs() const { return outputs_; }

    // Seeds d(root)/d(root) = 1 and runs every backward rule once, newest first.
    // Returns the number of node visits.
    std::size_t backward(const Tensor& root) const;

   private:
    std::vector<detail::ImplPtr> outputs_;
};

struct BackwardStats {
    std::size_t nodes = 0;   // distinct recorded nodes reachable from the loss
    std::size_t visits = 0;  // backward rule invocations
};

/// Populates grad on every requires_grad tensor reachable from a scalar loss.
/// Gradients accumulate into existing grad buffers.
BackwardStats backward(const Tensor& loss);

/// Builds an op output. When grad mode is on and any input requires grad, a node
/// with `rule` is attached; otherwise the result is a plain constant.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   const char* op, detail::BackwardFn rule);
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   const char* op, detail::BackwardFn rule);

}  // namespace dacl
