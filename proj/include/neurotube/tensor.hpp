#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nt {

// Error taxonomy shared by every module.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
const char* dtype_name(DType dtype);

namespace detail {
struct TensorImpl {
    Shape shape;
    DType dtype = DType::f64;
    // Values are held in double precision. An f32 tensor stores values that
    // are exactly representable as float; every op rounds its output.
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
};
}  // namespace detail

/// Dense row-major N-d array with an optional gradient buffer.
///
/// Copies share storage (handle semantics, like most tensor libraries);
/// use clone() for an independent value.
class Tensor {
  public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, DType dtype = DType::f64);

    static Tensor zeros(Shape shape, DType dtype = DType::f64);
    static Tensor full(Shape shape, double value, DType dtype = DType::f64);
    static Tensor scalar(double value, DType dtype = DType::f64);

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl_->data.size(); }
    DType dtype() const { return impl_->dtype; }

    std::span<const double> data() const { return impl_->data; }
    // Direct write access for initializers and optimizers. Values written
    // into an f32 tensor should be passed through round_to_dtype().
    std::span<double> mutable_data() { return impl_->data; }
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool is_leaf() const { return impl_->is_leaf; }
    /// Marks a leaf as trainable and allocates a zeroed gradient buffer.
    Tensor& set_requires_grad(bool on = true);
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> mutable_grad();
    void zero_grad();

    Tensor clone() const;
    Tensor to(DType dtype) const;
    /// Re-rounds the stored values after external writes.
    void round_to_dtype();

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

DType promote(DType a, DType b);
double round_value(double v, DType dtype);

/// Ordered record of differentiable ops (a tape).
///
/// Nodes are appended in execution order, which is already a topological
/// order; backward() walks them once in reverse. A disabled graph records
/// nothing and is used for inference.
class Graph {
  public:
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    explicit Graph(bool enabled = true) : enabled_(enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph inference() { return Graph(false); }

    bool enabled() const { return enabled_; }
    std::size_t size() const { return nodes_.size(); }

    /// True when an op over `inputs` must be recorded.
    bool should_record(std::initializer_list<const Tensor*> inputs) const;
    bool should_record(const std::vector<Tensor>& inputs) const;
    void record(Tensor& output, BackwardFn fn);

    friend void backward(Graph& graph, const Tensor& loss);

  private:
    struct Node {
        std::shared_ptr<detail::TensorImpl> output;
        BackwardFn fn;
    };
    bool enabled_;
    std::vector<Node> nodes_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate.
void backward(Graph& graph, const Tensor& loss);

/// Gradient buffer of `t`, allocated (zeroed) on first use. For op authors.
std::span<double> grad_buffer(const Tensor& t);

}  // namespace nt
