#include "neurotube/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace nt {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType promote(DType a, DType b) { return (a == DType::f64 || b == DType::f64) ? DType::f64 : DType::f32; }

double round_value(double v, DType dtype) {
    return dtype == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) { impl_->shape = {0}; }

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype) : impl_(std::make_shared<detail::TensorImpl>()) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                             " values");
    }
    impl_->shape = std::move(shape);
    impl_->dtype = dtype;
    impl_->data = std::move(values);
    round_to_dtype();
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), dtype);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return Tensor({}, {value}, dtype); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range");
    return impl_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("tensor: item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw DimensionError("tensor: index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= impl_->shape[axis]) throw DimensionError("tensor: index out of range");
        flat = flat * impl_->shape[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on && impl_->grad.size() != numel()) impl_->grad.assign(numel(), 0.0);
    if (!on) impl_->grad.clear();
    return *this;
}

std::span<double> Tensor::mutable_grad() { return grad_buffer(*this); }

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->dtype); }

Tensor Tensor::to(DType dtype) const { return Tensor(impl_->shape, impl_->data, dtype); }

void Tensor::round_to_dtype() {
    if (impl_->dtype == DType::f32) {
        for (auto& v : impl_->data) v = round_value(v, DType::f32);
    }
}

std::span<double> grad_buffer(const Tensor& t) {
    auto& impl = *t.impl();
    if (impl.grad.size() != impl.data.size()) impl.grad.assign(impl.data.size(), 0.0);
    return impl.grad;
}

bool Graph::should_record(std::initializer_list<const Tensor*> inputs) const {
    if (!enabled_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool Graph::should_record(const std::vector<Tensor>& inputs) const {
    if (!enabled_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void Graph::record(Tensor& output, BackwardFn fn) {
    auto& impl = *output.impl();
    impl.requires_grad = true;
    impl.is_leaf = false;
    nodes_.push_back({output.impl(), std::move(fn)});
}

void backward(Graph& graph, const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    const auto& target = loss.impl();
    auto it = std::find_if(graph.nodes_.rbegin(), graph.nodes_.rend(),
                           [&](const Graph::Node& n) { return n.output == target; });
    if (it == graph.nodes_.rend()) {
        throw ContractError("backward: loss is not an output of this graph");
    }
    grad_buffer(loss)[0] = 1.0;
    for (; it != graph.nodes_.rend(); ++it) {
        // Nodes off the loss's dependency cone never receive a gradient.
        if (it->output->grad.empty()) continue;
        it->fn(it->output->grad);
    }
}

}  // namespace nt
