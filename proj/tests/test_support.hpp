#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "neurotube/ops.hpp"
#include "neurotube/rng.hpp"

namespace nt::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

/// Scalar probe sum(out * weights) with fixed pseudo-random weights, so every
/// output element contributes a distinct sensitivity.
inline Tensor probe(Graph& g, const Tensor& out, std::uint64_t seed = 99) {
    if (out.rank() == 0) return out;
    Rng rng(seed);
    const Tensor w = random_tensor(rng, out.shape(), 0.5, 1.5);
    return ops::sum(g, ops::mul(g, out, w));
}

struct GradCheck {
    double rel_error = 0.0;    // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    double max_abs_error = 0.0;
    double analytic_norm = 0.0;
};

/// Central finite differences of a scalar function of `inputs`, compared
/// against reverse-mode gradients. `fn` must build its result from the given
/// tensors only. With `max_per_input` > 0 only that many evenly spaced
/// entries of each input are perturbed.
inline GradCheck check_gradients(const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& fn,
                                 std::vector<Tensor> inputs, double h = 1e-6, std::size_t max_per_input = 0) {
    for (auto& t : inputs) {
        t.zero_grad();
        t.set_requires_grad(true);
    }
    {
        Graph g;
        const Tensor loss = fn(g, inputs);
        backward(g, loss);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto data = t.mutable_data();
        const std::size_t stride =
            max_per_input == 0 ? 1 : std::max<std::size_t>(1, (data.size() + max_per_input - 1) / max_per_input);
        for (std::size_t i = 0; i < data.size(); i += stride) {
            const double orig = data[i];
            data[i] = orig + h;
            Graph gp = Graph::inference();
            const double fp = fn(gp, inputs).item();
            data[i] = orig - h;
            Graph gm = Graph::inference();
            const double fm = fn(gm, inputs).item();
            data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double d = analytic[i] - numeric;
            diff2 += d * d;
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
            max_abs = std::max(max_abs, std::abs(d));
        }
    }
    GradCheck r;
    r.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    r.max_abs_error = max_abs;
    r.analytic_norm = std::sqrt(a2);
    for (auto& t : inputs) t.set_requires_grad(false);
    return r;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("nt_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace nt::testing
