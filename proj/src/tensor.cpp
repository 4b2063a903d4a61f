#include "corefbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace corefbench {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kProbClampLo = 1e-12;
constexpr double kProbClampHi = 1.0 - 1e-12;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

bool track(const TensorPtr& a) { return g_grad_enabled && a->requires_grad; }
bool track(const TensorPtr& a, const TensorPtr& b) {
    return g_grad_enabled && (a->requires_grad || b->requires_grad);
}

}  // namespace

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shp, std::vector<double> vals, bool req_grad)
    : shape(std::move(shp)), values(std::move(vals)), requires_grad(req_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
}

double Tensor::scalar() const {
    if (!is_scalar()) {
        throw ShapeError("scalar: tensor has shape " + shape_str(shape));
    }
    return values[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
}

TensorPtr full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    std::vector<double> v(shape_numel(shape), value);
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

TensorPtr scalar_tensor(double value, bool requires_grad) {
    return make_tensor({1}, {value}, requires_grad);
}

TensorPtr randn(std::vector<std::size_t> shape, std::mt19937_64& rng, double stddev,
                bool requires_grad) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

TensorPtr rand_uniform(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo,
                       double hi, bool requires_grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

// --- elementwise ------------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape,
            "add: shape " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + b->values[i];
    auto out = make_tensor(a->shape, std::move(v), track(a, b));
    if (out->requires_grad) {
        out->parents = {a, b};
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape,
            "sub: shape " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] - b->values[i];
    auto out = make_tensor(a->shape, std::move(v), track(a, b));
    if (out->requires_grad) {
        out->parents = {a, b};
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape,
            "elementwise_mul: shape " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * b->values[i];
    auto out = make_tensor(a->shape, std::move(v), track(a, b));
    if (out->requires_grad) {
        out->parents = {a, b};
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i)
                    a->grad[i] += o->grad[i] * b->values[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i)
                    b->grad[i] += o->grad[i] * a->values[i];
            }
        };
    }
    return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * c;
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, c, o]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += c * o->grad[i];
        };
    }
    return out;
}

TensorPtr add_scalar(const TensorPtr& a, double c) {
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + c;
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

// --- linear algebra ---------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require(a->ndim() == 2, "matmul: left operand must be 2-D, got " + shape_str(a->shape));
    const bool vec_rhs = b->ndim() == 1;
    require(vec_rhs || b->ndim() == 2,
            "matmul: right operand must be 1-D or 2-D, got " + shape_str(b->shape));
    const std::size_t m = a->shape[0];
    const std::size_t k = a->shape[1];
    const std::size_t kb = vec_rhs ? b->shape[0] : b->shape[0];
    const std::size_t n = vec_rhs ? 1 : b->shape[1];
    require(k == kb, "matmul: shape " + shape_str(a->shape) + " x " + shape_str(b->shape));

    std::vector<double> v(m * n, 0.0);
    const double* pa = a->values.data();
    const double* pb = b->values.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            const double* brow = pb + p * n;
            double* vrow = v.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) vrow[j] += aip * brow[j];
        }
    }
    std::vector<std::size_t> out_shape = vec_rhs ? std::vector<std::size_t>{m}
                                                 : std::vector<std::size_t>{m, n};
    auto out = make_tensor(std::move(out_shape), std::move(v), track(a, b));
    if (out->requires_grad) {
        out->parents = {a, b};
        Tensor* o = out.get();
        out->backward_fn = [a, b, o, m, k, n]() {
            const double* g = o->grad.data();
            if (a->requires_grad) {
                // dA = G B^T
                a->ensure_grad();
                const double* pb = b->values.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g[i * n + j];
                        if (gij == 0.0) continue;
                        double* arow = a->grad.data() + i * k;
                        for (std::size_t p = 0; p < k; ++p) arow[p] += gij * pb[p * n + j];
                    }
                }
            }
            if (b->requires_grad) {
                // dB = A^T G
                b->ensure_grad();
                const double* pa = a->values.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = pa[i * k + p];
                        if (aip == 0.0) continue;
                        double* brow = b->grad.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    require(a->ndim() == 2, "transpose: operand must be 2-D, got " + shape_str(a->shape));
    const std::size_t m = a->shape[0];
    const std::size_t n = a->shape[1];
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a->values[i * n + j];
    auto out = make_tensor({n, m}, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, m, n]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) a->grad[i * n + j] += o->grad[j * m + i];
        };
    }
    return out;
}

TensorPtr add_row(const TensorPtr& mat, const TensorPtr& rowv) {
    require(mat->ndim() == 2 && rowv->ndim() == 1 && mat->shape[1] == rowv->shape[0],
            "add_row: shape " + shape_str(mat->shape) + " vs " + shape_str(rowv->shape));
    const std::size_t m = mat->shape[0];
    const std::size_t n = mat->shape[1];
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = mat->values[i * n + j] + rowv->values[j];
    auto out = make_tensor({m, n}, std::move(v), track(mat, rowv));
    if (out->requires_grad) {
        out->parents = {mat, rowv};
        Tensor* o = out.get();
        out->backward_fn = [mat, rowv, o, m, n]() {
            if (mat->requires_grad) {
                mat->ensure_grad();
                for (std::size_t i = 0; i < m * n; ++i) mat->grad[i] += o->grad[i];
            }
            if (rowv->requires_grad) {
                rowv->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) rowv->grad[j] += o->grad[i * n + j];
            }
        };
    }
    return out;
}

// --- shape manipulation -----------------------------------------------------

TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> shape) {
    require(shape_numel(shape) == a->size(),
            "reshape: " + shape_str(a->shape) + " to " + shape_str(shape));
    auto out = make_tensor(std::move(shape), a->values, track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

TensorPtr concat(const TensorPtr& a, const TensorPtr& b) {
    std::vector<double> v;
    v.reserve(a->size() + b->size());
    v.insert(v.end(), a->values.begin(), a->values.end());
    v.insert(v.end(), b->values.begin(), b->values.end());
    auto out = make_tensor({a->size() + b->size()}, std::move(v), track(a, b));
    if (out->requires_grad) {
        out->parents = {a, b};
        Tensor* o = out.get();
        const std::size_t na = a->size();
        out->backward_fn = [a, b, o, na]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < na; ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += o->grad[na + i];
            }
        };
    }
    return out;
}

TensorPtr stack_scalars(const std::vector<TensorPtr>& xs) {
    require(!xs.empty(), "stack_scalars: empty input");
    std::vector<double> v(xs.size());
    bool any_grad = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require(xs[i]->is_scalar(),
                "stack_scalars: element " + std::to_string(i) + " has shape " +
                    shape_str(xs[i]->shape));
        v[i] = xs[i]->values[0];
        any_grad = any_grad || xs[i]->requires_grad;
    }
    auto out = make_tensor({xs.size()}, std::move(v), g_grad_enabled && any_grad);
    if (out->requires_grad) {
        out->parents = xs;
        Tensor* o = out.get();
        auto inputs = xs;
        out->backward_fn = [inputs, o]() {
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                if (!inputs[i]->requires_grad) continue;
                inputs[i]->ensure_grad();
                inputs[i]->grad[0] += o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& mats) {
    require(!mats.empty(), "concat_cols: empty input");
    const std::size_t m = mats[0]->ndim() == 2 ? mats[0]->shape[0] : 0;
    std::size_t total_cols = 0;
    bool any_grad = false;
    for (const auto& t : mats) {
        require(t->ndim() == 2 && t->shape[0] == m,
                "concat_cols: operand " + shape_str(t->shape) + " vs " + shape_str(mats[0]->shape));
        total_cols += t->shape[1];
        any_grad = any_grad || t->requires_grad;
    }
    std::vector<double> v(m * total_cols);
    std::size_t col0 = 0;
    for (const auto& t : mats) {
        const std::size_t n = t->shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                v[i * total_cols + col0 + j] = t->values[i * n + j];
        col0 += n;
    }
    auto out = make_tensor({m, total_cols}, std::move(v), g_grad_enabled && any_grad);
    if (out->requires_grad) {
        out->parents = mats;
        Tensor* o = out.get();
        auto inputs = mats;
        out->backward_fn = [inputs, o, m, total_cols]() {
            std::size_t col0 = 0;
            for (const auto& t : inputs) {
                const std::size_t n = t->shape[1];
                if (t->requires_grad) {
                    t->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            t->grad[i * n + j] += o->grad[i * total_cols + col0 + j];
                }
                col0 += n;
            }
        };
    }
    return out;
}

TensorPtr slice_rows(const TensorPtr& a, std::size_t start, std::size_t count) {
    require(a->ndim() == 2, "slice_rows: operand must be 2-D, got " + shape_str(a->shape));
    require(start + count <= a->shape[0],
            "slice_rows: rows [" + std::to_string(start) + "," + std::to_string(start + count) +
                ") out of " + shape_str(a->shape));
    const std::size_t n = a->shape[1];
    std::vector<double> v(a->values.begin() + static_cast<std::ptrdiff_t>(start * n),
                          a->values.begin() + static_cast<std::ptrdiff_t>((start + count) * n));
    auto out = make_tensor({count, n}, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, start, count, n]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < count * n; ++i) a->grad[start * n + i] += o->grad[i];
        };
    }
    return out;
}

TensorPtr row(const TensorPtr& a, std::size_t index) {
    auto r = slice_rows(a, index, 1);
    return reshape(r, {a->shape[1]});
}

TensorPtr slice_cols(const TensorPtr& a, std::size_t start, std::size_t count) {
    require(a->ndim() == 2, "slice_cols: operand must be 2-D, got " + shape_str(a->shape));
    require(start + count <= a->shape[1],
            "slice_cols: cols [" + std::to_string(start) + "," + std::to_string(start + count) +
                ") out of " + shape_str(a->shape));
    const std::size_t m = a->shape[0];
    const std::size_t n = a->shape[1];
    std::vector<double> v(m * count);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) v[i * count + j] = a->values[i * n + start + j];
    auto out = make_tensor({m, count}, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, start, count, m, n]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < count; ++j)
                    a->grad[i * n + start + j] += o->grad[i * count + j];
        };
    }
    return out;
}

TensorPtr gather(const TensorPtr& a, const std::vector<std::size_t>& indices) {
    require(a->ndim() == 1, "gather: operand must be 1-D, got " + shape_str(a->shape));
    std::vector<double> v(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < a->size(), "gather: index " + std::to_string(indices[i]) +
                                            " out of " + shape_str(a->shape));
        v[i] = a->values[indices[i]];
    }
    auto out = make_tensor({indices.size()}, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        auto idx = indices;
        out->backward_fn = [a, o, idx]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) a->grad[idx[i]] += o->grad[i];
        };
    }
    return out;
}

TensorPtr embedding_rows(const TensorPtr& table, const std::vector<std::size_t>& ids) {
    require(table->ndim() == 2, "embedding_rows: table must be 2-D, got " + shape_str(table->shape));
    const std::size_t d = table->shape[1];
    std::vector<double> v(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] < table->shape[0], "embedding_rows: id " + std::to_string(ids[i]) +
                                              " out of " + shape_str(table->shape));
        std::copy_n(table->values.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    v.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    auto out = make_tensor({ids.size(), d}, std::move(v), track(table));
    if (out->requires_grad) {
        out->parents = {table};
        Tensor* o = out.get();
        auto idx = ids;
        out->backward_fn = [table, o, idx, d]() {
            table->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    table->grad[idx[i] * d + j] += o->grad[i * d + j];
        };
    }
    return out;
}

// --- reductions ---------------------------------------------------------------

TensorPtr mean_axis0(const TensorPtr& a) {
    require(a->ndim() == 2, "mean_over_axis: operand must be 2-D, got " + shape_str(a->shape));
    const std::size_t m = a->shape[0];
    const std::size_t n = a->shape[1];
    require(m > 0, "mean_over_axis: empty axis in " + shape_str(a->shape));
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j] += a->values[i * n + j];
    for (double& x : v) x /= static_cast<double>(m);
    auto out = make_tensor({n}, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, m, n]() {
            a->ensure_grad();
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) a->grad[i * n + j] += o->grad[j] * inv;
        };
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& a) {
    require(a->size() > 0, "mean: empty tensor");
    double s = 0.0;
    for (double x : a->values) s += x;
    auto out = scalar_tensor(s / static_cast<double>(a->size()));
    out->requires_grad = track(a);
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            const double g = o->grad[0] / static_cast<double>(a->size());
            for (double& x : a->grad) x += g;
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& a) {
    double s = 0.0;
    for (double x : a->values) s += x;
    auto out = scalar_tensor(s);
    out->requires_grad = track(a);
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (double& x : a->grad) x += o->grad[0];
        };
    }
    return out;
}

// --- nonlinearities -----------------------------------------------------------

TensorPtr tanh_op(const TensorPtr& a) {
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a->values[i]);
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                a->grad[i] += o->grad[i] * (1.0 - o->values[i] * o->values[i]);
        };
    }
    return out;
}

TensorPtr gelu(const TensorPtr& a) {
    // exact form: 0.5 x (1 + erf(x / sqrt 2))
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = a->values[i];
        v[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                const double x = a->values[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                a->grad[i] += o->grad[i] * (cdf + x * pdf);
            }
        };
    }
    return out;
}

// --- softmax family -------------------------------------------------------------

namespace {

// Rows of a 2-D tensor, or the whole 1-D tensor as a single row.
std::pair<std::size_t, std::size_t> rows_cols_last_axis(const TensorPtr& a) {
    if (a->ndim() == 1) return {1, a->shape[0]};
    if (a->ndim() == 2) return {a->shape[0], a->shape[1]};
    throw ShapeError("softmax: operand must be 1-D or 2-D, got " + shape_str(a->shape));
}

}  // namespace

TensorPtr softmax(const TensorPtr& a) {
    auto [m, n] = rows_cols_last_axis(a);
    require(n > 0, "softmax: empty rows in " + shape_str(a->shape));
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a->values.data() + i * n;
        double* y = v.data() + i * n;
        double mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
    }
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, m, n]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = o->values.data() + i * n;
                const double* g = o->grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
                double* da = a->grad.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) da[j] += y[j] * (g[j] - dot);
            }
        };
    }
    return out;
}

TensorPtr log_softmax(const TensorPtr& a) {
    auto [m, n] = rows_cols_last_axis(a);
    require(n > 0, "log_softmax: empty rows in " + shape_str(a->shape));
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a->values.data() + i * n;
        double* y = v.data() + i * n;
        double mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
    }
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, m, n]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = o->values.data() + i * n;
                const double* g = o->grad.data() + i * n;
                double gsum = 0.0;
                for (std::size_t j = 0; j < n; ++j) gsum += g[j];
                double* da = a->grad.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) da[j] += g[j] - std::exp(y[j]) * gsum;
            }
        };
    }
    return out;
}

TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                     double eps) {
    auto [m, n] = rows_cols_last_axis(a);
    require(gain->ndim() == 1 && gain->shape[0] == n && bias->shape == gain->shape,
            "layer_norm: shape " + shape_str(a->shape) + " with gain " + shape_str(gain->shape) +
                " and bias " + shape_str(bias->shape));
    std::vector<double> v(a->size());
    std::vector<double> xhat(a->size());
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a->values.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<double>(n);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = istd;
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (x[j] - mean) * istd;
            v[i * n + j] = gain->values[j] * xhat[i * n + j] + bias->values[j];
        }
    }
    auto out = make_tensor(a->shape, std::move(v), g_grad_enabled && (a->requires_grad ||
                                                                      gain->requires_grad ||
                                                                      bias->requires_grad));
    if (out->requires_grad) {
        out->parents = {a, gain, bias};
        Tensor* o = out.get();
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto istd_v = std::make_shared<std::vector<double>>(std::move(inv_std));
        out->backward_fn = [a, gain, bias, o, xh, istd_v, m, n]() {
            for (std::size_t i = 0; i < m; ++i) {
                const double* g = o->grad.data() + i * n;
                const double* xhr = xh->data() + i * n;
                if (gain->requires_grad) {
                    gain->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j) gain->grad[j] += g[j] * xhr[j];
                }
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j) bias->grad[j] += g[j];
                }
                if (a->requires_grad) {
                    a->ensure_grad();
                    double q_mean = 0.0, qx_mean = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double q = g[j] * gain->values[j];
                        q_mean += q;
                        qx_mean += q * xhr[j];
                    }
                    q_mean /= static_cast<double>(n);
                    qx_mean /= static_cast<double>(n);
                    double* da = a->grad.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double q = g[j] * gain->values[j];
                        da[j] += (q - q_mean - xhr[j] * qx_mean) * (*istd_v)[i];
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr dropout(const TensorPtr& a, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return a;
    require(rate < 1.0, "dropout: rate must be < 1");
    std::bernoulli_distribution keep(1.0 - rate);
    const double inv_keep = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(a->size());
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        (*mask)[i] = keep(rng) ? inv_keep : 0.0;
        v[i] = a->values[i] * (*mask)[i];
    }
    auto out = make_tensor(a->shape, std::move(v), track(a));
    if (out->requires_grad) {
        out->parents = {a};
        Tensor* o = out.get();
        out->backward_fn = [a, o, mask]() {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                a->grad[i] += o->grad[i] * (*mask)[i];
        };
    }
    return out;
}

TensorPtr bce_pair_loss(const TensorPtr& prob_pair, int label) {
    require(prob_pair->size() == 2,
            "bce_pair_loss: expected a probability pair, got " + shape_str(prob_pair->shape));
    if (label != 0 && label != 1) {
        throw std::invalid_argument("bce_pair_loss: label must be 0 or 1, got " +
                                    std::to_string(label));
    }
    const double sum = prob_pair->values[0] + prob_pair->values[1];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("bce_pair_loss: probabilities sum to " + std::to_string(sum));
    }
    const double raw = prob_pair->values[static_cast<std::size_t>(label)];
    const bool clamped = raw < kProbClampLo || raw > kProbClampHi;
    const double p = std::clamp(raw, kProbClampLo, kProbClampHi);
    auto out = scalar_tensor(-std::log(p));
    out->requires_grad = track(prob_pair);
    if (out->requires_grad) {
        out->parents = {prob_pair};
        Tensor* o = out.get();
        out->backward_fn = [prob_pair, o, label, p, clamped]() {
            prob_pair->ensure_grad();
            if (!clamped) {
                prob_pair->grad[static_cast<std::size_t>(label)] += o->grad[0] * (-1.0 / p);
            }
        };
    }
    return out;
}

TensorPtr mean_of(const std::vector<TensorPtr>& scalars) {
    require(!scalars.empty(), "mean_of: empty input");
    double s = 0.0;
    bool any_grad = false;
    for (const auto& x : scalars) {
        s += x->scalar();
        any_grad = any_grad || x->requires_grad;
    }
    auto out = scalar_tensor(s / static_cast<double>(scalars.size()));
    out->requires_grad = g_grad_enabled && any_grad;
    if (out->requires_grad) {
        out->parents = scalars;
        Tensor* o = out.get();
        auto inputs = scalars;
        out->backward_fn = [inputs, o]() {
            const double g = o->grad[0] / static_cast<double>(inputs.size());
            for (const auto& x : inputs) {
                if (!x->requires_grad) continue;
                x->ensure_grad();
                x->grad[0] += g;
            }
        };
    }
    return out;
}

void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) {
        throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss->shape));
    }
    // iterative post-order over parents
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    struct Frame {
        TensorPtr node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss, 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorPtr p = f.node->parents[f.next_parent++];
            if (visited.insert(p.get()).second) {
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node.get());
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn && !(*it)->grad.empty()) {
            (*it)->backward_fn();
        }
    }
}

}  // namespace corefbench
