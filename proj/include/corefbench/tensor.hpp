#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace corefbench {

/// Thrown when two operands have incompatible shapes. Message names the op
/// and both shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major float64 tensor participating in a reverse-mode
/// differentiation graph. Graphs are built dynamically: every op records a
/// backward closure on its result when gradients are enabled and any input
/// requires them. A graph and its tensors belong to one thread.
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // same size as values once backward has run

    // graph bookkeeping
    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shp, std::vector<double> vals, bool req_grad);

    std::size_t size() const { return values.size(); }
    std::size_t ndim() const { return shape.size(); }
    bool is_scalar() const { return values.size() == 1; }
    double scalar() const;

    void ensure_grad();
    void zero_grad();
    void accumulate_grad(std::size_t i, double g) { grad[i] += g; }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// --- construction ---------------------------------------------------------

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
TensorPtr scalar_tensor(double value, bool requires_grad = false);
TensorPtr randn(std::vector<std::size_t> shape, std::mt19937_64& rng, double stddev,
                bool requires_grad = false);
TensorPtr rand_uniform(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo,
                       double hi, bool requires_grad = false);

// --- grad mode ------------------------------------------------------------

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime; forward
/// values are computed as usual.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

// --- ops --------------------------------------------------------------------
//
// All ops validate shapes, compute the forward value, and record into the
// graph when grad mode is on and any input requires grad. Elementwise ops
// require identical shapes (no broadcasting).

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr add_scalar(const TensorPtr& a, double c);

/// 2-D matrix product (m,k) x (k,n) -> (m,n). A 1-D right operand of size k
/// is treated as (k,1) and the result is 1-D of size m.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);

/// Adds a size-n row vector to every row of an (m,n) matrix.
TensorPtr add_row(const TensorPtr& mat, const TensorPtr& row);

TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> shape);
TensorPtr concat(const TensorPtr& a, const TensorPtr& b);  // flat, axis 0
TensorPtr stack_scalars(const std::vector<TensorPtr>& xs);

/// Joins matrices with equal row counts side by side along the column axis.
TensorPtr concat_cols(const std::vector<TensorPtr>& mats);

TensorPtr slice_rows(const TensorPtr& a, std::size_t start, std::size_t count);
TensorPtr row(const TensorPtr& a, std::size_t index);  // 1-D view copy of one row
TensorPtr slice_cols(const TensorPtr& a, std::size_t start, std::size_t count);

/// Picks elements of a 1-D tensor at the given indices (duplicates allowed).
TensorPtr gather(const TensorPtr& a, const std::vector<std::size_t>& indices);

/// Rows of `table` selected by token id, as an (ids.size(), d) matrix.
TensorPtr embedding_rows(const TensorPtr& table, const std::vector<std::size_t>& ids);

TensorPtr mean_axis0(const TensorPtr& a);  // (m,n) -> (n,)
TensorPtr mean_all(const TensorPtr& a);
TensorPtr sum_all(const TensorPtr& a);

TensorPtr tanh_op(const TensorPtr& a);
TensorPtr gelu(const TensorPtr& a);

/// Softmax over the last axis (each row of a matrix, or the whole 1-D tensor).
/// Numerically shifted by the row max.
TensorPtr softmax(const TensorPtr& a);
TensorPtr log_softmax(const TensorPtr& a);

/// LayerNorm over the last axis with learnable gain/bias (size n each).
TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                     double eps = 1e-5);

/// Inverted dropout; draws one Bernoulli mask from `rng`. Identity when
/// rate == 0.
TensorPtr dropout(const TensorPtr& a, double rate, std::mt19937_64& rng);

/// -log p[label] for a probability pair, with p clamped to
/// [1e-12, 1 - 1e-12] before the log.
TensorPtr bce_pair_loss(const TensorPtr& prob_pair, int label);

/// Mean of a list of scalar losses as a single scalar node.
TensorPtr mean_of(const std::vector<TensorPtr>& scalars);

// --- backward ---------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Populates `grad` on every
/// requires_grad ancestor; gradients accumulate additively across uses.
void backward(const TensorPtr& loss);

}  // namespace corefbench
