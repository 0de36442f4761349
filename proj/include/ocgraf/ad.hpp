#pragma once

// Small reverse-mode autodiff tape over row-major 2-D double tensors. Sized
// for this project: per-step graphs of a few hundred matrix nodes, built and
// freed every training iteration. Not a general framework.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ocgraf/common.hpp"

namespace ocgraf::ad {

struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor from_vector(const std::vector<double>& v, int r, int c);

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool empty() const { return data.empty(); }
};

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline MatMap as_map(Tensor& t) { return MatMap(t.data.data(), t.rows, t.cols); }
inline ConstMatMap as_map(const Tensor& t) { return ConstMatMap(t.data.data(), t.rows, t.cols); }

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m, adam_v;
};

class ParamStore {
  public:
    // Gaussian init with std dev `init_std`, seeded by (seed, name) so the
    // initialization is independent of creation order.
    Parameter& create(const std::string& name, int rows, int cols, double init_std,
                      uint64_t seed);
    Parameter& create_filled(const std::string& name, int rows, int cols, double fill);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    std::vector<Parameter*> all();  // name-sorted
    std::vector<const Parameter*> all() const;

    void zero_grad();
    double grad_norm() const;
    void clip_grad_norm(double max_norm);
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    int64_t adam_t() const { return adam_t_; }
    void set_adam_t(int64_t t) { adam_t_ = t; }
    size_t count() const { return params_.size(); }
    size_t scalar_count() const;

  private:
    std::map<std::string, std::unique_ptr<Parameter>> params_;
    int64_t adam_t_ = 0;
};

// Precomputed bilinear sampling: each query reads 4 rows of a (P*P)xC plane.
struct BilinearPlan {
    int plane_rows = 0;
    std::vector<std::array<int, 4>> idx;
    std::vector<std::array<double, 4>> w;
    int queries() const { return static_cast<int>(idx.size()); }
};

// P*P grid nodes spanning [-1,1]^2 (row = u index * P + v index); queries
// clamped to the grid.
BilinearPlan make_bilinear_plan(int P, const std::vector<std::array<double, 2>>& uv);

// Sparse kernel-point correlation: out[i, k*Din..] += w * f[j] per entry.
struct KpPlan {
    int rows_out = 0;
    int kp = 0;
    struct Entry {
        int out_row, in_row, k;
        double w;
    };
    std::vector<Entry> entries;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Graph {
  public:
    Var constant(Tensor t);
    Var param(Parameter& p);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var add_rowvec(Var x, Var b);   // x: NxC, b: 1xC
    Var mul_colvec(Var x, Var v);   // x: NxC, v: Nx1
    Var concat_cols(Var a, Var b);
    Var gather_rows(Var x, std::vector<int> idx);
    Var segment_max(Var x, std::shared_ptr<const std::vector<std::vector<int>>> groups);
    Var row_sum(Var x);  // NxC -> Nx1
    Var sum_all(Var x);
    Var mean_all(Var x);
    Var reshape(Var x, int rows, int cols);

    Var relu(Var x);
    Var softplus(Var x);
    Var tanh_(Var x);
    Var sigmoid(Var x);
    Var exp_(Var x);
    Var log_(Var x);
    Var square(Var x);
    Var neg(Var x);
    Var vmax(Var a, Var b);
    Var vmin(Var a, Var b);
    Var clamp_min(Var x, double lo);  // zero grad where clamped
    Var clamp_max(Var x, double hi);

    Var detach(Var x);
    // Forward identity; backward scales each row's gradient by keep[row].
    Var detach_rows_where(Var x, std::shared_ptr<const std::vector<double>> keep);

    Var bilinear(Var plane, std::shared_ptr<const BilinearPlan> plan);
    Var kp_gather(Var features, std::shared_ptr<const KpPlan> plan);

    void backward(Var out);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const;
    int node_count() const { return static_cast<int>(nodes_.size()); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool needs_grad = false;
        Parameter* param = nullptr;
        std::function<void(Graph&)> backprop;
    };
    std::vector<Node> nodes_;

    Var make(Tensor value, bool needs_grad, std::function<void(Graph&)> backprop);
    bool wants(Var v) const { return nodes_[v.id].needs_grad; }
    Tensor& grad_buf(Var v);
    friend struct GraphAccess;

  public:
    // Backward helpers (public for the op lambdas).
    void accum(Var v, const Tensor& g);
    void accum_at(Var v, int r, int c, double g);
    const Tensor& grad_of(Var v) const { return nodes_[v.id].grad; }
    bool input_wants(Var v) const { return wants(v); }
};

// Softmax across K same-shaped Nx1 logits, pointwise over rows.
std::vector<Var> softmax_components(Graph& g, const std::vector<Var>& logits);

// Numerically double-checked central finite difference of `eval` w.r.t. the
// parameter entries listed in `coords` (parameter pointer + flat index).
struct FiniteDiffCheck {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int checked = 0;
};
FiniteDiffCheck finite_diff_check(ParamStore& params,
                                  const std::vector<std::pair<Parameter*, int>>& coords,
                                  const std::function<double()>& eval_loss,
                                  const std::function<double(Parameter*, int)>& analytic_grad,
                                  double step = 1e-5);

}  // namespace ocgraf::ad
