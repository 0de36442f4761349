#include "ocgraf/ad.hpp"

#include <algorithm>
#include <cmath>

namespace ocgraf::ad {

Tensor Tensor::from_vector(const std::vector<double>& v, int r, int c) {
    if (static_cast<size_t>(r) * c != v.size()) throw Error("Tensor::from_vector: size mismatch");
    Tensor t(r, c);
    t.data = v;
    return t;
}

// ---------------------------------------------------------------------------
// ParamStore

Parameter& ParamStore::create(const std::string& name, int rows, int cols, double init_std,
                              uint64_t seed) {
    if (params_.count(name)) throw Error("parameter already exists: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(rows, cols);
    if (init_std > 0) {
        Rng rng = rng_for(seed, name);
        std::normal_distribution<double> gauss(0.0, init_std);
        for (auto& x : p->value.data) x = gauss(rng);
    }
    p->grad = Tensor(rows, cols);
    p->adam_m = Tensor(rows, cols);
    p->adam_v = Tensor(rows, cols);
    Parameter& ref = *p;
    params_[name] = std::move(p);
    return ref;
}

Parameter& ParamStore::create_filled(const std::string& name, int rows, int cols, double fill) {
    Parameter& p = create(name, rows, cols, 0.0, 0);
    std::fill(p.value.data.begin(), p.value.data.end(), fill);
    return p;
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
}

const Parameter* ParamStore::find(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
}

std::vector<Parameter*> ParamStore::all() {
    std::vector<Parameter*> out;
    for (auto& [_, p] : params_) out.push_back(p.get());
    return out;
}

std::vector<const Parameter*> ParamStore::all() const {
    std::vector<const Parameter*> out;
    for (const auto& [_, p] : params_) out.push_back(p.get());
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [_, p] : params_)
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

double ParamStore::grad_norm() const {
    double sum = 0.0;
    for (const auto& [_, p] : params_)
        for (double g : p->grad.data) sum += g * g;
    return std::sqrt(sum);
}

void ParamStore::clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& [_, p] : params_)
        for (double& g : p->grad.data) g *= scale;
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(beta1, adam_t_);
    const double bc2 = 1.0 - std::pow(beta2, adam_t_);
    for (auto& [_, p] : params_) {
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.data[i];
            double& m = p->adam_m.data[i];
            double& v = p->adam_v.data[i];
            m = beta1 * m + (1 - beta1) * g;
            v = beta2 * v + (1 - beta2) * g * g;
            p->value.data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        }
    }
}

size_t ParamStore::scalar_count() const {
    size_t n = 0;
    for (const auto& [_, p] : params_) n += p->value.size();
    return n;
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::make(Tensor value, bool needs_grad, std::function<void(Graph&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.rows, n.value.cols);
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::accum(Var v, const Tensor& g) {
    if (!wants(v)) return;
    Tensor& buf = grad_buf(v);
    if (!buf.same_shape(g)) throw Error("grad shape mismatch");
    for (size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i];
}

void Graph::accum_at(Var v, int r, int c, double g) {
    if (!wants(v)) return;
    grad_buf(v).at(r, c) += g;
}

double Graph::scalar(Var v) const {
    const Tensor& t = nodes_[v.id].value;
    if (t.size() != 1) throw Error("scalar() on non-1x1 tensor");
    return t.data[0];
}

Var Graph::constant(Tensor t) { return make(std::move(t), false, nullptr); }

Var Graph::param(Parameter& p) {
    Var v = make(p.value, true, nullptr);
    nodes_[v.id].param = &p;
    return v;
}

void Graph::backward(Var out) {
    if (nodes_[out.id].value.size() != 1) throw Error("backward: output must be scalar");
    if (!nodes_[out.id].needs_grad) return;
    grad_buf(out).data[0] = 1.0;
    for (int id = out.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.needs_grad) continue;
        if (n.backprop) n.backprop(*this);
        if (n.param)
            for (size_t i = 0; i < n.grad.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
    }
}

// --- elementwise binary ---

namespace {
void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw Error(std::string(op) + ": shape mismatch");
}
}  // namespace

Var Graph::add(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    check_same(ta, tb, "add");
    Tensor out = ta;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            g.accum(a, g.grad_of(v));
            g.accum(b, g.grad_of(v));
        };
    return v;
}

Var Graph::sub(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    check_same(ta, tb, "sub");
    Tensor out = ta;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            g.accum(a, gv);
            if (g.input_wants(b)) {
                Tensor neg = gv;
                for (auto& x : neg.data) x = -x;
                g.accum(b, neg);
            }
        };
    return v;
}

Var Graph::mul(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    check_same(ta, tb, "mul");
    Tensor out = ta;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            if (g.input_wants(a)) {
                Tensor ga = gv;
                const Tensor& tb2 = g.value(b);
                for (size_t i = 0; i < ga.size(); ++i) ga.data[i] *= tb2.data[i];
                g.accum(a, ga);
            }
            if (g.input_wants(b)) {
                Tensor gb = gv;
                const Tensor& ta2 = g.value(a);
                for (size_t i = 0; i < gb.size(); ++i) gb.data[i] *= ta2.data[i];
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::div(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    check_same(ta, tb, "div");
    Tensor out = ta;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] /= tb.data[i];
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const Tensor& tb2 = g.value(b);
            if (g.input_wants(a)) {
                Tensor ga = gv;
                for (size_t i = 0; i < ga.size(); ++i) ga.data[i] /= tb2.data[i];
                g.accum(a, ga);
            }
            if (g.input_wants(b)) {
                const Tensor& ta2 = g.value(a);
                Tensor gb = gv;
                for (size_t i = 0; i < gb.size(); ++i)
                    gb.data[i] *= -ta2.data[i] / (tb2.data[i] * tb2.data[i]);
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::add_scalar(Var a, double s) {
    Tensor out = value(a);
    for (auto& x : out.data) x += s;
    const bool ng = wants(a);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a](Graph& g) { g.accum(a, g.grad_of(v)); };
    return v;
}

Var Graph::mul_scalar(Var a, double s) {
    Tensor out = value(a);
    for (auto& x : out.data) x *= s;
    const bool ng = wants(a);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, s](Graph& g) {
            Tensor ga = g.grad_of(v);
            for (auto& x : ga.data) x *= s;
            g.accum(a, ga);
        };
    return v;
}

Var Graph::matmul(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.cols != tb.rows) throw Error("matmul: inner dimension mismatch");
    Tensor out(ta.rows, tb.cols);
    as_map(out) = as_map(ta) * as_map(tb);
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            if (g.input_wants(a)) {
                Tensor ga(g.value(a).rows, g.value(a).cols);
                as_map(ga) = as_map(gv) * as_map(g.value(b)).transpose();
                g.accum(a, ga);
            }
            if (g.input_wants(b)) {
                Tensor gb(g.value(b).rows, g.value(b).cols);
                as_map(gb) = as_map(g.value(a)).transpose() * as_map(gv);
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::add_rowvec(Var x, Var b) {
    const Tensor &tx = value(x), &tb = value(b);
    if (tb.rows != 1 || tb.cols != tx.cols) throw Error("add_rowvec: shape mismatch");
    Tensor out = tx;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += tb.at(0, c);
    const bool ng = wants(x) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            g.accum(x, gv);
            if (g.input_wants(b)) {
                Tensor gb(1, gv.cols);
                for (int r = 0; r < gv.rows; ++r)
                    for (int c = 0; c < gv.cols; ++c) gb.at(0, c) += gv.at(r, c);
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::mul_colvec(Var x, Var cv) {
    const Tensor &tx = value(x), &tv = value(cv);
    if (tv.cols != 1 || tv.rows != tx.rows) throw Error("mul_colvec: shape mismatch");
    Tensor out = tx;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) *= tv.at(r, 0);
    const bool ng = wants(x) || wants(cv);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x, cv](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const Tensor& tx2 = g.value(x);
            const Tensor& tv2 = g.value(cv);
            if (g.input_wants(x)) {
                Tensor gx = gv;
                for (int r = 0; r < gx.rows; ++r)
                    for (int c = 0; c < gx.cols; ++c) gx.at(r, c) *= tv2.at(r, 0);
                g.accum(x, gx);
            }
            if (g.input_wants(cv)) {
                Tensor gvv(tv2.rows, 1);
                for (int r = 0; r < gv.rows; ++r) {
                    double s = 0.0;
                    for (int c = 0; c < gv.cols; ++c) s += gv.at(r, c) * tx2.at(r, c);
                    gvv.at(r, 0) = s;
                }
                g.accum(cv, gvv);
            }
        };
    return v;
}

Var Graph::concat_cols(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.rows != tb.rows) throw Error("concat_cols: row mismatch");
    Tensor out(ta.rows, ta.cols + tb.cols);
    for (int r = 0; r < ta.rows; ++r) {
        for (int c = 0; c < ta.cols; ++c) out.at(r, c) = ta.at(r, c);
        for (int c = 0; c < tb.cols; ++c) out.at(r, ta.cols + c) = tb.at(r, c);
    }
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const int ca = g.value(a).cols, cb = g.value(b).cols;
            if (g.input_wants(a)) {
                Tensor ga(gv.rows, ca);
                for (int r = 0; r < gv.rows; ++r)
                    for (int c = 0; c < ca; ++c) ga.at(r, c) = gv.at(r, c);
                g.accum(a, ga);
            }
            if (g.input_wants(b)) {
                Tensor gb(gv.rows, cb);
                for (int r = 0; r < gv.rows; ++r)
                    for (int c = 0; c < cb; ++c) gb.at(r, c) = gv.at(r, ca + c);
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::gather_rows(Var x, std::vector<int> idx) {
    const Tensor& tx = value(x);
    Tensor out(static_cast<int>(idx.size()), tx.cols);
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= tx.rows) throw Error("gather_rows: index out of range");
        for (int c = 0; c < tx.cols; ++c) out.at(static_cast<int>(r), c) = tx.at(idx[r], c);
    }
    const bool ng = wants(x);
    Var v = make(std::move(out), ng, nullptr);
    if (ng) {
        auto indices = std::make_shared<std::vector<int>>(std::move(idx));
        nodes_[v.id].backprop = [v, x, indices](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            for (size_t r = 0; r < indices->size(); ++r)
                for (int c = 0; c < gv.cols; ++c)
                    g.accum_at(x, (*indices)[r], c, gv.at(static_cast<int>(r), c));
        };
    }
    return v;
}

Var Graph::segment_max(Var x, std::shared_ptr<const std::vector<std::vector<int>>> groups) {
    const Tensor& tx = value(x);
    const int G = static_cast<int>(groups->size());
    Tensor out(G, tx.cols);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(G) * tx.cols, -1);
    for (int gi = 0; gi < G; ++gi) {
        const auto& rows = (*groups)[gi];
        for (int c = 0; c < tx.cols; ++c) {
            double best = 0.0;
            int best_r = -1;
            for (int r : rows) {
                if (best_r < 0 || tx.at(r, c) > best) {
                    best = tx.at(r, c);
                    best_r = r;
                }
            }
            out.at(gi, c) = best_r < 0 ? 0.0 : best;
            (*argmax)[static_cast<size_t>(gi) * tx.cols + c] = best_r;
        }
    }
    const bool ng = wants(x);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x, argmax](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            for (int gi = 0; gi < gv.rows; ++gi)
                for (int c = 0; c < gv.cols; ++c) {
                    const int r = (*argmax)[static_cast<size_t>(gi) * gv.cols + c];
                    if (r >= 0) g.accum_at(x, r, c, gv.at(gi, c));
                }
        };
    return v;
}

Var Graph::row_sum(Var x) {
    const Tensor& tx = value(x);
    Tensor out(tx.rows, 1);
    for (int r = 0; r < tx.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < tx.cols; ++c) s += tx.at(r, c);
        out.at(r, 0) = s;
    }
    const bool ng = wants(x);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const Tensor& tx2 = g.value(x);
            Tensor gx(tx2.rows, tx2.cols);
            for (int r = 0; r < tx2.rows; ++r)
                for (int c = 0; c < tx2.cols; ++c) gx.at(r, c) = gv.at(r, 0);
            g.accum(x, gx);
        };
    return v;
}

Var Graph::sum_all(Var x) {
    const Tensor& tx = value(x);
    double s = 0.0;
    for (double d : tx.data) s += d;
    const bool ng = wants(x);
    Var v = make(Tensor::full(1, 1, s), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x](Graph& g) {
            const double gd = g.grad_of(v).data[0];
            const Tensor& tx2 = g.value(x);
            g.accum(x, Tensor::full(tx2.rows, tx2.cols, gd));
        };
    return v;
}

Var Graph::mean_all(Var x) {
    const Tensor& tx = value(x);
    if (tx.size() == 0) throw Error("mean_all: empty tensor");
    return mul_scalar(sum_all(x), 1.0 / static_cast<double>(tx.size()));
}

Var Graph::reshape(Var x, int rows, int cols) {
    const Tensor& tx = value(x);
    if (static_cast<size_t>(rows) * cols != tx.size()) throw Error("reshape: size mismatch");
    Tensor out(rows, cols);
    out.data = tx.data;
    const bool ng = wants(x);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const Tensor& tx2 = g.value(x);
            Tensor gx(tx2.rows, tx2.cols);
            gx.data = gv.data;
            g.accum(x, gx);
        };
    return v;
}

// --- elementwise unary ---

namespace {
double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double stable_sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

#define OCGRAF_UNARY(NAME, FWD, BWD_EXPR)                                                    \
    Var Graph::NAME(Var x) {                                                                 \
        Tensor out = value(x);                                                               \
        for (auto& xv : out.data) xv = FWD(xv);                                              \
        const bool ng = wants(x);                                                            \
        Var v = make(std::move(out), ng, nullptr);                                           \
        if (ng)                                                                              \
            nodes_[v.id].backprop = [v, x](Graph& g) {                                       \
                const Tensor& gv = g.grad_of(v);                                             \
                const Tensor& in = g.value(x);                                               \
                const Tensor& outv = g.value(v);                                             \
                (void)outv;                                                                  \
                Tensor gx = gv;                                                              \
                for (size_t i = 0; i < gx.size(); ++i) {                                     \
                    const double xi = in.data[i];                                            \
                    const double yi = outv.data[i];                                          \
                    (void)xi;                                                                \
                    (void)yi;                                                                \
                    gx.data[i] *= (BWD_EXPR);                                                \
                }                                                                            \
                g.accum(x, gx);                                                              \
            };                                                                               \
        return v;                                                                            \
    }

OCGRAF_UNARY(relu, [](double a) { return a > 0 ? a : 0.0; }, xi > 0 ? 1.0 : 0.0)
OCGRAF_UNARY(softplus, stable_softplus, stable_sigmoid(xi))
OCGRAF_UNARY(tanh_, std::tanh, 1.0 - yi * yi)
OCGRAF_UNARY(sigmoid, stable_sigmoid, yi * (1.0 - yi))
OCGRAF_UNARY(exp_, std::exp, yi)
OCGRAF_UNARY(log_, std::log, 1.0 / xi)
OCGRAF_UNARY(square, [](double a) { return a * a; }, 2.0 * xi)
OCGRAF_UNARY(neg, [](double a) { return -a; }, -1.0)

#undef OCGRAF_UNARY

Var Graph::vmax(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    check_same(ta, tb, "vmax");
    Tensor out = ta;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::max(ta.data[i], tb.data[i]);
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const Tensor& ta2 = g.value(a);
            const Tensor& tb2 = g.value(b);
            if (g.input_wants(a)) {
                Tensor ga = gv;
                for (size_t i = 0; i < ga.size(); ++i)
                    if (ta2.data[i] < tb2.data[i]) ga.data[i] = 0.0;
                g.accum(a, ga);
            }
            if (g.input_wants(b)) {
                Tensor gb = gv;
                for (size_t i = 0; i < gb.size(); ++i)
                    if (ta2.data[i] >= tb2.data[i]) gb.data[i] = 0.0;
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::vmin(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    check_same(ta, tb, "vmin");
    Tensor out = ta;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::min(ta.data[i], tb.data[i]);
    const bool ng = wants(a) || wants(b);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, a, b](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            const Tensor& ta2 = g.value(a);
            const Tensor& tb2 = g.value(b);
            if (g.input_wants(a)) {
                Tensor ga = gv;
                for (size_t i = 0; i < ga.size(); ++i)
                    if (ta2.data[i] > tb2.data[i]) ga.data[i] = 0.0;
                g.accum(a, ga);
            }
            if (g.input_wants(b)) {
                Tensor gb = gv;
                for (size_t i = 0; i < gb.size(); ++i)
                    if (ta2.data[i] <= tb2.data[i]) gb.data[i] = 0.0;
                g.accum(b, gb);
            }
        };
    return v;
}

Var Graph::clamp_min(Var x, double lo) {
    const Tensor& tx = value(x);
    return vmax(x, constant(Tensor::full(tx.rows, tx.cols, lo)));
}

Var Graph::clamp_max(Var x, double hi) {
    const Tensor& tx = value(x);
    return vmin(x, constant(Tensor::full(tx.rows, tx.cols, hi)));
}

Var Graph::detach(Var x) { return constant(value(x)); }

Var Graph::detach_rows_where(Var x, std::shared_ptr<const std::vector<double>> keep) {
    const Tensor& tx = value(x);
    if (static_cast<int>(keep->size()) != tx.rows)
        throw Error("detach_rows_where: mask length mismatch");
    const bool ng = wants(x);
    Var v = make(tx, ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, x, keep](Graph& g) {
            Tensor gx = g.grad_of(v);
            for (int r = 0; r < gx.rows; ++r)
                for (int c = 0; c < gx.cols; ++c) gx.at(r, c) *= (*keep)[r];
            g.accum(x, gx);
        };
    return v;
}

BilinearPlan make_bilinear_plan(int P, const std::vector<std::array<double, 2>>& uv) {
    if (P < 2) throw Error("make_bilinear_plan: P must be >= 2");
    BilinearPlan plan;
    plan.plane_rows = P * P;
    plan.idx.reserve(uv.size());
    plan.w.reserve(uv.size());
    for (const auto& q : uv) {
        double t[2];
        int i0[2];
        double f[2];
        for (int a = 0; a < 2; ++a) {
            // Grid nodes at -1 + 2i/(P-1).
            t[a] = std::clamp((q[a] + 1.0) * (P - 1) / 2.0, 0.0, static_cast<double>(P - 1));
            i0[a] = std::min(static_cast<int>(std::floor(t[a])), P - 2);
            f[a] = t[a] - i0[a];
        }
        const int base = i0[0] * P + i0[1];
        plan.idx.push_back({base, base + 1, base + P, base + P + 1});
        plan.w.push_back({(1 - f[0]) * (1 - f[1]), (1 - f[0]) * f[1], f[0] * (1 - f[1]),
                          f[0] * f[1]});
    }
    return plan;
}

Var Graph::bilinear(Var plane, std::shared_ptr<const BilinearPlan> plan) {
    const Tensor& tp = value(plane);
    if (tp.rows != plan->plane_rows) throw Error("bilinear: plane row mismatch");
    Tensor out(plan->queries(), tp.cols);
    for (int q = 0; q < plan->queries(); ++q)
        for (int j = 0; j < 4; ++j) {
            const int row = plan->idx[q][j];
            const double w = plan->w[q][j];
            for (int c = 0; c < tp.cols; ++c) out.at(q, c) += w * tp.at(row, c);
        }
    const bool ng = wants(plane);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, plane, plan](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            for (int q = 0; q < plan->queries(); ++q)
                for (int j = 0; j < 4; ++j) {
                    const int row = plan->idx[q][j];
                    const double w = plan->w[q][j];
                    for (int c = 0; c < gv.cols; ++c)
                        g.accum_at(plane, row, c, w * gv.at(q, c));
                }
        };
    return v;
}

Var Graph::kp_gather(Var features, std::shared_ptr<const KpPlan> plan) {
    const Tensor& tf = value(features);
    const int din = tf.cols;
    Tensor out(plan->rows_out, plan->kp * din);
    for (const auto& e : plan->entries)
        for (int c = 0; c < din; ++c)
            out.at(e.out_row, e.k * din + c) += e.w * tf.at(e.in_row, c);
    const bool ng = wants(features);
    Var v = make(std::move(out), ng, nullptr);
    if (ng)
        nodes_[v.id].backprop = [v, features, plan, din](Graph& g) {
            const Tensor& gv = g.grad_of(v);
            for (const auto& e : plan->entries)
                for (int c = 0; c < din; ++c)
                    g.accum_at(features, e.in_row, c, e.w * gv.at(e.out_row, e.k * din + c));
        };
    return v;
}

std::vector<Var> softmax_components(Graph& g, const std::vector<Var>& logits) {
    if (logits.empty()) throw Error("softmax_components: no components");
    Var m = logits[0];
    for (size_t k = 1; k < logits.size(); ++k) m = g.vmax(m, logits[k]);
    m = g.detach(m);  // max-shift is a constant offset
    std::vector<Var> exps;
    Var total;
    for (size_t k = 0; k < logits.size(); ++k) {
        Var e = g.exp_(g.sub(logits[k], m));
        exps.push_back(e);
        total = k == 0 ? e : g.add(total, e);
    }
    std::vector<Var> out;
    for (auto& e : exps) out.push_back(g.div(e, total));
    return out;
}

FiniteDiffCheck finite_diff_check(ParamStore& params,
                                  const std::vector<std::pair<Parameter*, int>>& coords,
                                  const std::function<double()>& eval_loss,
                                  const std::function<double(Parameter*, int)>& analytic_grad,
                                  double step) {
    (void)params;
    FiniteDiffCheck result;
    for (const auto& [p, i] : coords) {
        const double saved = p->value.data[i];
        p->value.data[i] = saved + step;
        const double fp = eval_loss();
        p->value.data[i] = saved - step;
        const double fm = eval_loss();
        p->value.data[i] = saved;
        const double fd = (fp - fm) / (2 * step);
        const double an = analytic_grad(p, i);
        const double abs_err = std::abs(fd - an);
        const double rel_err = abs_err / std::max({std::abs(fd), std::abs(an), 1e-8});
        result.max_abs_err = std::max(result.max_abs_err, abs_err);
        result.max_rel_err = std::max(result.max_rel_err, rel_err);
        ++result.checked;
    }
    return result;
}

}  // namespace ocgraf::ad
