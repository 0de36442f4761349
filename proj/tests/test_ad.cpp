#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ocgraf/ad.hpp"

using namespace ocgraf;
using ad::Graph;
using ad::ParamStore;
using ad::Tensor;
using ad::Var;

namespace {

// Central finite differences against the analytic gradient of a scalar loss.
void check_param_gradients(ParamStore& params, const std::function<double(bool)>& run,
                           double rtol = 1e-6, double step = 1e-6) {
    run(true);  // fills grads
    std::vector<std::pair<ad::Parameter*, std::vector<double>>> saved;
    for (ad::Parameter* p : params.all()) saved.push_back({p, p->grad.data});

    for (auto& [p, grads] : saved) {
        for (size_t i = 0; i < grads.size(); ++i) {
            const double keep = p->value.data[i];
            p->value.data[i] = keep + step;
            const double fp = run(false);
            p->value.data[i] = keep - step;
            const double fm = run(false);
            p->value.data[i] = keep;
            const double fd = (fp - fm) / (2 * step);
            const double an = grads[i];
            const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(err < rtol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise forward values") {
    Graph g;
    Tensor t(2, 2);
    t.data = {1.0, -2.0, 0.5, 0.0};
    Var x = g.constant(t);
    CHECK(g.value(g.relu(x)).data == std::vector<double>{1.0, 0.0, 0.5, 0.0});
    CHECK(g.value(g.add_scalar(x, 1.0)).data == std::vector<double>{2.0, -1.0, 1.5, 1.0});
    CHECK(g.value(g.square(x)).data[1] == doctest::Approx(4.0));
    CHECK(g.value(g.softplus(g.constant(Tensor::zeros(1, 1)))).data[0] ==
          doctest::Approx(std::log(2.0)));
    CHECK(g.value(g.tanh_(g.softplus(g.constant(Tensor::zeros(1, 1))))).data[0] ==
          doctest::Approx(0.6));
}

TEST_CASE("softplus and sigmoid stable at extreme logits") {
    Graph g;
    Tensor t(1, 4);
    t.data = {-700.0, -50.0, 50.0, 700.0};
    Var sp = g.softplus(g.constant(t));
    CHECK(std::isfinite(g.value(sp).data[0]));
    CHECK(g.value(sp).data[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g.value(sp).data[2] == doctest::Approx(50.0));
    CHECK(std::isfinite(g.value(sp).data[3]));
    Var sg = g.sigmoid(g.constant(t));
    for (double v : g.value(sg).data) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("matmul affine chain gradients") {
    ParamStore params;
    params.create("W1", 3, 4, 0.5, 1);
    params.create("b1", 1, 4, 0.5, 2);
    params.create("W2", 4, 1, 0.5, 3);

    Tensor input(5, 3);
    Rng rng = rng_for(4, "in");
    std::normal_distribution<double> gauss(0, 1);
    for (auto& v : input.data) v = gauss(rng);

    auto run = [&](bool with_grad) {
        Graph g;
        Var x = g.constant(input);
        Var h = g.relu(g.add_rowvec(g.matmul(x, g.param(*params.find("W1"))),
                                    g.param(*params.find("b1"))));
        Var out = g.mean_all(g.square(g.matmul(h, g.param(*params.find("W2")))));
        if (with_grad) {
            params.zero_grad();
            g.backward(out);
        }
        return g.scalar(out);
    };
    check_param_gradients(params, run, 1e-5);
}

TEST_CASE("reduction segment and gather gradients") {
    ParamStore params;
    params.create("X", 6, 3, 1.0, 9);

    auto groups = std::make_shared<std::vector<std::vector<int>>>(
        std::vector<std::vector<int>>{{0, 1, 2}, {3, 4}, {5}});
    const std::vector<int> gather_idx = {0, 2, 2, 1};

    auto run = [&](bool with_grad) {
        Graph g;
        Var x = g.param(*params.find("X"));
        Var pooled = g.segment_max(x, groups);
        Var picked = g.gather_rows(pooled, gather_idx);
        Var rs = g.row_sum(g.mul(picked, picked));
        Var out = g.mean_all(g.concat_cols(rs, g.sum_all(x)));
        if (with_grad) {
            params.zero_grad();
            g.backward(out);
        }
        return g.scalar(out);
    };
    check_param_gradients(params, run, 1e-5);
}

TEST_CASE("div vmax vmin log exp gradients") {
    ParamStore params;
    params.create("a", 4, 1, 0.0, 0);
    params.create("b", 4, 1, 0.0, 0);
    params.find("a")->value.data = {0.5, 1.5, -0.3, 2.0};
    params.find("b")->value.data = {1.0, 0.7, 0.9, -1.2};

    auto run = [&](bool with_grad) {
        Graph g;
        Var a = g.param(*params.find("a"));
        Var b = g.param(*params.find("b"));
        Var ratio = g.div(g.exp_(a), g.add_scalar(g.square(b), 1.0));
        Var m = g.vmax(a, b);
        Var mm = g.vmin(g.mul(a, b), m);
        Var out = g.mean_all(g.add(g.log_(g.add_scalar(g.square(mm), 0.5)), ratio));
        if (with_grad) {
            params.zero_grad();
            g.backward(out);
        }
        return g.scalar(out);
    };
    check_param_gradients(params, run, 1e-5);
}

TEST_CASE("bilinear sampling") {
    const int P = 4;
    ParamStore params;
    params.create("plane", P * P, 2, 1.0, 5);

    SUBCASE("exact at grid nodes") {
        Graph g;
        Var plane = g.param(*params.find("plane"));
        std::vector<std::array<double, 2>> uv;
        for (int i = 0; i < P; ++i)
            for (int j = 0; j < P; ++j)
                uv.push_back({-1.0 + 2.0 * i / (P - 1), -1.0 + 2.0 * j / (P - 1)});
        Var out = g.bilinear(plane, std::make_shared<ad::BilinearPlan>(
                                        ad::make_bilinear_plan(P, uv)));
        const Tensor& v = g.value(out);
        const Tensor& pv = params.find("plane")->value;
        for (int r = 0; r < P * P; ++r)
            for (int c = 0; c < 2; ++c) CHECK(v.at(r, c) == doctest::Approx(pv.at(r, c)));
    }

    SUBCASE("gradient") {
        std::vector<std::array<double, 2>> uv = {{0.3, -0.2}, {-0.9, 0.9}, {1.0, 1.0}, {0, 0}};
        auto plan = std::make_shared<ad::BilinearPlan>(ad::make_bilinear_plan(P, uv));
        auto run = [&](bool with_grad) {
            Graph g;
            Var out = g.mean_all(g.square(g.bilinear(g.param(*params.find("plane")), plan)));
            if (with_grad) {
                params.zero_grad();
                g.backward(out);
            }
            return g.scalar(out);
        };
        check_param_gradients(params, run, 1e-5);
    }
}

TEST_CASE("kp_gather matches dense computation and gradients") {
    ParamStore params;
    params.create("F", 4, 3, 1.0, 6);
    params.create("W", 2 * 3, 2, 1.0, 7);

    auto plan = std::make_shared<ad::KpPlan>();
    plan->rows_out = 4;
    plan->kp = 2;
    plan->entries = {{0, 0, 0, 1.0}, {0, 1, 1, 0.5}, {1, 1, 0, 0.25},
                     {2, 3, 1, 2.0}, {3, 3, 0, 1.0}, {3, 2, 1, 0.75}};

    auto run = [&](bool with_grad) {
        Graph g;
        Var gathered = g.kp_gather(g.param(*params.find("F")), plan);
        Var out = g.mean_all(g.square(g.matmul(gathered, g.param(*params.find("W")))));
        if (with_grad) {
            params.zero_grad();
            g.backward(out);
        }
        return g.scalar(out);
    };
    check_param_gradients(params, run, 1e-5);

    Graph g;
    Var gathered = g.kp_gather(g.param(*params.find("F")), plan);
    const Tensor& gv = g.value(gathered);
    const Tensor& fv = params.find("F")->value;
    CHECK(gv.at(0, 0) == doctest::Approx(fv.at(0, 0)));        // k=0 slot
    CHECK(gv.at(0, 3) == doctest::Approx(0.5 * fv.at(1, 0)));  // k=1 slot
    CHECK(gv.at(1, 0) == doctest::Approx(0.25 * fv.at(1, 0)));
}

TEST_CASE("softmax components sum to one and differentiate") {
    ParamStore params;
    params.create("l0", 5, 1, 1.0, 11);
    params.create("l1", 5, 1, 1.0, 12);
    params.create("l2", 5, 1, 1.0, 13);

    auto run = [&](bool with_grad) {
        Graph g;
        std::vector<Var> logits = {g.param(*params.find("l0")), g.param(*params.find("l1")),
                                   g.param(*params.find("l2"))};
        const auto smax = ad::softmax_components(g, logits);
        Tensor targets(5, 1);
        targets.data = {0.2, 0.9, 0.1, 0.5, 0.7};
        Var loss = g.mean_all(g.square(g.sub(smax[0], g.constant(targets))));
        loss = g.add(loss, g.mul_scalar(g.mean_all(smax[2]), 0.25));
        if (with_grad) {
            params.zero_grad();
            g.backward(loss);
        }
        return g.scalar(loss);
    };
    check_param_gradients(params, run, 1e-5);

    Graph g;
    std::vector<Var> logits = {g.param(*params.find("l0")), g.param(*params.find("l1")),
                               g.param(*params.find("l2"))};
    const auto smax = ad::softmax_components(g, logits);
    for (int r = 0; r < 5; ++r) {
        double sum = 0;
        for (const auto& s : smax) sum += g.value(s).at(r, 0);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("detach blocks gradients") {
    ParamStore params;
    params.create("x", 2, 2, 1.0, 20);
    Graph g;
    Var x = g.param(*params.find("x"));
    Var out = g.mean_all(g.mul(g.detach(x), x));
    params.zero_grad();
    g.backward(out);
    // d/dx mean(const * x) = const / 4
    const Tensor& grad = params.find("x")->grad;
    const Tensor& val = params.find("x")->value;
    for (size_t i = 0; i < grad.size(); ++i)
        CHECK(grad.data[i] == doctest::Approx(val.data[i] / 4.0));
}

TEST_CASE("detach_rows_where masks row gradients") {
    ParamStore params;
    params.create("x", 3, 2, 1.0, 21);
    auto keep = std::make_shared<const std::vector<double>>(std::vector<double>{1.0, 0.0, 1.0});
    Graph g;
    Var x = g.param(*params.find("x"));
    Var out = g.mean_all(g.square(g.detach_rows_where(x, keep)));
    params.zero_grad();
    g.backward(out);
    const Tensor& grad = params.find("x")->grad;
    CHECK(grad.at(0, 0) != 0.0);
    CHECK(grad.at(1, 0) == 0.0);
    CHECK(grad.at(1, 1) == 0.0);
    CHECK(grad.at(2, 1) != 0.0);
}

TEST_CASE("adam converges on a quadratic") {
    ParamStore params;
    ad::Parameter& p = params.create("w", 1, 4, 1.0, 30);
    const std::vector<double> target = {0.3, -1.2, 2.0, 0.0};
    for (int step = 0; step < 400; ++step) {
        Graph g;
        Tensor t(1, 4);
        t.data = target;
        Var loss = g.mean_all(g.square(g.sub(g.param(p), g.constant(t))));
        params.zero_grad();
        g.backward(loss);
        params.adam_step(0.05);
    }
    for (int i = 0; i < 4; ++i) CHECK(std::abs(p.value.data[i] - target[i]) < 1e-3);
}

TEST_CASE("grad clip rescales to max norm") {
    ParamStore params;
    ad::Parameter& p = params.create("w", 1, 2, 0.0, 0);
    p.grad.data = {3.0, 4.0};
    params.clip_grad_norm(1.0);
    CHECK(params.grad_norm() == doctest::Approx(1.0));
    CHECK(p.grad.data[0] == doctest::Approx(0.6));
    CHECK(p.grad.data[1] == doctest::Approx(0.8));
}
