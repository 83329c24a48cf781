#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "wsseg/graph.hpp"
#include "wsseg/rng.hpp"

using namespace wsseg;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (double& v : m.a) v = rng.uniform(-scale, scale);
    return m;
}

// Generic gradient check for a scalar-valued graph expression over a set of
// parameters.
void check_expression(ParamStore& params, const std::function<TensorRef(Graph&)>& build,
                      double tol = 1e-6) {
    params.zero_grads();
    {
        Graph g;
        g.backward(build(g));
    }
    auto loss = [&]() {
        Graph g;
        return g.value(build(g)).at(0, 0);
    };
    // Entries where both gradients are ~0 carry no relative-error signal.
    const auto report = testutil::finite_diff_check(params, loss, {1e-6, 6, 1e-6});
    CAPTURE(report.worst);
    CHECK(report.max_rel_err < tol);
}

// Sum of squares reduces any matrix to a scalar with a smooth gradient.
TensorRef sum_sq(Graph& g, TensorRef x) {
    TensorRef sq = g.hadamard(x, x);
    // Row of ones times column of ones: use matmuls on constant inputs.
    Mat ones_left(1, sq.rows, 1.0);
    Mat ones_right(sq.cols, 1, 1.0);
    return g.matmul(g.matmul(g.input(ones_left), sq), g.input(ones_right));
}

}  // namespace

TEST_CASE("matmul forward and gradients") {
    Rng rng(11);
    ParamStore ps;
    ps.create("a", 3, 4).value = random_mat(3, 4, rng);
    ps.create("b", 4, 2).value = random_mat(4, 2, rng);
    check_expression(ps, [&](Graph& g) {
        return sum_sq(g, g.matmul(g.param(ps.at("a")), g.param(ps.at("b"))));
    });
}

TEST_CASE("matmul_nt matches matmul with explicit transpose") {
    Rng rng(12);
    Mat a = random_mat(3, 5, rng);
    Mat b = random_mat(4, 5, rng);
    Graph g;
    TensorRef r1 = g.matmul_nt(g.input(a), g.input(b));
    TensorRef r2 = g.matmul(g.input(a), g.input(transpose(b)));
    for (size_t i = 0; i < g.value(r1).a.size(); ++i) {
        CHECK(g.value(r1).a[i] == doctest::Approx(g.value(r2).a[i]).epsilon(1e-12));
    }

    ParamStore ps;
    ps.create("a", 3, 5).value = a;
    ps.create("b", 4, 5).value = b;
    check_expression(ps, [&](Graph& g2) {
        return sum_sq(g2, g2.matmul_nt(g2.param(ps.at("a")), g2.param(ps.at("b"))));
    });
}

TEST_CASE("elementwise and broadcast op gradients") {
    Rng rng(13);
    ParamStore ps;
    ps.create("x", 4, 3).value = random_mat(4, 3, rng);
    ps.create("y", 4, 3).value = random_mat(4, 3, rng);
    ps.create("bias", 1, 3).value = random_mat(1, 3, rng);
    ps.create("s", 1, 1).value = Mat(1, 1, 0.7);

    SUBCASE("add + scale") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.scale(g.add(g.param(ps.at("x")), g.param(ps.at("y"))), 1.7));
        });
    }
    SUBCASE("hadamard") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.hadamard(g.param(ps.at("x")), g.param(ps.at("y"))));
        });
    }
    SUBCASE("add_rowvec") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.add_rowvec(g.param(ps.at("x")), g.param(ps.at("bias"))));
        });
    }
    SUBCASE("mul_scalar") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.mul_scalar(g.param(ps.at("x")), g.param(ps.at("s"))));
        });
    }
    SUBCASE("broadcast_row") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.broadcast_row(g.param(ps.at("bias")), 5));
        });
    }
    SUBCASE("transpose") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.transpose_of(g.param(ps.at("x"))));
        });
    }
}

TEST_CASE("activation gradients away from kinks") {
    Rng rng(14);
    ParamStore ps;
    Mat x = random_mat(3, 4, rng);
    for (double& v : x.a)
        if (std::fabs(v) < 0.05) v = 0.2;  // keep ReLU inputs off the kink
    ps.create("x", 3, 4).value = x;

    SUBCASE("relu") {
        check_expression(ps, [&](Graph& g) { return sum_sq(g, g.relu(g.param(ps.at("x")))); });
    }
    SUBCASE("gelu") {
        check_expression(ps, [&](Graph& g) { return sum_sq(g, g.gelu(g.param(ps.at("x")))); });
    }
}

TEST_CASE("row_softmax rows sum to one and gradients check") {
    Rng rng(15);
    ParamStore ps;
    ps.create("x", 5, 7).value = random_mat(5, 7, rng, 2.0);
    {
        Graph g;
        TensorRef y = g.row_softmax(g.param(ps.at("x")));
        for (int i = 0; i < 5; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 7; ++j) sum += g.value(y).at(i, j);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    check_expression(ps, [&](Graph& g) {
        // Weighted sum makes the softmax gradient non-trivial per row.
        Mat w(7, 1);
        for (int i = 0; i < 7; ++i) w.at(i, 0) = 0.3 + 0.2 * i;
        Mat ones(1, 5, 1.0);
        TensorRef y = g.row_softmax(g.param(ps.at("x")));
        return g.matmul(g.matmul(g.input(ones), y), g.input(w));
    });
}

TEST_CASE("layer_norm gradients") {
    Rng rng(16);
    ParamStore ps;
    ps.create("x", 4, 6).value = random_mat(4, 6, rng);
    ps.create("gamma", 1, 6).value = random_mat(1, 6, rng);
    ps.create("beta", 1, 6).value = random_mat(1, 6, rng);
    check_expression(ps, [&](Graph& g) {
        return sum_sq(g, g.layer_norm(g.param(ps.at("x")), g.param(ps.at("gamma")),
                                      g.param(ps.at("beta"))));
    });
}

TEST_CASE("slice/concat/patchify/avg_pool gradients") {
    Rng rng(17);
    ParamStore ps;
    ps.create("x", 16, 6).value = random_mat(16, 6, rng);  // 4x4 token grid
    SUBCASE("slice then concat") {
        check_expression(ps, [&](Graph& g) {
            TensorRef x = g.param(ps.at("x"));
            return sum_sq(g, g.concat_cols(g.slice_cols(x, 0, 2), g.slice_cols(x, 3, 6)));
        });
    }
    SUBCASE("patchify") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.patchify(g.param(ps.at("x")), 4, 4, 2));
        });
    }
    SUBCASE("avg_pool_tokens") {
        check_expression(ps, [&](Graph& g) {
            return sum_sq(g, g.avg_pool_tokens(g.param(ps.at("x")), 4, 4, 2));
        });
    }
}

TEST_CASE("patchify layout maps p x p neighborhoods to rows") {
    // 4x4 single-channel grid with values = row*10 + col.
    Mat grid(16, 1);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) grid.at(r * 4 + c, 0) = r * 10 + c;
    Graph g;
    TensorRef p = g.patchify(g.input(grid), 4, 4, 2);
    const Mat& v = g.value(p);
    REQUIRE(v.rows == 4);
    REQUIRE(v.cols == 4);
    // Patch (0,0) holds pixels (0,0),(0,1),(1,0),(1,1).
    CHECK(v.at(0, 0) == 0.0);
    CHECK(v.at(0, 1) == 1.0);
    CHECK(v.at(0, 2) == 10.0);
    CHECK(v.at(0, 3) == 11.0);
    // Patch (1,1) holds pixels (2,2),(2,3),(3,2),(3,3).
    CHECK(v.at(3, 0) == 22.0);
    CHECK(v.at(3, 3) == 33.0);
}

TEST_CASE("global_max_rows takes per-column maxima, ties to the first row") {
    Mat x(3, 2);
    x.at(0, 0) = 1.0;
    x.at(1, 0) = 5.0;
    x.at(2, 0) = 3.0;
    x.at(0, 1) = 2.0;
    x.at(1, 1) = 2.0;
    x.at(2, 1) = 0.0;
    ParamStore ps;
    ps.create("x", 3, 2).value = x;
    Graph g;
    TensorRef y = g.global_max_rows(g.param(ps.at("x")));
    CHECK(g.value(y).at(0, 0) == 5.0);
    CHECK(g.value(y).at(0, 1) == 2.0);

    Mat ones(2, 1, 1.0);
    TensorRef loss = g.matmul(y, g.input(ones));
    ps.zero_grads();
    g.backward(loss);
    const Mat& grad = ps.at("x").grad;
    CHECK(grad.at(1, 0) == 1.0);
    CHECK(grad.at(0, 0) == 0.0);
    // Column 1 ties between rows 0 and 1: the first row in row-major order wins.
    CHECK(grad.at(0, 1) == 1.0);
    CHECK(grad.at(1, 1) == 0.0);
}

TEST_CASE("loss op values and gradients") {
    SUBCASE("multilabel bce at zero logits is ln 2") {
        Graph g;
        Mat logits(1, 3, 0.0);
        TensorRef l = g.multilabel_bce(g.input(logits), {1.0, 0.0, 1.0});
        CHECK(g.value(l).at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("softmax ce at equal logits is ln 2") {
        Graph g;
        Mat logits(1, 2, 0.0);
        TensorRef l = g.softmax_ce(g.input(logits), {1.0, 0.0});
        CHECK(g.value(l).at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("gradients") {
        Rng rng(18);
        ParamStore ps;
        ps.create("z", 1, 4).value = random_mat(1, 4, rng, 2.0);
        check_expression(ps, [&](Graph& g) {
            return g.multilabel_bce(g.param(ps.at("z")), {1.0, 0.0, 0.0, 1.0});
        });
        ParamStore ps2;
        ps2.create("z", 1, 2).value = random_mat(1, 2, rng, 2.0);
        check_expression(ps2, [&](Graph& g) {
            return g.softmax_ce(g.param(ps2.at("z")), {0.0, 1.0});
        });
    }
    SUBCASE("stability at extreme logits") {
        Graph g;
        Mat logits(1, 2);
        logits.at(0, 0) = 1000.0;
        logits.at(0, 1) = -1000.0;
        TensorRef l = g.multilabel_bce(g.input(logits), {1.0, 0.0});
        CHECK(std::isfinite(g.value(l).at(0, 0)));
        CHECK(g.value(l).at(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("parameters reused in one graph accumulate gradients once per use") {
    ParamStore ps;
    ps.create("w", 1, 1).value = Mat(1, 1, 3.0);
    Graph g;
    TensorRef w = g.param(ps.at("w"));
    TensorRef y = g.hadamard(w, w);  // w^2, dy/dw = 2w = 6
    ps.zero_grads();
    g.backward(y);
    CHECK(ps.at("w").grad.at(0, 0) == doctest::Approx(6.0));
}
