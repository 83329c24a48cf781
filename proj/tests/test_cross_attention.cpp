#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "wsseg/cross_attention.hpp"
#include "wsseg/errors.hpp"

using namespace wsseg;

namespace {

// Independent 2-token, 1-head reference: plain loops, no graph machinery.
Mat reference_cross_attend(const Mat& q_src, const Mat& kv_src, const Mat& wq, const Mat& wk,
                           const Mat& wv, const Mat& wo) {
    const int n = q_src.rows, c = q_src.cols;
    Mat q = mat_mul(q_src, wq), k = mat_mul(kv_src, wk), v = mat_mul(kv_src, wv);
    Mat scores(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int d = 0; d < c; ++d) s += q.at(i, d) * k.at(j, d);
            scores.at(i, j) = s / std::sqrt(static_cast<double>(c));
        }
    Mat aff(n, n);
    for (int i = 0; i < n; ++i) {
        double mx = scores.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, scores.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            aff.at(i, j) = std::exp(scores.at(i, j) - mx);
            sum += aff.at(i, j);
        }
        for (int j = 0; j < n; ++j) aff.at(i, j) /= sum;
    }
    return mat_mul(mat_mul(aff, v), wo);
}

ParamStore make_xattn_store(Rng& rng) {
    ParamStore ps;
    EncoderConfig enc = toy_encoder_config();
    build_cross_attention_params(ps, enc, CrossAttentionConfig{2, 4, 4}, rng);
    return ps;
}

Mat random_tokens(int n, int c, Rng& rng) {
    Mat m(n, c);
    for (double& v : m.a) v = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("single token: affinity is 1 and output is the projected value") {
    ParamStore ps;
    Rng rng(41);
    ps.create_trunc_normal("x.q.w", 4, 4, rng, 0.3);
    ps.create_const("x.q.b", 1, 4, 0.0);
    ps.create_trunc_normal("x.k.w", 4, 4, rng, 0.3);
    ps.create_const("x.k.b", 1, 4, 0.0);
    ps.create_trunc_normal("x.v.w", 4, 4, rng, 0.3);
    ps.create_const("x.v.b", 1, 4, 0.0);
    ps.create_trunc_normal("x.o.w", 4, 4, rng, 0.3);
    ps.create_const("x.o.b", 1, 4, 0.0);

    Graph g;
    Rng tr(42);
    Mat q_src = random_tokens(1, 4, tr);
    Mat kv_src = random_tokens(1, 4, tr);
    std::vector<Mat> probe;
    TensorRef z = cross_attend(g, ps, "x", g.input(q_src), g.input(kv_src), 1, &probe);
    REQUIRE(probe.size() == 1);
    CHECK(probe[0].rows == 1);
    CHECK(probe[0].at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    const Mat expect = mat_mul(mat_mul(kv_src, ps.at("x.v.w").value), ps.at("x.o.w").value);
    for (int j = 0; j < 4; ++j) {
        CHECK(g.value(z).at(0, j) == doctest::Approx(expect.at(0, j)).epsilon(1e-12));
    }
}

TEST_CASE("all-zero query source gives uniform affinity rows") {
    Rng rng(43);
    ParamStore ps = make_xattn_store(rng);
    Graph g;
    const int c = toy_encoder_config().channels[1];
    Mat q_src(6, c, 0.0);
    Rng tr(44);
    Mat kv_src = random_tokens(6, c, tr);
    std::vector<Mat> probe;
    cross_attend(g, ps, "xattn.s2.p", g.input(q_src), g.input(kv_src), 2, &probe);
    REQUIRE(!probe.empty());
    for (const Mat& aff : probe) {
        for (int i = 0; i < aff.rows; ++i)
            for (int j = 0; j < aff.cols; ++j) {
                CHECK(aff.at(i, j) == doctest::Approx(1.0 / aff.cols).epsilon(1e-9));
            }
    }
}

TEST_CASE("two-token hand oracle matches cross_attend") {
    ParamStore ps;
    Rng rng(45);
    ps.create_trunc_normal("x.q.w", 2, 2, rng, 0.5);
    ps.create_const("x.q.b", 1, 2, 0.0);
    ps.create_trunc_normal("x.k.w", 2, 2, rng, 0.5);
    ps.create_const("x.k.b", 1, 2, 0.0);
    ps.create_trunc_normal("x.v.w", 2, 2, rng, 0.5);
    ps.create_const("x.v.b", 1, 2, 0.0);
    ps.create_trunc_normal("x.o.w", 2, 2, rng, 0.5);
    ps.create_const("x.o.b", 1, 2, 0.0);

    Rng tr(46);
    Mat q_src = random_tokens(2, 2, tr);
    Mat kv_src = random_tokens(2, 2, tr);
    Graph g;
    TensorRef z = cross_attend(g, ps, "x", g.input(q_src), g.input(kv_src), 1);
    const Mat expect =
        reference_cross_attend(q_src, kv_src, ps.at("x.q.w").value, ps.at("x.k.w").value,
                               ps.at("x.v.w").value, ps.at("x.o.w").value);
    for (size_t i = 0; i < expect.a.size(); ++i) {
        CHECK(g.value(z).a[i] == doctest::Approx(expect.a[i]).epsilon(1e-10));
    }
}

TEST_CASE("affinity rows sum to one") {
    Rng rng(47);
    ParamStore ps = make_xattn_store(rng);
    const int c = toy_encoder_config().channels[1];
    Rng tr(48);
    Graph g;
    std::vector<Mat> probe;
    exchange(g, ps, 2, CrossAttentionConfig{2, 4, 4}, g.input(random_tokens(9, c, tr)),
             g.input(random_tokens(9, c, tr)), &probe);
    REQUIRE(!probe.empty());
    for (const Mat& aff : probe) {
        for (int i = 0; i < aff.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < aff.cols; ++j) sum += aff.at(i, j);
            CHECK(std::fabs(sum - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("residual pass-through when output projection and mlp output are zero") {
    Rng rng(49);
    ParamStore ps = make_xattn_store(rng);
    ps.at("xattn.s2.p.o.w").value.fill(0.0);
    ps.at("xattn.s2.p.o.b").value.fill(0.0);
    ps.at("xattn.s2.p.fc2.w").value.fill(0.0);
    ps.at("xattn.s2.p.fc2.b").value.fill(0.0);

    const int c = toy_encoder_config().channels[1];
    Rng tr(50);
    Mat q_src = random_tokens(4, c, tr);
    Mat kv_src = random_tokens(4, c, tr);
    Graph g;
    TensorRef z = cross_attention_block(g, ps, "xattn.s2.p", g.input(q_src), g.input(kv_src),
                                        2, 4);
    CHECK(g.value(z).a == kv_src.a);
}

TEST_CASE("identical inputs with tied parameters give identical outputs") {
    Rng rng(51);
    ParamStore ps = make_xattn_store(rng);
    // Tie the two stage-2 directions.
    for (const char* part : {".lnq.g", ".lnq.b", ".lnkv.g", ".lnkv.b", ".q.w", ".q.b", ".k.w",
                             ".k.b", ".v.w", ".v.b", ".o.w", ".o.b", ".ln2.g", ".ln2.b",
                             ".fc1.w", ".fc1.b", ".fc2.w", ".fc2.b"}) {
        ps.at("xattn.s2.t" + std::string(part)).value =
            ps.at("xattn.s2.p" + std::string(part)).value;
    }
    const int c = toy_encoder_config().channels[1];
    Rng tr(52);
    Mat f = random_tokens(4, c, tr);
    Graph g;
    auto [zp, zt] = exchange(g, ps, 2, CrossAttentionConfig{2, 4, 4}, g.input(f), g.input(f));
    CHECK(g.value(zp).a == g.value(zt).a);
}

TEST_CASE("exchange outside stages 2 and 3 is a configuration error") {
    Rng rng(53);
    ParamStore ps = make_xattn_store(rng);
    Graph g;
    Mat f(4, 16, 0.1);
    CHECK_THROWS_AS(exchange(g, ps, 1, CrossAttentionConfig{}, g.input(f), g.input(f)),
                    DataError);
    CHECK_THROWS_AS(exchange(g, ps, 4, CrossAttentionConfig{}, g.input(f), g.input(f)),
                    DataError);
}

TEST_CASE("token permutation equivariance") {
    Rng rng(54);
    ParamStore ps = make_xattn_store(rng);
    const int c = toy_encoder_config().channels[1];
    const int n = 6;
    Rng tr(55);
    Mat q_src = random_tokens(n, c, tr);
    Mat kv_src = random_tokens(n, c, tr);

    Graph g;
    TensorRef z = cross_attend(g, ps, "xattn.s2.p", g.input(q_src), g.input(kv_src), 2);

    const int perm[n] = {3, 0, 5, 1, 4, 2};
    Mat qp(n, c), kvp(n, c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            qp.at(i, j) = q_src.at(perm[i], j);
            kvp.at(i, j) = kv_src.at(perm[i], j);
        }
    TensorRef zp = cross_attend(g, ps, "xattn.s2.p", g.input(qp), g.input(kvp), 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            CHECK(g.value(zp).at(i, j) ==
                  doctest::Approx(g.value(z).at(perm[i], j)).epsilon(1e-10));
        }
}

TEST_CASE("finite-difference gradients through a 2x2-token exchange") {
    Rng rng(56);
    ParamStore ps;
    EncoderConfig enc = tiny_encoder_config();  // stage-2 channels: 8
    build_cross_attention_params(ps, enc, CrossAttentionConfig{2, 2, 2}, rng);
    Rng tr(57);
    Mat fp = random_tokens(4, enc.channels[1], tr);
    Mat ft = random_tokens(4, enc.channels[1], tr);
    Mat w(enc.channels[1], 1);
    for (double& v : w.a) v = tr.uniform(-1.0, 1.0);

    auto build = [&](Graph& g) {
        auto [zp, zt] = exchange(g, ps, 2, CrossAttentionConfig{2, 2, 2}, g.input(fp),
                                 g.input(ft));
        Mat ones(1, 4, 1.0);
        TensorRef a = g.matmul(g.matmul(g.input(ones), zp), g.input(w));
        TensorRef b = g.matmul(g.matmul(g.input(ones), zt), g.input(w));
        return g.add(a, b);
    };
    ps.zero_grads();
    {
        Graph g;
        g.backward(build(g));
    }
    auto loss = [&]() {
        Graph g;
        return g.value(build(g)).at(0, 0);
    };
    const auto report = testutil::finite_diff_check(ps, loss, {1e-5, 4, 1e-7});
    CAPTURE(report.worst);
    CHECK(report.max_rel_err < 1e-4);
}
