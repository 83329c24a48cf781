#include <doctest.h>

#include "testutil.hpp"
#include "wsseg/checkpoint.hpp"
#include "wsseg/errors.hpp"
#include "wsseg/optimizer.hpp"
#include "wsseg/rng.hpp"

using namespace wsseg;

TEST_CASE("checkpoint round-trip is bit-exact including flags and adam state") {
    Rng rng(3);
    ParamStore ps;
    ps.create_trunc_normal("enc.w", 5, 4, rng);
    ps.create_trunc_normal("enc.b", 1, 4, rng);
    ps.create_trunc_normal("head.w", 4, 2, rng);
    ps.at("enc.w").trainable = false;
    for (double& v : ps.at("head.w").adam_m.a) v = rng.uniform();
    for (double& v : ps.at("head.w").adam_v.a) v = rng.uniform();

    const auto dir = testutil::scratch_dir("ckpt");
    const auto path = dir / "model.bin";
    save_checkpoint(ps, path, {{"note", "test"}}, 17);

    ParamStore loaded;
    Rng rng2(999);
    loaded.create_trunc_normal("enc.w", 5, 4, rng2);
    loaded.create_trunc_normal("enc.b", 1, 4, rng2);
    loaded.create_trunc_normal("head.w", 4, 2, rng2);
    const LoadReport rep = load_checkpoint(loaded, path);
    CHECK(rep.loaded.size() == 3);
    CHECK(rep.fresh.empty());
    CHECK(rep.adam_step == 17);
    CHECK(rep.meta.at("note") == "test");
    for (const auto& [name, p] : ps.items()) {
        const Param& q = loaded.at(name);
        CHECK(p.value.a == q.value.a);
        CHECK(p.adam_m.a == q.adam_m.a);
        CHECK(p.adam_v.a == q.adam_v.a);
        CHECK(p.trainable == q.trainable);
    }
}

TEST_CASE("partial load reports freshly initialized tensors") {
    Rng rng(4);
    ParamStore saved;
    saved.create_trunc_normal("enc.w", 3, 3, rng);
    const auto dir = testutil::scratch_dir("ckpt_partial");
    save_checkpoint(saved, dir / "enc.bin");

    ParamStore model;
    Rng rng2(5);
    model.create_trunc_normal("enc.w", 3, 3, rng2);
    model.create_trunc_normal("head.w", 3, 2, rng2);
    const Mat fresh_head = model.at("head.w").value;
    const LoadReport rep = load_checkpoint(model, dir / "enc.bin");
    CHECK(rep.loaded == std::vector<std::string>{"enc.w"});
    CHECK(rep.fresh == std::vector<std::string>{"head.w"});
    CHECK(model.at("enc.w").value.a == saved.at("enc.w").value.a);
    CHECK(model.at("head.w").value.a == fresh_head.a);
}

TEST_CASE("shape mismatch and corrupt files raise checkpoint errors") {
    Rng rng(6);
    ParamStore saved;
    saved.create_trunc_normal("w", 3, 3, rng);
    const auto dir = testutil::scratch_dir("ckpt_bad");
    save_checkpoint(saved, dir / "w.bin");

    ParamStore wrong;
    wrong.create("w", 2, 3);
    CHECK_THROWS_AS(load_checkpoint(wrong, dir / "w.bin"), DataError);

    // Truncate the payload: the offending tensor is named.
    auto bytes = std::filesystem::file_size(dir / "w.bin");
    std::filesystem::resize_file(dir / "w.bin", bytes - 16);
    ParamStore ok;
    ok.create("w", 3, 3);
    try {
        load_checkpoint(ok, dir / "w.bin");
        FAIL("expected a checkpoint error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("\"w\"") != std::string::npos);
    }
}

TEST_CASE("adam skips frozen parameters entirely") {
    Rng rng(7);
    ParamStore ps;
    ps.create_trunc_normal("a", 2, 2, rng);
    ps.create_trunc_normal("b", 2, 2, rng);
    ps.at("a").trainable = false;
    const Mat a0 = ps.at("a").value;
    const Mat b0 = ps.at("b").value;

    Adam opt(AdamConfig{1e-2, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 10; ++i) {
        ps.zero_grads();
        for (auto& [_, p] : ps.items())
            for (double& gv : p.grad.a) gv = 0.5;
        opt.step(ps);
    }
    CHECK(ps.at("a").value.a == a0.a);           // bit-identical
    CHECK(ps.at("a").adam_m.a == Mat(2, 2).a);   // moments untouched
    CHECK(ps.at("b").value.a != b0.a);
}

TEST_CASE("set_trainable_by_prefix matches name prefixes only") {
    Rng rng(8);
    ParamStore ps;
    ps.create_trunc_normal("primary.s1.w", 2, 2, rng);
    ps.create_trunc_normal("primary.s12.w", 2, 2, rng);
    ps.set_trainable_by_prefix({"primary.s1."}, false);
    CHECK_FALSE(ps.at("primary.s1.w").trainable);
    CHECK(ps.at("primary.s12.w").trainable);
}
