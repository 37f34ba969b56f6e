#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <scaa/nn.hpp>

#include <cmath>

using scaa::Shape;
using scaa::TensorD;

TEST_CASE("param store registration") {
    scaa::ParamStore<double> ps;
    auto a = ps.create("a", {2, 3});
    ps.create("b", {4});
    CHECK(ps.count() == 2);
    CHECK(ps.total_parameters() == 10);
    CHECK(ps.names() == std::vector<std::string>{"a", "b"});
    CHECK(ps.has("a"));
    CHECK(!ps.has("c"));
    CHECK_THROWS(ps.create("a", {1}));
    CHECK_THROWS(ps.get("missing"));

    a.mutable_value()[0] = 1.0;
    CHECK(ps.get("a").value()[0] == 1.0);  // store aliases the handed-out tensor

    scaa::sum_all(scaa::mul(a, a)).backward();
    CHECK(ps.get("a").has_grad());
    ps.zero_grad();
    CHECK(!ps.get("a").has_grad());
}

TEST_CASE("kaiming uniform init") {
    scaa::ParamStore<double> ps;
    auto w = ps.create("w", {16, 8, 3, 3});
    scaa::Rng rng(42);
    scaa::kaiming_uniform(w, 8 * 3 * 3, rng);
    const double bound = std::sqrt(6.0 / (8 * 3 * 3));
    double mx = 0;
    for (double v : w.value()) {
        CHECK(std::abs(v) <= bound);
        mx = std::max(mx, std::abs(v));
    }
    CHECK(mx > 0.5 * bound);  // actually spread out, not stuck near zero

    scaa::ParamStore<double> ps2;
    auto w2 = ps2.create("w", {16, 8, 3, 3});
    scaa::Rng rng2(42);
    scaa::kaiming_uniform(w2, 8 * 3 * 3, rng2);
    CHECK(w.value() == w2.value());
}

TEST_CASE("conv layers register and run") {
    scaa::ParamStore<double> ps;
    scaa::Rng rng(1);
    auto c2 = scaa::Conv2dLayer<double>::create(ps, "c2", 3, 5, 3, 1, rng);
    auto c3 = scaa::Conv3dLayer<double>::create(ps, "c3", 2, 4, 3, 1, rng, 2);
    CHECK(ps.has("c2.w"));
    CHECK(ps.has("c2.b"));
    CHECK(ps.get("c2.w").shape() == Shape{5, 3, 3, 3});
    CHECK(ps.get("c3.w").shape() == Shape{4, 2, 3, 3, 3});
    CHECK(ps.total_parameters() == (5 * 3 * 9 + 5) + (4 * 2 * 27 + 4));

    auto y2 = c2(TensorD::filled({3, 8, 8}, 1.0));
    CHECK(y2.shape() == Shape{5, 8, 8});
    auto y3 = c3(TensorD::filled({2, 8, 8, 8}, 1.0));
    CHECK(y3.shape() == Shape{4, 4, 4, 4});
}

TEST_CASE("instance norm layer defaults") {
    scaa::ParamStore<double> ps;
    auto n = scaa::InstanceNormLayer<double>::create(ps, "n", 3);
    CHECK(n.gamma.value() == std::vector<double>{1, 1, 1});
    CHECK(n.beta.value() == std::vector<double>{0, 0, 0});
}

TEST_CASE("conv block features and pooling") {
    scaa::ParamStore<double> ps;
    scaa::Rng rng(2);
    auto blk = scaa::ConvBlock2D<double>::create(ps, "b", 1, 4, rng, true);
    auto x = TensorD::filled({1, 8, 8}, 0.5);
    auto f = blk.features(x);
    CHECK(f.shape() == Shape{4, 8, 8});
    auto y = blk(x);
    CHECK(y.shape() == Shape{4, 4, 4});
    CHECK(ps.total_parameters() == scaa::ConvBlock2D<double>::parameter_count(1, 4));

    scaa::ParamStore<double> ps2;
    auto nopool = scaa::ConvBlock2D<double>::create(ps2, "b", 1, 4, rng, false);
    CHECK(nopool(x).shape() == Shape{4, 8, 8});
}

TEST_CASE("residual block identity path") {
    scaa::ParamStore<double> ps;
    scaa::Rng rng(3);
    auto blk = scaa::ResidualBlock3D<double>::create(ps, "r", 4, 4, rng);
    CHECK(!blk.has_skip_proj);
    CHECK(!ps.has("r.skip.w"));
    CHECK(ps.total_parameters() == scaa::ResidualBlock3D<double>::parameter_count(4, 4));

    // zeroed stages leave only the skip, which is the identity here
    for (auto& t : ps.tensors())
        for (auto& v : t.mutable_value()) v = 0.0;
    scaa::Rng rx(4);
    std::vector<double> data(4 * 4 * 4 * 4);
    for (auto& v : data) v = rx.uniform(-1, 1);
    auto x = TensorD::from_vector({4, 4, 4, 4}, data);
    CHECK(blk(x).value() == data);
}

TEST_CASE("residual block projection path") {
    scaa::ParamStore<double> ps;
    scaa::Rng rng(5);
    auto blk = scaa::ResidualBlock3D<double>::create(ps, "r", 2, 6, rng);
    CHECK(blk.has_skip_proj);
    CHECK(ps.has("r.skip.w"));
    CHECK(ps.get("r.skip.w").shape() == Shape{6, 2, 1, 1, 1});
    CHECK(ps.total_parameters() == scaa::ResidualBlock3D<double>::parameter_count(2, 6));

    auto y = blk(TensorD::filled({2, 4, 4, 4}, 1.0));
    CHECK(y.shape() == Shape{6, 4, 4, 4});
}

TEST_CASE("registration order is construction order") {
    scaa::ParamStore<double> ps;
    scaa::Rng rng(6);
    scaa::ConvUnit2D<double>::create(ps, "u", 2, 3, rng);
    CHECK(ps.names() ==
          std::vector<std::string>{"u.conv.w", "u.conv.b", "u.norm.g", "u.norm.b"});
}

TEST_CASE("gradients flow through composite layers") {
    scaa::ParamStore<double> ps;
    scaa::Rng rng(7);
    auto blk = scaa::ResidualBlock3D<double>::create(ps, "r", 2, 3, rng);
    auto x = TensorD::filled({2, 2, 2, 2}, 0.7, true);
    scaa::sum_all(blk(x)).backward();
    CHECK(x.has_grad());
    for (const auto& t : ps.tensors()) CHECK(t.has_grad());
}
