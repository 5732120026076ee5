#include <catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "sfsnid/ops.hpp"
#include "sfsnid/rng.hpp"
#include "sfsnid/tensor.hpp"

using namespace sfsnid;

namespace {
Tensor t4(int b, int c, int h, int w, std::vector<real> v) {
    return Tensor::from({b, c, h, w}, std::move(v));
}
} // namespace

TEST_CASE("elementwise arithmetic") {
    Tensor a = Tensor::from({4}, {1, -2, 3, 0});
    Tensor b = Tensor::from({4}, {2, 5, -1, 7});
    REQUIRE(add(a, b).values() == std::vector<real>{3, 3, 2, 7});
    REQUIRE(sub(a, b).values() == std::vector<real>{-1, -7, 4, -7});
    REQUIRE(mul(a, b).values() == std::vector<real>{2, -10, -3, 0});
    REQUIRE(scale(a, -2).values() == std::vector<real>{-2, 4, -6, 0});
    REQUIRE_THROWS(add(a, Tensor::from({3}, {1, 2, 3}))); // shape mismatch
}

TEST_CASE("power matches the library pow, including the brightness exponent") {
    Tensor x = Tensor::from({3}, {0.25, 0.5, 1.0});
    Tensor y = power(x, 1.3);
    REQUIRE(y.values()[0] == Catch::Approx(std::pow(0.25, 1.3)).epsilon(1e-14));
    REQUIRE(y.values()[0] == Catch::Approx(0.16493848884661177).epsilon(1e-12));
    REQUIRE(y.values()[1] == Catch::Approx(std::pow(0.5, 1.3)).epsilon(1e-14));
    REQUIRE(y.values()[2] == Catch::Approx(1.0));
}

TEST_CASE("absolute value and leaky relu") {
    Tensor x = Tensor::from({4}, {-2.0, -0.5, 0.0, 3.0});
    REQUIRE(abs_val(x).values() == std::vector<real>{2.0, 0.5, 0.0, 3.0});
    Tensor y = leaky_relu(x, 0.2);
    REQUIRE(y.values()[0] == Catch::Approx(-0.4));
    REQUIRE(y.values()[1] == Catch::Approx(-0.1));
    REQUIRE(y.values()[2] == 0.0);
    REQUIRE(y.values()[3] == 3.0);
}

TEST_CASE("sigmoid of zero is one half") {
    Tensor x = Tensor::from({3}, {0.0, 100.0, -100.0});
    Tensor y = sigmoid(x);
    REQUIRE(y.values()[0] == Catch::Approx(0.5));
    REQUIRE(y.values()[1] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(y.values()[2] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("softmax rows are probability distributions") {
    Rng rng(17);
    Tensor x = Tensor::random({3, 5}, rng, -4.0, 4.0);
    Tensor y = softmax(x, -1);
    for (int r = 0; r < 3; ++r) {
        real s = 0;
        for (int c = 0; c < 5; ++c) {
            real v = y.values()[static_cast<std::size_t>(r) * 5 + c];
            REQUIRE(v > 0.0);
            s += v;
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
    }
    // uniform logits give uniform probabilities
    Tensor u = softmax(Tensor::full({2, 4}, 3.0), 1);
    for (real v : u.values()) REQUIRE(v == Catch::Approx(0.25));
}

TEST_CASE("reductions") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    REQUIRE(sum(x).item() == 21.0);
    REQUIRE(mean(x).item() == Catch::Approx(3.5));
    Tensor m = mean_channels(t4(1, 3, 1, 2, {1, 2, 3, 4, 5, 6}));
    REQUIRE(m.shape() == std::vector<int>{1, 1, 1, 2});
    REQUIRE(m.values()[0] == Catch::Approx(3.0)); // (1+3+5)/3
    REQUIRE(m.values()[1] == Catch::Approx(4.0)); // (2+4+6)/3
}

TEST_CASE("channel concatenation preserves order") {
    Tensor a = t4(1, 1, 2, 2, {1, 2, 3, 4});
    Tensor b = t4(1, 2, 2, 2, {5, 6, 7, 8, 9, 10, 11, 12});
    Tensor c = concat_channels({a, b});
    REQUIRE(c.shape() == std::vector<int>{1, 3, 2, 2});
    REQUIRE(c.values() == std::vector<real>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    REQUIRE_THROWS(concat_channels({a, t4(1, 1, 3, 2, {1, 2, 3, 4, 5, 6})}));
}

TEST_CASE("gather validates its index map") {
    Tensor x = Tensor::from({3}, {10, 20, 30});
    auto idx = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{2, 0, 1, 2});
    Tensor y = gather(x, idx, {4});
    REQUIRE(y.values() == std::vector<real>{30, 10, 20, 30});
    auto bad = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{3});
    REQUIRE_THROWS(gather(x, bad, {1}));
}

TEST_CASE("nearest upsample and average downsample") {
    Tensor x = t4(1, 1, 2, 2, {1, 2, 3, 4});
    Tensor up = upsample2x(x);
    REQUIRE(up.shape() == std::vector<int>{1, 1, 4, 4});
    REQUIRE(up.values() ==
            std::vector<real>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    Tensor down = downsample2x(up);
    REQUIRE(down.values() == std::vector<real>{1, 2, 3, 4}); // exact inverse for constants
    Tensor d2 = downsample2x(t4(1, 1, 2, 2, {1, 2, 3, 4}));
    REQUIRE(d2.values()[0] == Catch::Approx(2.5));
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
    Tensor x = t4(1, 1, 1, 4, {1, 2, 3, 4});
    Tensor p = pad_reflect(x, 0, 0, 2, 2);
    REQUIRE(p.values() == std::vector<real>{3, 2, 1, 2, 3, 4, 3, 2});
    // vertical mirror
    Tensor y = t4(1, 1, 3, 1, {1, 2, 3});
    Tensor q = pad_reflect(y, 2, 2, 0, 0);
    REQUIRE(q.values() == std::vector<real>{3, 2, 1, 2, 3, 2, 1});
    REQUIRE_THROWS(pad_reflect(x, -1, 0, 0, 0));
}

TEST_CASE("crop undoes padding") {
    Rng rng(5);
    Tensor x = Tensor::random({1, 2, 4, 5}, rng);
    Tensor p = pad_reflect(x, 1, 2, 3, 1);
    Tensor c = crop(p, 1, 3, 4, 5);
    REQUIRE(c.values() == x.values());
    REQUIRE_THROWS(crop(x, 0, 0, 5, 5)); // window exceeds input
}

TEST_CASE("pad_to_multiple grows bottom/right to the next multiple") {
    Tensor x = Tensor::full({1, 1, 6, 6}, 1.0);
    Tensor p = pad_to_multiple(x, 4);
    REQUIRE(p.shape() == std::vector<int>{1, 1, 8, 8});
    Tensor same = pad_to_multiple(x, 3);
    REQUIRE(same.shape() == std::vector<int>{1, 1, 6, 6});
}

TEST_CASE("matmul against identity and a hand example") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    REQUIRE(matmul(a, eye).values() == a.values());
    REQUIRE(matmul(eye, a).values() == a.values());
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b); // [[19,22],[43,50]]
    REQUIRE(c.values() == std::vector<real>{19, 22, 43, 50});
    // matmul_nt(a, b) == a . b^T
    Tensor d = matmul_nt(a, b); // [[1*5+2*6, 1*7+2*8],[3*5+4*6, 3*7+4*8]]
    REQUIRE(d.values() == std::vector<real>{17, 23, 39, 53});
}

TEST_CASE("batched matmul broadcasts over leading dims") {
    Rng rng(21);
    Tensor a = Tensor::random({3, 2, 4}, rng, -1, 1);
    Tensor b = Tensor::random({3, 4, 5}, rng, -1, 1);
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == std::vector<int>{3, 2, 5});
    // check one entry by hand
    real want = 0;
    for (int k = 0; k < 4; ++k)
        want += a.values()[1 * 8 + 0 * 4 + k] * b.values()[1 * 20 + k * 5 + 2];
    REQUIRE(c.values()[1 * 10 + 0 * 5 + 2] == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("convolution with an identity kernel is the identity") {
    Rng rng(9);
    Tensor x = Tensor::random({2, 3, 5, 4}, rng);
    // 1x1 kernel mapping each channel to itself
    std::vector<real> w(3 * 3, 0.0);
    for (int c = 0; c < 3; ++c) w[static_cast<std::size_t>(c) * 3 + c] = 1.0;
    Tensor weight = Tensor::from({3, 3, 1, 1}, std::move(w));
    Tensor y = conv2d(x, weight, Tensor(), 1, 0);
    REQUIRE(y.values() == x.values());
}

TEST_CASE("3x3 all-ones convolution counts the k-neighbourhood") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(x, w, Tensor(), 1, same_padding(3));
    REQUIRE(y.shape() == std::vector<int>{1, 1, 3, 3});
    // zero padding: centre sees 9 ones, edges 6, corners 4
    REQUIRE(y.at4(0, 0, 1, 1) == 9.0);
    REQUIRE(y.at4(0, 0, 0, 1) == 6.0);
    REQUIRE(y.at4(0, 0, 0, 0) == 4.0);
}

TEST_CASE("convolution bias and stride") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0);
    Tensor w = Tensor::full({2, 1, 3, 3}, 1.0);
    Tensor b = Tensor::from({2}, {10.0, -10.0});
    Tensor y = conv2d(x, w, b, 2, 1);
    REQUIRE(y.shape() == std::vector<int>{1, 2, 2, 2});
    // top-left window of a padded all-ones image covers 4 ones
    REQUIRE(y.at4(0, 0, 0, 0) == 14.0);
    REQUIRE(y.at4(0, 1, 0, 0) == -6.0);
    REQUIRE_THROWS(conv2d(x, Tensor::full({1, 1, 5, 5}, 1.0), Tensor(), 1, 2)); // kernel size
    REQUIRE_THROWS(conv2d(x, Tensor::full({1, 2, 3, 3}, 1.0), Tensor(), 1, 1)); // channel count
}

TEST_CASE("layer norm hand values") {
    // token {1,3}: mean 2, variance 1 -> normalized to just under +-1 (eps)
    Tensor x = t4(1, 2, 1, 1, {1.0, 3.0});
    Tensor gain = Tensor::from({2}, {1.0, 1.0});
    Tensor bias = Tensor::from({2}, {0.0, 0.0});
    Tensor y = layer_norm(x, gain, bias);
    REQUIRE(y.values()[0] == Catch::Approx(-1.0).margin(1e-4));
    REQUIRE(y.values()[1] == Catch::Approx(1.0).margin(1e-4));
    REQUIRE(y.values()[0] == Catch::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-12));

    // constant token normalizes to zero before the affine part
    Tensor c = t4(1, 3, 2, 2, std::vector<real>(12, 7.0));
    Tensor g3 = Tensor::from({3}, {2.0, 3.0, 4.0});
    Tensor b3 = Tensor::from({3}, {0.5, 0.25, -1.0});
    Tensor z = layer_norm(c, g3, b3);
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < 4; ++i)
            REQUIRE(z.values()[static_cast<std::size_t>(ch) * 4 + i] ==
                    Catch::Approx(b3.values()[ch]).margin(1e-12));
}

TEST_CASE("layer norm output is scale-invariant per token") {
    Rng rng(31);
    Tensor x = Tensor::random({1, 4, 3, 3}, rng, 1.0, 2.0);
    std::vector<real> scaled = x.values();
    for (auto& v : scaled) v = v * 100.0; // same z-scores, larger magnitude
    Tensor xs = Tensor::from({1, 4, 3, 3}, std::move(scaled));
    Tensor gain = Tensor::full({4}, 1.0);
    Tensor bias = Tensor::zeros({4});
    Tensor a = layer_norm(x, gain, bias);
    Tensor b = layer_norm(xs, gain, bias);
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(a.values()[i] == Catch::Approx(b.values()[i]).margin(1e-3));
}

TEST_CASE("average pooling") {
    Tensor x = t4(1, 1, 2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor y = avg_pool(x, 2, 2);
    REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 2});
    REQUIRE(y.values()[0] == Catch::Approx(3.5));
    REQUIRE(y.values()[1] == Catch::Approx(5.5));
    REQUIRE_THROWS(avg_pool(x, 3, 2)); // window does not divide H
    Tensor g = global_avg_pool(x);
    REQUIRE(g.shape() == std::vector<int>{1, 1, 1, 1});
    REQUIRE(g.item() == Catch::Approx(4.5));
}

TEST_CASE("channel scaling broadcasts over the plane") {
    Tensor x = t4(1, 2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor w = t4(1, 2, 1, 1, {2.0, -1.0});
    Tensor y = scale_channels(x, w);
    REQUIRE(y.values() == std::vector<real>{2, 4, 6, 8, -5, -6, -7, -8});
    REQUIRE_THROWS(scale_channels(x, t4(1, 3, 1, 1, {1, 2, 3})));
}

TEST_CASE("non-finite forward values are rejected at the producing op") {
    Tensor x = Tensor::from({2}, {1.0, 0.0});
    REQUIRE_THROWS(power(x, -1.0)); // 0^-1 -> inf
    REQUIRE_THROWS(power(Tensor::from({1}, {-0.5}), 1.3)); // fractional exponent, negative base
}
