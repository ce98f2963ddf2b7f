#include <gtest/gtest.h>

#include <cmath>

#include "mtsnn/custom_grad.hpp"
#include "mtsnn/neuron.hpp"
#include "mtsnn/op_counter.hpp"
#include "mtsnn/ops.hpp"
#include "testing.hpp"

using namespace mtsnn;
using mtsnn::testing::gradcheck;
using mtsnn::testing::random_tensor;

namespace {

using Inputs = std::vector<Tensor<double>>;

// Direct seven-loop convolution (cross-correlation) with zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k, Conv2dOptions o) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oc = k.dim(0), ks = k.dim(2);
  const long pad = static_cast<long>(conv_padding(ks, o.padding));
  const std::size_t oh = conv_output_size(h, ks, o.stride, o.padding);
  const std::size_t ow = conv_output_size(w, ks, o.stride, o.padding);
  std::vector<double> out(n * oc * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t f = 0; f < oc; ++f)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = 0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t ky = 0; ky < ks; ++ky)
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const long iy = static_cast<long>(y * o.stride + ky) - pad;
                const long ix = static_cast<long>(xo * o.stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += x.at(((b * c + ch) * h + iy) * w + ix) * k.at(((f * c + ch) * ks + ky) * ks + kx);
              }
          out[((b * oc + f) * oh + y) * ow + xo] = acc;
        }
  return Tensor<double>({n, oc, oh, ow}, out);
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor<double> t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.numel(), numel(t.shape()));
}

TEST(Ops, MatmulByIdentity) {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> id({2, 2}, {1, 0, 0, 1});
  auto y = matmul(a, id);
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Ops, ConvOfOnesIsNine) {
  auto y = conv2d(Tensor<double>::full({1, 1, 3, 3}, 1.0), Tensor<double>::full({1, 1, 3, 3}, 1.0),
                  {1, Padding::Valid});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Ops, MeanOfOneToFour) { EXPECT_EQ(mean(Tensor<double>({4}, {1, 2, 3, 4})).item(), 2.5); }

TEST(Ops, ConvMatchesDirectSummation) {
  Rng rng(1);
  int cases = 0;
  for (std::size_t k : {1, 3, 5})
    for (std::size_t stride : {1, 2})
      for (Padding pad : {Padding::Same, Padding::Valid})
        for (std::size_t size : {5, 8}) {
          auto x = random_tensor({2, 3, size, size + 1}, rng);
          auto w = random_tensor({4, 3, k, k}, rng);
          Conv2dOptions o{stride, pad};
          EXPECT_LT(mtsnn::testing::max_abs_diff(conv2d(x, w, o), conv_oracle(x, w, o)), 1e-12)
              << "k=" << k << " stride=" << stride << " size=" << size;
          ++cases;
        }
  EXPECT_GE(cases, 20);
}

TEST(Autograd, SquareHasGradientTwoW) {
  Tensor<double> w({1}, {3.0}, true);
  auto g = backward(sum(mul(w, w)));
  EXPECT_EQ(g.at(w).at(0), 6.0);
}

TEST(Autograd, FanOutAccumulates) {
  Tensor<double> x({1}, {2.0}, true);
  // y = x + x * x + x -> dy/dx = 2 + 2x
  auto g = backward(sum(add(add(x, mul(x, x)), x)));
  EXPECT_EQ(g.at(x).at(0), 6.0);
}

TEST(Autograd, DetachedTensorGetsNoGradient) {
  Tensor<double> x({2}, {1.0, 2.0}, true);
  auto d = x.detach();
  auto g = backward(sum(mul(x, d)));
  EXPECT_FALSE(g.contains(d));
  EXPECT_EQ(g.at(x).at(1), 2.0);
}

TEST(Autograd, NoGradGuardStopsRecording) {
  Tensor<double> x({2}, {1.0, 2.0}, true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_recording_enabled());
}

TEST(Autograd, IdenticalGraphsGiveBitIdenticalGradients) {
  Rng rng(2);
  auto xv = random_tensor({3, 4}, rng);
  auto wv = random_tensor({4, 5}, rng);
  auto run = [&] {
    Tensor<double> x = Tensor<double>(xv.shape(), {xv.values().begin(), xv.values().end()}, true);
    Tensor<double> w = Tensor<double>(wv.shape(), {wv.values().begin(), wv.values().end()}, true);
    auto g = backward(mean(matmul(x, w)));
    return std::vector<double>(g.at(w).values().begin(), g.at(w).values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Autograd, MeanMatmulMatchesFiniteDifferences) {
  Rng rng(3);
  auto f = [](const Inputs& in) { return mean(matmul(in[0], in[1])); };
  EXPECT_LT(gradcheck(f, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}), 1e-4);
}

// Every differentiable primitive, several shapes each.
TEST(Autograd, PrimitivesMatchFiniteDifferences) {
  const auto cases = mtsnn::testing::primitive_cases();
  EXPECT_GE(cases.size(), 20u);
  for (const auto& c : cases) EXPECT_LT(gradcheck(c.f, c.inputs), 1e-4) << c.name;
}

TEST(CustomGrad, PassThroughBackward) {
  CustomGrad<double> op([](const Tensor<double>& x) { return heaviside(x); },
                        [](const Tensor<double>& x) { return Tensor<double>::full(x.shape(), 1.0); });
  Tensor<double> x({2}, {-1.0, 1.0}, true);
  auto y = op(x);
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_EQ(y.at(1), 1.0);
  auto g = backward(sum(y));
  EXPECT_EQ(g.at(x).at(0), 1.0);
  EXPECT_EQ(g.at(x).at(1), 1.0);
}

TEST(CustomGrad, ZeroBackward) {
  CustomGrad<double> op([](const Tensor<double>& x) { return heaviside(x); },
                        [](const Tensor<double>& x) { return Tensor<double>::zeros(x.shape()); });
  Tensor<double> x({3}, {-1.0, 0.5, 2.0}, true);
  auto g = backward(sum(op(x)));
  for (double v : g.at(x).values()) EXPECT_EQ(v, 0.0);
}

TEST(OpCounter, MatmulTwoByTwo) {
  OpCounterScope scope;
  matmul(Tensor<double>::full({2, 2}, 1.0), Tensor<double>::full({2, 2}, 1.0));
  EXPECT_EQ(scope.counts().at("matmul").multiplications, 8u);
  EXPECT_EQ(scope.counts().at("matmul").additions, 4u);
}

TEST(OpCounter, EmptyScopeIsZero) {
  OpCounterScope scope;
  EXPECT_EQ(scope.counts().total(), OpCount{});
}

TEST(OpCounter, NestingThrowsAndTagsRedirect) {
  OpCounterScope scope;
  EXPECT_THROW(OpCounterScope{}, std::logic_error);
  {
    OpTagScope tag("custom");
    add(Tensor<double>::zeros({3}), Tensor<double>::zeros({3}));
  }
  EXPECT_EQ(scope.counts().at("custom").additions, 3u);
  EXPECT_EQ(scope.counts().at("add").additions, 0u);
}

TEST(OpCounter, OutsideScopeNothingIsRecorded) {
  matmul(Tensor<double>::full({2, 2}, 1.0), Tensor<double>::full({2, 2}, 1.0));
  OpCounterScope scope;
  EXPECT_EQ(scope.counts().total(), OpCount{});
}
