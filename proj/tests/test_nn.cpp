#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "touchloc/embedding.hpp"
#include "touchloc/nn.hpp"

using namespace touchloc;

namespace {

// Reference convolution: direct nested loops, no im2col.
template <typename T>
nn::Tensor<T> conv_reference(const nn::Tensor<T>& in, const T* weight,
                             const T* bias, int out_c, int k, int stride,
                             int pad) {
  int oh = (in.h + 2 * pad - k) / stride + 1;
  int ow = (in.w + 2 * pad - k) / stride + 1;
  nn::Tensor<T> out;
  out.resize(out_c, oh, ow);
  for (int oc = 0; oc < out_c; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T acc = bias[oc];
        for (int ic = 0; ic < in.c; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride + ky - pad;
              int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
              T w = weight[((static_cast<size_t>(oc) * in.c + ic) * k + ky) * k + kx];
              acc += w * in.v[(static_cast<size_t>(ic) * in.h + iy) * in.w + ix];
            }
          }
        }
        out.v[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv forward matches the direct-loop reference") {
  Rng rng(11);
  nn::Conv2d<double> conv(3, 4, 3, 2, 1);
  conv.init(rng);
  nn::Tensor<double> in;
  in.resize(3, 9, 9);
  for (auto& v : in.v) v = rng.normal();
  nn::Tensor<double> out, col;
  conv.forward(in, out, col);

  auto params = conv.params();
  nn::Tensor<double> ref = conv_reference<double>(in, params[0].w, params[1].w,
                                                  4, 3, 2, 1);
  REQUIRE(out.v.size() == ref.v.size());
  for (size_t i = 0; i < out.v.size(); ++i) {
    CHECK(out.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv backward: finite-difference check on weights and input") {
  Rng rng(23);
  nn::Conv2d<double> conv(2, 3, 3, 2, 1);
  conv.init(rng);
  nn::Tensor<double> in;
  in.resize(2, 7, 7);
  for (auto& v : in.v) v = rng.normal();

  nn::Tensor<double> out, col;
  conv.forward(in, out, col);
  std::vector<double> mix(out.v.size());
  for (auto& m : mix) m = rng.normal();
  auto objective = [&](const nn::Tensor<double>& input) {
    nn::Tensor<double> o, c;
    conv.forward(input, o, c);
    double s = 0;
    for (size_t i = 0; i < o.v.size(); ++i) s += mix[i] * o.v[i];
    return s;
  };

  nn::Tensor<double> dout;
  dout.resize(out.c, out.h, out.w);
  for (size_t i = 0; i < dout.v.size(); ++i) dout.v[i] = mix[i];
  nn::Tensor<double> din;
  conv.backward(in, col, dout, &din);

  const double eps = 1e-6;
  for (size_t i = 0; i < in.v.size(); i += 7) {
    nn::Tensor<double> plus = in, minus = in;
    plus.v[i] += eps;
    minus.v[i] -= eps;
    double fd = (objective(plus) - objective(minus)) / (2 * eps);
    CHECK(din.v[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  auto p = conv.params();
  for (size_t i = 0; i < p[0].n; i += 5) {
    double saved = p[0].w[i];
    p[0].w[i] = saved + eps;
    double up = objective(in);
    p[0].w[i] = saved - eps;
    double dn = objective(in);
    p[0].w[i] = saved;
    double fd = (up - dn) / (2 * eps);
    CHECK(p[0].g[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("linear backward: finite-difference check") {
  Rng rng(31);
  nn::Linear<double> lin(6, 4);
  lin.init(rng);
  std::vector<double> x(6), dy(4), y(4), dx(6);
  for (auto& v : x) v = rng.normal();
  for (auto& v : dy) v = rng.normal();
  lin.forward(x.data(), y.data());
  lin.backward(x.data(), dy.data(), dx.data());
  auto objective = [&](const std::vector<double>& input) {
    std::vector<double> out(4);
    lin.forward(input.data(), out.data());
    double s = 0;
    for (int i = 0; i < 4; ++i) s += dy[i] * out[i];
    return s;
  };
  const double eps = 1e-6;
  for (size_t i = 0; i < x.size(); ++i) {
    auto plus = x, minus = x;
    plus[i] += eps;
    minus[i] -= eps;
    double fd = (objective(plus) - objective(minus)) / (2 * eps);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy: hand-computed two-logit case") {
  // logits (0, log 3): softmax = (1/4, 3/4).
  double logits[2] = {0.0, std::log(3.0)};
  double dl[2];
  double loss = nn::cross_entropy_grad<double>(logits, 2, 1, dl);
  CHECK(loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(dl[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(dl[1] == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("relu conv stack backward: finite-difference check") {
  Rng rng(3);
  nn::ConvStack<double> stack(1, {2}, 8, 3, 2);
  stack.init(rng);
  nn::Tensor<double> in;
  in.resize(1, 8, 8);
  for (auto& v : in.v) v = rng.normal();
  nn::Workspace<double> ws;
  const auto& feat = stack.forward(in, ws);
  std::vector<double> dfeat(feat.size());
  for (auto& v : dfeat) v = rng.normal();
  auto objective = [&](const nn::Tensor<double>& input) {
    nn::Workspace<double> w2;
    const auto& f = stack.forward(input, w2);
    double s = 0;
    for (size_t i = 0; i < f.size(); ++i) s += dfeat[i] * f[i];
    return s;
  };
  auto params = stack.params();
  for (auto& p : params) std::fill(p.g, p.g + p.n, 0.0);
  stack.backward(dfeat, ws);
  const double eps = 1e-6;
  for (size_t i = 0; i < params[0].n; ++i) {
    double saved = params[0].w[i];
    params[0].w[i] = saved + eps;
    double up = objective(in);
    params[0].w[i] = saved - eps;
    double dn = objective(in);
    params[0].w[i] = saved;
    double fd = (up - dn) / (2 * eps);
    CHECK(params[0].g[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("sgd momentum: matches a hand rollout") {
  std::vector<float> w = {1.0f, -2.0f};
  std::vector<float> g = {0.5f, 0.25f};
  nn::ParamRef<float> ref{w.data(), g.data(), 2};
  nn::SgdOptimizer<float> opt({ref}, 0.9, 0.0);
  opt.step(0.1);
  CHECK(w[0] == doctest::Approx(1.0 - 0.05));
  opt.step(0.1);
  CHECK(w[0] == doctest::Approx(1.0 - 0.05 - 0.095));
}
