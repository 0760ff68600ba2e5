#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "hemodet/gabor.hpp"

using namespace hemodet;
using namespace hemodet::nn;
using hdtest::max_grad_err;
using hdtest::random_tensor;

namespace {

GaborParams default_params() {
  GaborParams p;  // lambda=4, psi=0, sigma=2, aspect=0.5, K=7
  return p;
}

}  // namespace

TEST_SUITE("gabor") {

TEST_CASE("kernel value at origin equals cos(psi)") {
  GaborParams p = default_params();
  Tensor k = gabor_kernel(p, 0.0);
  long r = p.kernel_size / 2;
  CHECK(k.at(r, r) == doctest::Approx(1.0).epsilon(1e-9));

  p.phase = M_PI / 2.0;
  Tensor k2 = gabor_kernel(p, 0.3);
  CHECK(std::abs(k2.at(r, r)) < 1e-12);
}

TEST_CASE("kernel value at (2,0) matches the closed form") {
  // lambda=4, theta=0, psi=0, sigma=2, gamma=0.5 at (x,y)=(2,0):
  // exp(-4/8) * cos(pi) = -exp(-0.5)
  GaborParams p = default_params();
  Tensor k = gabor_kernel(p, 0.0);
  long r = p.kernel_size / 2;
  CHECK(k.at(r, r + 2) == doctest::Approx(-std::exp(-0.5)).epsilon(1e-9));
  CHECK(k.at(r, r + 2) == doctest::Approx(-0.606531).epsilon(1e-4));
}

TEST_CASE("kernel rotation symmetry") {
  // theta=pi/2 swaps the roles of x and y axes
  GaborParams p = default_params();
  Tensor k0 = gabor_kernel(p, 0.0);
  Tensor k90 = gabor_kernel(p, M_PI / 2.0);
  long K = p.kernel_size;
  for (long y = 0; y < K; ++y)
    for (long x = 0; x < K; ++x)
      CHECK(k90.at(y, x) == doctest::Approx(k0.at(K - 1 - x, y)).epsilon(1e-9));
  CHECK_THROWS_AS(gabor_kernel(GaborParams{4, 0, -1, 0.5, 7, 4}, 0.0), ConfigError);
}

TEST_CASE("discrete laplacian identities") {
  // constant field -> zero everywhere (replicate border telescopes exactly)
  Tensor c = Tensor::full({5, 5}, 3.25);
  Tensor lc = laplacian_of_kernel(c);
  CHECK(lc.abs_max() < 1e-12);

  // f(x) = x^2 -> laplacian 2 in the interior
  Tensor q({7, 7});
  for (long y = 0; y < 7; ++y)
    for (long x = 0; x < 7; ++x) q.at(y, x) = static_cast<double>(x * x);
  Tensor lq = laplacian_of_kernel(q);
  for (long y = 1; y < 6; ++y)
    for (long x = 1; x < 6; ++x) CHECK(lq.at(y, x) == doctest::Approx(2.0));
}

TEST_CASE("laplacian-of-gabor kernels sum to zero") {
  GaborBank bank = make_gabor_bank(default_params());
  CHECK(bank.lg.size() == 4);
  for (const Tensor& k : bank.lg) {
    CHECK(std::abs(k.sum()) < 1e-12);
    CHECK(k.all_finite());
  }
}

TEST_CASE("lg filter annihilates constant maps") {
  GaborBank bank = make_gabor_bank(default_params());
  Var y = lg_filter(constant(Tensor::full({2, 9, 9}, 1.7)), bank);
  CHECK(y.value().abs_max() < 1e-9);
}

TEST_CASE("lg filter responds to edges and is differentiable") {
  GaborBank bank = make_gabor_bank(default_params());
  Tensor step({1, 9, 9});
  for (long y = 0; y < 9; ++y)
    for (long x = 5; x < 9; ++x) step.at(0, y, x) = 1.0;
  Var resp = lg_filter(constant(step), bank);
  CHECK(resp.value().abs_max() > 0.01);

  RngStream rng(5);
  Tensor x = random_tensor({2, 6, 6}, rng);
  CHECK(max_grad_err([&](std::vector<Var>& v) {
          Var y2 = lg_filter(v[0], bank);
          return sum(mul(y2, y2));
        }, {x}) < 1e-5);
}

}  // TEST_SUITE
