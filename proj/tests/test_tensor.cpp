#include <cmath>
#include <vector>

#include "alto/adam.hpp"
#include "alto/gradcheck.hpp"
#include "alto/rng.hpp"
#include "alto/tensor.hpp"
#include "doctest.h"

using namespace alto;
using D = Tensor<double>;

namespace {

void check_close(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= tol);
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed, 77);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("rng: counter generator is reproducible and stream-separated") {
  Rng a(42, 1), b(42, 1), c(42, 2);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    auto va = a.next_u64(), vb = b.next_u64(), vc = c.next_u64();
    all_equal = all_equal && va == vb;
    any_diff = any_diff || va != vc;
  }
  CHECK(all_equal);
  CHECK(any_diff);
  Rng d(42, 1);
  CHECK(d.value_at(7) == Rng(42, 1).value_at(7));
  double u = Rng(9, 9).next_uniform();
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
}

TEST_CASE("rng: gaussian moments are sane") {
  Rng rng(7, 3);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    sum += g;
    sum2 += g * g;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("linear: identity weight reproduces input") {
  auto x = D::from({2, 3}, {1, 2, 3, 4, 5, 6});
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  auto w = D::from({3, 3}, eye);
  auto y = linear(x, w);
  check_close(y.values(), x.values(), 0.0);
}

TEST_CASE("linear: zero weight with bias broadcasts the bias") {
  auto x = D::from({4, 2}, random_vec(8, 1));
  auto w = D::zeros({2, 3});
  auto b = D::from({3}, {0.5, -1.0, 2.0});
  auto y = linear(x, w, b);
  for (int r = 0; r < 4; ++r) {
    CHECK(y.values()[r * 3 + 0] == 0.5);
    CHECK(y.values()[r * 3 + 1] == -1.0);
    CHECK(y.values()[r * 3 + 2] == 2.0);
  }
}

TEST_CASE("linear: matches triple-loop oracle on random instances") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(100 + trial, 5);
    std::size_t n = 1 + rng.next_u64() % 5, in = 1 + rng.next_u64() % 6, out = 1 + rng.next_u64() % 6;
    auto xv = random_vec(n * in, 200 + trial);
    auto wv = random_vec(in * out, 300 + trial);
    auto bv = random_vec(out, 400 + trial);
    auto y = linear(D::from({n, in}, xv), D::from({in, out}, wv), D::from({out}, bv));
    std::vector<double> want(n * out);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < out; ++j) {
        double acc = bv[j];
        for (std::size_t i = 0; i < in; ++i) acc += xv[r * in + i] * wv[i * out + j];
        want[r * out + j] = acc;
      }
    check_close(y.values(), want, 1e-12);
  }
}

TEST_CASE("elementwise: relu, sigmoid, add, sub, mul, scale oracles") {
  auto a = D::from({5}, {-2, -0.5, 0, 0.5, 2});
  check_close(relu(a).values(), {0, 0, 0, 0.5, 2}, 0.0);
  auto s = sigmoid(D::from({3}, {0.0, 100.0, -100.0}));
  CHECK(s.values()[0] == 0.5);
  CHECK(s.values()[1] == doctest::Approx(1.0));
  CHECK(s.values()[2] == doctest::Approx(0.0));
  auto x = D::from({4}, {1, 2, 3, 4});
  auto y = D::from({4}, {10, 20, 30, 40});
  check_close(add(x, y).values(), {11, 22, 33, 44}, 0.0);
  check_close(sub(y, x).values(), {9, 18, 27, 36}, 0.0);
  check_close(mul(x, y).values(), {10, 40, 90, 160}, 0.0);
  check_close(scale(x, -2.0).values(), {-2, -4, -6, -8}, 0.0);
  CHECK(sum(x).item() == 10.0);
  CHECK(mean(x).item() == 2.5);
}

TEST_CASE("elementwise: clamp and log") {
  auto x = D::from({4}, {-1.0, 0.5, 1.5, 0.0});
  check_close(clamp(x, 0.0, 1.0).values(), {0.0, 0.5, 1.0, 0.0}, 0.0);
  auto l = log_elem(D::from({2}, {1.0, std::exp(2.0)}));
  CHECK(l.values()[0] == 0.0);
  CHECK(l.values()[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS((void)log_elem(D::from({1}, {-1.0})), Error);
}

TEST_CASE("shape ops: concat, reshape, expand_axis, sum_axis") {
  auto a = D::from({2, 2}, {1, 2, 3, 4});
  auto b = D::from({2, 1}, {9, 8});
  auto c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 3});
  check_close(c.values(), {1, 2, 9, 3, 4, 8}, 0.0);
  auto r = reshape(c, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  check_close(r.values(), c.values(), 0.0);
  auto e = expand_axis(D::from({2, 1, 2}, {1, 2, 3, 4}), 1, 3);
  CHECK(e.shape() == Shape{2, 3, 2});
  check_close(e.values(), {1, 2, 1, 2, 1, 2, 3, 4, 3, 4, 3, 4}, 0.0);
  auto s = sum_axis(e, 1);
  CHECK(s.shape() == Shape{2, 2});
  check_close(s.values(), {3, 6, 9, 12}, 0.0);
}

TEST_CASE("softmax: uniform on constant rows, sums to one, shift invariant") {
  auto u = softmax(D::full({2, 4}, 3.0), 1);
  for (double v : u.values()) CHECK(v == doctest::Approx(0.25));
  auto xv = random_vec(3 * 5, 11);
  auto y = softmax(D::from({3, 5}, xv), 1);
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += y.values()[r * 5 + j];
    CHECK(s == doctest::Approx(1.0));
  }
  auto shifted = xv;
  for (auto& v : shifted) v += 17.5;
  auto y2 = softmax(D::from({3, 5}, shifted), 1);
  check_close(y2.values(), y.values(), 1e-12);
  // analytic two-entry case
  auto t = softmax(D::from({1, 2}, {0.0, std::log(3.0)}), 1);
  CHECK(t.values()[0] == doctest::Approx(0.25));
  CHECK(t.values()[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax: middle-axis softmax normalizes along that axis only") {
  auto xv = random_vec(2 * 3 * 4, 23);
  auto y = softmax(D::from({2, 3, 4}, xv), 1);
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int j = 0; j < 3; ++j) s += y.values()[(o * 3 + j) * 4 + i];
      CHECK(s == doctest::Approx(1.0));
    }
}

TEST_CASE("backward: sum seeds ones; scale and chain rule") {
  auto x = D::from({3}, {1, 2, 3}).set_requires_grad();
  auto loss = sum(scale(x, 4.0));
  backward(loss);
  check_close(x.grad(), {4, 4, 4}, 0.0);
}

TEST_CASE("backward: relu masks gradient at negative inputs") {
  auto x = D::from({4}, {-1.0, 2.0, -3.0, 4.0}).set_requires_grad();
  backward(sum(relu(x)));
  check_close(x.grad(), {0, 1, 0, 1}, 0.0);
}

TEST_CASE("backward: value reused twice accumulates both paths") {
  auto x = D::from({2}, {3.0, 5.0}).set_requires_grad();
  backward(sum(add(x, x)));
  check_close(x.grad(), {2, 2}, 0.0);
}

TEST_CASE("backward: untouched leaves report zero gradients") {
  auto x = D::from({2}, {1.0, 2.0}).set_requires_grad();
  auto y = D::from({2}, {1.0, 2.0}).set_requires_grad();
  backward(sum(x));
  check_close(y.grad(), {0, 0}, 0.0);
}

TEST_CASE("backward: repeated runs of the same program are bitwise identical") {
  auto run = [] {
    auto x = D::from({4, 3}, random_vec(12, 55)).set_requires_grad();
    auto w = D::from({3, 3}, random_vec(9, 56)).set_requires_grad();
    auto y = softmax(linear(relu(linear(x, w)), w), 1);
    backward(sum(mul(y, y)));
    return std::make_pair(x.grad(), w.grad());
  };
  auto [gx1, gw1] = run();
  auto [gx2, gw2] = run();
  CHECK(gx1 == gx2);
  CHECK(gw1 == gw2);
}

TEST_CASE("grad_check: quadratic has analytic gradient") {
  auto f = [](const std::vector<D>& in) { return sum(mul(in[0], in[0])); };
  auto report = grad_check<double>(f, {D::from({3}, {1.0, 2.0, 3.0})});
  CHECK(report.max_rel_err < 1e-9);
  CHECK(report.coords_checked == 3);
}

TEST_CASE("grad_check: two-layer MLP with sigmoid passes tightly") {
  auto x = D::from({4, 3}, random_vec(12, 60, 0.1, 1.0));
  auto f = [&](const std::vector<D>& in) {
    auto h = sigmoid(linear(x, in[0], in[1]));
    return sum(mul(h, linear(h, in[2])));
  };
  std::vector<D> params = {D::from({3, 5}, random_vec(15, 61)), D::from({5}, random_vec(5, 62)),
                           D::from({5, 5}, random_vec(25, 63))};
  auto report = grad_check<double>(f, params);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check: coordinate cap strides deterministically") {
  auto f = [](const std::vector<D>& in) { return sum(mul(in[0], in[0])); };
  auto report = grad_check<double>(f, {D::from({100}, random_vec(100, 64))}, 1e-6, 10);
  CHECK(report.coords_checked == 10);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
  auto p = D::from({1}, {1.0}).set_requires_grad();
  backward(scale(p, 0.5));  // dL/dp = 0.5
  std::vector<D> params = {p};
  auto state = AdamState<double>::init(params);
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(params, state, cfg);
  CHECK(p.values()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(state.t == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto p = D::from({3}, {1.0, -2.0, 3.0});
  std::vector<D> params = {p};
  auto state = AdamState<double>::init(params);
  AdamConfig cfg;
  adam_step(params, state, cfg);  // grads never touched -> zeros
  check_close(p.values(), {1.0, -2.0, 3.0}, 0.0);
}

TEST_CASE("adam: three steps match an independent reference trace") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> grads = {0.3, -0.7, 1.1};
  auto p = D::from({1}, {0.5}).set_requires_grad();
  std::vector<D> params = {p};
  auto state = AdamState<double>::init(params);
  AdamConfig cfg;
  cfg.lr = lr;

  // independent scalar Adam
  double ref = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    ref -= lr * mh / (std::sqrt(vh) + eps);

    p.clear_grad();
    backward(scale(p, grads[t - 1]));
    adam_step(params, state, cfg);
    CHECK(p.values()[0] == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("adam: non-finite gradient aborts with a numeric error") {
  auto p = D::from({1}, {1.0}).set_requires_grad();
  backward(scale(p, 1.0));
  p.node()->grad[0] = std::nan("");
  std::vector<D> params = {p};
  auto state = AdamState<double>::init(params);
  AdamConfig cfg;
  CHECK_THROWS_AS(adam_step(params, state, cfg), Error);
}

TEST_CASE("tensor: shape mismatch raises a dimension error naming shapes") {
  auto a = D::zeros({2, 3});
  auto b = D::zeros({3, 2});
  try {
    (void)add(a, b);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    CHECK(std::string(e.what()).find("[2, 3]") != std::string::npos);
  }
}

TEST_CASE("tensor: f32 instantiation runs the same programs") {
  using F = Tensor<float>;
  auto x = F::from({2, 2}, {1.f, 2.f, 3.f, 4.f}).set_requires_grad();
  auto y = sum(mul(x, x));
  backward(y);
  CHECK(y.item() == doctest::Approx(30.f));
  CHECK(x.grad()[3] == doctest::Approx(8.f));
}
