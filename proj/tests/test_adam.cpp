#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "rsrect/adam.hpp"

using namespace rsrect;

namespace {

std::vector<ParamRef<double>> refs(const std::string& name, std::vector<double>& v) {
  return {{name, &v}};
}

}  // namespace

TEST_CASE("first step moves by roughly lr in the gradient direction") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  for (double g : {1e-4, 0.5, 3.0, -2.0, -1e-3}) {
    std::vector<double> w{1.0};
    std::vector<double> gv{g};
    AdamState<double> st;
    auto pw = refs("w", w);
    auto pg = refs("w", gv);
    adam_step(cfg, st, pw, pg);
    // bias correction makes mhat = g and vhat = g^2 on step one
    double expect = 1.0 - cfg.lr * g / (std::abs(g) + cfg.eps);
    CHECK(w[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(st.step == 1);
  }
}

TEST_CASE("zero gradient leaves the parameters untouched") {
  AdamConfig cfg;
  std::vector<double> w{0.3, -1.7, 42.0};
  std::vector<double> g{0.0, 0.0, 0.0};
  AdamState<double> st;
  auto pw = refs("w", w);
  auto pg = refs("w", g);
  for (int s = 0; s < 5; ++s) adam_step(cfg, st, pw, pg);
  CHECK(w[0] == 0.3);
  CHECK(w[1] == -1.7);
  CHECK(w[2] == 42.0);
}

TEST_CASE("three steps reproduce a scalar reference implementation") {
  AdamConfig cfg;
  cfg.lr = 0.05;
  std::vector<double> w{2.0};
  AdamState<double> st;
  auto pw = refs("w", w);

  double rm = 0.0, rv = 0.0, rw = 2.0;
  const double grads[3] = {1.5, -0.25, 0.75};
  for (int s = 0; s < 3; ++s) {
    std::vector<double> g{grads[s]};
    auto pg = refs("w", g);
    adam_step(cfg, st, pw, pg);

    rm = cfg.beta1 * rm + (1.0 - cfg.beta1) * grads[s];
    rv = cfg.beta2 * rv + (1.0 - cfg.beta2) * grads[s] * grads[s];
    double mhat = rm / (1.0 - std::pow(cfg.beta1, double(s + 1)));
    double vhat = rv / (1.0 - std::pow(cfg.beta2, double(s + 1)));
    rw -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(w[0] == doctest::Approx(rw).epsilon(1e-14));
  }
}

TEST_CASE("descends a quadratic to its minimum") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  std::vector<double> w{0.0};
  AdamState<double> st;
  auto pw = refs("w", w);
  for (int s = 0; s < 100; ++s) {
    std::vector<double> g{2.0 * (w[0] - 3.0)};
    auto pg = refs("w", g);
    adam_step(cfg, st, pw, pg);
  }
  CHECK(std::abs(w[0] - 3.0) < 0.5);
}

TEST_CASE("multiple parameter groups keep independent moments") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  std::vector<double> a{1.0}, b{1.0};
  std::vector<double> ga{1.0}, gb{0.0};
  std::vector<ParamRef<double>> pw{{"a", &a}, {"b", &b}};
  std::vector<ParamRef<double>> pg{{"a", &ga}, {"b", &gb}};
  AdamState<double> st;
  for (int s = 0; s < 10; ++s) adam_step(cfg, st, pw, pg);
  CHECK(a[0] < 1.0);
  CHECK(b[0] == 1.0);
  CHECK(st.m.size() == 2);
}

TEST_CASE("non-finite gradients are rejected with the group name") {
  AdamConfig cfg;
  std::vector<double> w{1.0};
  std::vector<double> g{std::numeric_limits<double>::quiet_NaN()};
  AdamState<double> st;
  auto pw = refs("conv1.weight", w);
  auto pg = refs("conv1.weight", g);
  bool threw = false;
  try {
    adam_step(cfg, st, pw, pg);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("conv1.weight") != std::string::npos);
  }
  CHECK(threw);

  g[0] = std::numeric_limits<double>::infinity();
  AdamState<double> st2;
  CHECK_THROWS_AS(adam_step(cfg, st2, pw, pg), std::runtime_error);
}

TEST_CASE("mismatched list or buffer sizes are rejected") {
  AdamConfig cfg;
  std::vector<double> w{1.0, 2.0};
  std::vector<double> g{1.0};
  AdamState<double> st;
  std::vector<ParamRef<double>> pw{{"w", &w}};
  std::vector<ParamRef<double>> pg{{"w", &g}};
  CHECK_THROWS_AS(adam_step(cfg, st, pw, pg), std::invalid_argument);

  std::vector<ParamRef<double>> empty;
  CHECK_THROWS_AS(adam_step(cfg, st, pw, empty), std::invalid_argument);
}

TEST_CASE("state reinitializes when the group list changes") {
  AdamConfig cfg;
  std::vector<double> a{1.0}, b{2.0};
  std::vector<double> ga{0.5}, gb{0.5};
  AdamState<double> st;
  std::vector<ParamRef<double>> pw1{{"a", &a}};
  std::vector<ParamRef<double>> pg1{{"a", &ga}};
  adam_step(cfg, st, pw1, pg1);
  CHECK(st.m.size() == 1);

  std::vector<ParamRef<double>> pw2{{"a", &a}, {"b", &b}};
  std::vector<ParamRef<double>> pg2{{"a", &ga}, {"b", &gb}};
  adam_step(cfg, st, pw2, pg2);
  CHECK(st.m.size() == 2);
}
