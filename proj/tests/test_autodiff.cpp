#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "edr/errors.hpp"
#include "edr/rng.hpp"
#include "edr/tape.hpp"

using namespace edr;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_symmetric(scale);
  return t;
}

// Finite-difference check for one small program. Per-primitive programs are a
// handful of flops, so central differences at eps=1e-5 resolve the gradient
// to well under 1e-6 relative error.
double fd_error(const LossProgram& program, const ParameterMap& params) {
  return finite_diff_check(program, params, 1e-5, 99, 400).max_rel_error;
}

}  // namespace

TEST_CASE("matmul forward: identity, hand product, shape contract") {
  Tape tape;
  ValueId eye = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  ValueId m = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  ValueId prod = tape.matmul(eye, m);
  CHECK(tape.value(prod).storage() == std::vector<double>{1, 2, 3, 4});

  ValueId row = tape.constant(Tensor({1, 2}, {1, 2}));
  ValueId col = tape.constant(Tensor({2, 1}, {3, 4}));
  ValueId dot = tape.matmul(row, col);
  CHECK(tape.value(dot).size() == 1);
  CHECK(tape.value(dot)[0] == doctest::Approx(11.0).epsilon(1e-12));

  Rng rng(3);
  ValueId a = tape.constant(random_tensor({3, 4}, rng));
  ValueId b = tape.constant(random_tensor({4, 2}, rng));
  ValueId c = tape.matmul(a, b);
  CHECK(tape.value(c).shape() == std::vector<std::size_t>{3, 2});

  CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
}

TEST_CASE("tanh forward: zero, saturation, odd symmetry") {
  Tape tape;
  ValueId z = tape.tanh(tape.constant(Tensor({2}, {0, 0})));
  CHECK(tape.value(z)[0] == 0.0);
  CHECK(tape.value(z)[1] == 0.0);

  ValueId big = tape.tanh(tape.constant(Tensor({1}, {1e6})));
  CHECK(tape.value(big)[0] == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    double x = rng.next_symmetric(3.0);
    ValueId pos = tape.tanh(tape.constant(Tensor::scalar(x)));
    ValueId neg = tape.tanh(tape.constant(Tensor::scalar(-x)));
    CHECK(tape.value(pos)[0] == doctest::Approx(-tape.value(neg)[0]).epsilon(1e-15));
  }
}

TEST_CASE("softmax forward: uniform, shift invariance, analytic point") {
  Tape tape;
  ValueId u = tape.softmax(tape.constant(Tensor({2}, {0, 0})));
  CHECK(tape.value(u)[0] == doctest::Approx(0.5).epsilon(1e-15));

  ValueId c4 = tape.softmax(tape.constant(Tensor({4}, {7.5, 7.5, 7.5, 7.5})));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(tape.value(c4)[i] == doctest::Approx(0.25).epsilon(1e-15));

  ValueId an = tape.softmax(tape.constant(Tensor({2}, {std::log(2.0), 0.0})));
  CHECK(tape.value(an)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(tape.value(an)[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax invariants: elements in (0,1], rows sum to 1, shift invariant") {
  Rng rng(11);
  Tape tape;
  Tensor x = random_tensor({5, 7}, rng, 4.0);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) shifted.at(r, c) += 123.456;
  ValueId y = tape.softmax(tape.constant(x));
  ValueId ys = tape.softmax(tape.constant(shifted));
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      double v = tape.value(y).at(r, c);
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
      sum += v;
      CHECK(v == doctest::Approx(tape.value(ys).at(r, c)).epsilon(1e-9));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("cross_entropy forward: one-hot, uniform, analytic, errors") {
  Tape tape;
  ValueId hot = tape.cross_entropy(tape.constant(Tensor({3}, {0, 1, 0})), 1);
  CHECK(tape.value(hot)[0] == 0.0);

  ValueId uni = tape.cross_entropy(tape.constant(Tensor({4}, {0.25, 0.25, 0.25, 0.25})), 2);
  CHECK(tape.value(uni)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  ValueId half = tape.cross_entropy(tape.constant(Tensor({2}, {0.5, 0.5})), 0);
  CHECK(tape.value(half)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(tape.cross_entropy(tape.constant(Tensor({2}, {0.5, 0.5})), 2), IndexError);
  CHECK_THROWS_AS(tape.cross_entropy(tape.constant(Tensor({2}, {0.9, 0.4})), 0), UsageError);
}

TEST_CASE("cross_entropy floors the probability instead of overflowing") {
  Tape tape;
  ValueId ce = tape.cross_entropy(tape.constant(Tensor({2}, {1.0, 0.0})), 1);
  CHECK(tape.value(ce)[0] == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK(std::isfinite(tape.value(ce)[0]));
}

TEST_CASE("embedding_lookup: row copy, one-hot gradient, repeated id doubles") {
  Tape tape;
  ValueId table = tape.param("table", Tensor({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  ValueId row0 = tape.embedding_lookup(table, 0);
  CHECK(tape.value(row0).storage() == std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(tape.embedding_lookup(table, 3), IndexError);

  // loss = mean(row_1) -> gradient 1/3 in row 1, zero elsewhere
  GradientMap g1 = tape.backward(tape.mean(tape.embedding_lookup(table, 1)));
  const Tensor& gt = g1.at("table");
  for (std::size_t i = 0; i < 9; ++i) {
    double expect = (i >= 3 && i < 6) ? 1.0 / 3.0 : 0.0;
    CHECK(gt[i] == doctest::Approx(expect).epsilon(1e-15));
  }

  // same id twice -> contributions sum
  Tape tape2;
  ValueId t2 = tape2.param("table", Tensor({2, 2}, {1, 2, 3, 4}));
  ValueId sum2 = tape2.add(tape2.embedding_lookup(t2, 1), tape2.embedding_lookup(t2, 1));
  GradientMap g2 = tape2.backward(tape2.mean(sum2));
  CHECK(g2.at("table")[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g2.at("table")[0] == 0.0);
}

TEST_CASE("backward: tanh'(0) = 1") {
  Tape tape;
  ValueId w = tape.param("w", Tensor({1}, {0.0}));
  GradientMap g = tape.backward(tape.tanh(w));
  CHECK(g.at("w")[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward: softmax + cross-entropy recovers the classic identity") {
  // d/dz [-log softmax(z)_t] = softmax(z) - onehot(t)
  Rng rng(17);
  Tape tape;
  Tensor z = random_tensor({6}, rng, 2.0);
  ValueId zid = tape.param("z", z);
  ValueId p = tape.softmax(zid);
  GradientMap g = tape.backward(tape.cross_entropy(p, 4));
  for (std::size_t i = 0; i < 6; ++i) {
    double expect = tape.value(p)[i] - (i == 4 ? 1.0 : 0.0);
    CHECK(g.at("z")[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("backward: parameter the loss ignores gets an exact zero tensor") {
  Tape tape;
  ValueId used = tape.param("used", Tensor({2}, {1.0, 2.0}));
  ValueId unused = tape.param("unused", Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  GradientMap g = tape.backward(tape.mean(tape.tanh(used)));
  REQUIRE(g.count("unused") == 1);
  CHECK(g.at("unused").shape() == tape.value(unused).shape());
  for (std::size_t i = 0; i < 6; ++i) CHECK(g.at("unused")[i] == 0.0);
  CHECK(g.at("used")[0] != 0.0);
}

TEST_CASE("backward: non-scalar loss and bad ids are rejected") {
  Tape tape;
  ValueId v = tape.param("v", Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(v), UsageError);
  CHECK_THROWS_AS(tape.value(static_cast<ValueId>(999)), IndexError);
}

TEST_CASE("param: registering the same name twice on one tape is rejected") {
  // A silent duplicate would make backward() report only one of the two
  // leaves' gradients; sharing is done by reusing the value id instead.
  Tape tape;
  tape.param("w", Tensor({1}, {1.0}));
  CHECK_THROWS_AS(tape.param("w", Tensor({1}, {2.0})), UsageError);
}

TEST_CASE("replaying the same program is bit-identical") {
  Rng rng(23);
  ParameterMap params;
  params["a"] = random_tensor({4, 3}, rng);
  params["b"] = random_tensor({3, 5}, rng);
  auto run = [&]() {
    Tape tape;
    ValueId a = tape.param("a", params.at("a"));
    ValueId b = tape.param("b", params.at("b"));
    ValueId loss = tape.mean(tape.tanh(tape.matmul(a, b)));
    double value = tape.value(loss)[0];
    GradientMap g = tape.backward(loss);
    return std::make_pair(value, g);
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  for (const auto& [name, t] : g1) {
    CHECK(t.storage() == g2.at(name).storage());
  }
}

// ---------------------------------------------------------------------------
// Per-primitive gradients vs. central finite differences (< 1e-6 relative).
// ---------------------------------------------------------------------------

TEST_CASE("gradient oracle: matmul") {
  Rng rng(31);
  ParameterMap params;
  params["a"] = random_tensor({3, 4}, rng);
  params["b"] = random_tensor({4, 2}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    return t.mean(t.tanh(t.matmul(t.param("a", p.at("a")), t.param("b", p.at("b")))));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: add, all broadcast forms") {
  Rng rng(37);
  ParameterMap params;
  params["m"] = random_tensor({3, 4}, rng);
  params["same"] = random_tensor({3, 4}, rng);
  params["row"] = random_tensor({4}, rng);
  params["scalar"] = random_tensor({1}, rng);
  params["scalar_left"] = random_tensor({1}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId m = t.param("m", p.at("m"));
    ValueId x = t.add(m, t.param("same", p.at("same")));
    x = t.add(x, t.param("row", p.at("row")));
    x = t.add(x, t.param("scalar", p.at("scalar")));
    x = t.add(t.param("scalar_left", p.at("scalar_left")), x);  // scalar on the left too
    return t.mean(t.tanh(x));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: mul, all broadcast forms") {
  Rng rng(41);
  ParameterMap params;
  params["m"] = random_tensor({3, 4}, rng);
  params["same"] = random_tensor({3, 4}, rng);
  params["col"] = random_tensor({3, 1}, rng);
  params["scalar"] = random_tensor({1}, rng);
  params["scalar_left"] = random_tensor({1}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId m = t.param("m", p.at("m"));
    ValueId x = t.mul(m, t.param("same", p.at("same")));
    x = t.mul(x, t.param("col", p.at("col")));
    x = t.mul(x, t.param("scalar", p.at("scalar")));
    x = t.mul(t.param("scalar_left", p.at("scalar_left")), x);
    return t.mean(t.tanh(x));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: sub") {
  Rng rng(43);
  ParameterMap params;
  params["a"] = random_tensor({2, 5}, rng);
  params["b"] = random_tensor({2, 5}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    return t.mean(t.tanh(t.sub(t.param("a", p.at("a")), t.param("b", p.at("b")))));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: tanh and sigmoid") {
  Rng rng(47);
  ParameterMap params;
  params["x"] = random_tensor({4, 4}, rng, 2.0);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId x = t.param("x", p.at("x"));
    return t.mean(t.add(t.tanh(x), t.sigmoid(x)));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: softmax (through a curved readout)") {
  Rng rng(53);
  ParameterMap params;
  params["z"] = random_tensor({3, 6}, rng, 2.0);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId y = t.softmax(t.param("z", p.at("z")));
    return t.mean(t.tanh(t.mul(y, y)));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: concat and slice (both axes)") {
  Rng rng(59);
  ParameterMap params;
  params["a"] = random_tensor({3, 2}, rng);
  params["b"] = random_tensor({3, 3}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId cat = t.concat({t.param("a", p.at("a")), t.param("b", p.at("b"))});
    ValueId cols = t.slice(cat, 1, 1, 4);  // crosses the seam
    ValueId rows = t.slice(cols, 0, 0, 2);
    return t.mean(t.tanh(rows));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: embedding_rows") {
  Rng rng(61);
  ParameterMap params;
  params["table"] = random_tensor({5, 3}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId rows = t.embedding_rows(t.param("table", p.at("table")), {4, 0, 4, 2});
    return t.mean(t.tanh(rows));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: cross_entropy_rows through softmax") {
  Rng rng(67);
  ParameterMap params;
  params["z"] = random_tensor({4, 5}, rng, 2.0);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId dists = t.softmax(t.param("z", p.at("z")));
    return t.mean(t.cross_entropy_rows(dists, {0, 3, 1, 4}));
  };
  CHECK(fd_error(prog, params) < 1e-6);
}

TEST_CASE("gradient oracle: quadratic loss has no truncation error") {
  // loss = mean(p * p); analytic gradient 2 p / n. The central difference is
  // exact for quadratics, so all that remains is round-off in the two loss
  // evaluations: ~1e-16 / (2 * 1e-5) absolute, i.e. well under 1e-7 relative.
  Rng rng(71);
  ParameterMap params;
  params["p"] = random_tensor({4, 4}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId x = t.param("p", p.at("p"));
    return t.mean(t.mul(x, x));
  };
  CHECK(fd_error(prog, params) < 1e-7);
}

TEST_CASE("finite_diff_check: rejects bad arguments and non-determinism") {
  ParameterMap params;
  params["p"] = Tensor({2}, {1.0, 2.0});
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    return t.mean(t.param("p", p.at("p")));
  };
  CHECK_THROWS_AS(finite_diff_check(prog, params, 0.0, 1), UsageError);
  CHECK_THROWS_AS(finite_diff_check(prog, ParameterMap{}, 1e-5, 1), UsageError);

  int calls = 0;
  LossProgram flaky = [&calls](Tape& t, const ParameterMap& p) {
    ValueId x = t.param("p", p.at("p"));
    ValueId bump = t.constant(Tensor::scalar(calls++ == 0 ? 0.0 : 1e-3));
    return t.mean(t.add(x, bump));
  };
  CHECK_THROWS_AS(finite_diff_check(flaky, params, 1e-5, 1), DeterminismError);
}

TEST_CASE("finite_diff_check: samples every tensor and reports the worst") {
  Rng rng(73);
  ParameterMap params;
  params["a"] = random_tensor({10, 10}, rng);
  params["b"] = random_tensor({3}, rng);
  LossProgram prog = [](Tape& t, const ParameterMap& p) {
    ValueId a = t.mean(t.tanh(t.param("a", p.at("a"))));
    ValueId b = t.mean(t.tanh(t.param("b", p.at("b"))));
    return t.add(a, b);
  };
  FiniteDiffReport report = finite_diff_check(prog, params, 1e-5, 7, 10);
  // 10 coords over 2 tensors -> 5 per tensor, and "b" only has 3.
  CHECK(report.coords_checked == 8);
  CHECK(report.max_rel_error < 1e-6);
  CHECK((report.worst_param == "a" || report.worst_param == "b"));
}
