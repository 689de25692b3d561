#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ktorus/known_metrics.hpp"
#include "ktorus/random_fields.hpp"
#include "ktorus/tensor_calculus.hpp"

using namespace kt;

namespace {

MetricGridPtr grid_for(const ConformalFactor& cf, int n = 48) { return MetricGrid::make(cf, n); }

// Index-loop oracle: value of f at an explicit index tuple (0 = x, 1 = y).
double entry(const SymTensorField& f, const std::vector<int>& idx, int i, int j) {
  const int twos = static_cast<int>(std::count(idx.begin(), idx.end(), 1));
  return f[twos](i, j);
}

std::vector<int> tuple_of(int bits, int len) {
  std::vector<int> t(len);
  for (int s = 0; s < len; ++s) t[s] = (bits >> s) & 1;
  return t;
}

// Full symmetrisation over all permutations of the concatenated index tuple.
double brute_product(const SymTensorField& f, const SymTensorField& h, const std::vector<int>& idx,
                     int i, int j) {
  const int r = f.rank();
  std::vector<int> perm(idx.size());
  std::iota(perm.begin(), perm.end(), 0);
  double acc = 0.0;
  int count = 0;
  do {
    std::vector<int> a, b;
    for (int s = 0; s < static_cast<int>(perm.size()); ++s) {
      (s < r ? a : b).push_back(idx[perm[s]]);
    }
    acc += entry(f, a, i, j) * entry(h, b, i, j);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return acc / count;
}

double brute_trace(const SymTensorField& f, const std::vector<int>& idx, int i, int j) {
  const double lam = f.metric()->lambda(i, j);
  double acc = 0.0;
  for (int p = 0; p < 2; ++p) {
    std::vector<int> full{p, p};
    full.insert(full.end(), idx.begin(), idx.end());
    acc += entry(f, full, i, j) / lam;
  }
  return acc;
}

double rel_diff(const SymTensorField& a, const SymTensorField& b) {
  return (a - b).max_norm() / std::max(1e-300, std::max(a.max_norm(), b.max_norm()));
}

}  // namespace

TEST_CASE("symmetric product basics") {
  auto mg = grid_for(metrics::generic());
  const auto one = SymTensorField::scalar(mg, mg->grid().constant(1.0));
  const auto h = random::sym_field(mg, 3, 4, 1);
  CHECK(rel_diff(sym_product(one, h), h) < 1e-15);

  const auto u = random::sym_field(mg, 1, 3, 2);
  const auto v = random::sym_field(mg, 1, 3, 3);
  const auto uv = sym_product(u, v);
  CHECK((uv[0] - u[0] * v[0]).abs().maxCoeff() < 1e-14);
  CHECK((uv[1] - 0.5 * (u[0] * v[1] + u[1] * v[0])).abs().maxCoeff() < 1e-14);
  CHECK((uv[2] - u[1] * v[1]).abs().maxCoeff() < 1e-14);

  const auto g = SymTensorField::metric_tensor(mg);
  CHECK(rel_diff(sym_product(g, g), op_i(op_i(one))) < 1e-15);
}

TEST_CASE("symmetric product and trace against index loops") {
  auto mg = grid_for(metrics::random(4, 2, 0.05));
  const auto f = random::sym_field(mg, 2, 3, 10);
  const auto h = random::sym_field(mg, 3, 3, 11);
  const auto fh = sym_product(f, h);
  const auto f4 = random::sym_field(mg, 4, 3, 12);
  const auto jf4 = op_j(f4);
  const auto jif = op_j(op_i(h));
  const auto ijf = op_i(op_j(h));
  for (auto [i, j] : {std::pair{0, 0}, std::pair{5, 17}, std::pair{31, 9}}) {
    for (int bits = 0; bits < (1 << 5); ++bits) {
      const auto idx = tuple_of(bits, 5);
      const int twos = static_cast<int>(std::count(idx.begin(), idx.end(), 1));
      CHECK(fh[twos](i, j) == doctest::Approx(brute_product(f, h, idx, i, j)).epsilon(1e-13));
    }
    for (int bits = 0; bits < (1 << 2); ++bits) {
      const auto idx = tuple_of(bits, 2);
      const int twos = static_cast<int>(std::count(idx.begin(), idx.end(), 1));
      CHECK(jf4[twos](i, j) == doctest::Approx(brute_trace(f4, idx, i, j)).epsilon(1e-13));
    }
    // j i on rank 3: (jif) = ((n + 2r) / (r + 2) ... ) compared against index loops.
    const auto ih = op_i(h);
    for (int bits = 0; bits < (1 << 3); ++bits) {
      const auto idx = tuple_of(bits, 3);
      const int twos = static_cast<int>(std::count(idx.begin(), idx.end(), 1));
      CHECK(jif[twos](i, j) == doctest::Approx(brute_trace(ih, idx, i, j)).epsilon(1e-12));
    }
  }
  // In two dimensions j i = c_r id + d_r i j with constants fixed by the rank; recover
  // them from one point and confirm them everywhere.
  const double a0 = h[0](3, 3), t0 = ijf[0](3, 3), j0 = jif[0](3, 3);
  const double a1 = h[1](3, 3), t1 = ijf[1](3, 3), j1 = jif[1](3, 3);
  const double det = a0 * t1 - a1 * t0;
  const double c = (j0 * t1 - j1 * t0) / det;
  const double d = (a0 * j1 - a1 * j0) / det;
  CHECK(rel_diff(jif, c * h + d * ijf) < 1e-11);
}

TEST_CASE("trace of the metric and of trace-free fields") {
  auto mg = grid_for(metrics::generic());
  const auto g = SymTensorField::metric_tensor(mg);
  CHECK((op_j(g)[0] - 2.0).abs().maxCoeff() < 1e-14);
  for (int m = 2; m <= 5; ++m) {
    const auto t = random::trace_free(mg, m, 3, 20 + m).expand();
    CHECK(op_j(t).max_norm() <= 1e-12 * t.max_norm());
  }
}

TEST_CASE("i commutes with d") {
  auto mg = grid_for(metrics::random(7, 2, 0.05));
  for (int r = 0; r <= 3; ++r) {
    const auto f = random::sym_field(mg, r, 3, 30 + r);
    const auto lhs = inner_derivative(op_i(f));
    const auto rhs = op_i(inner_derivative(f));
    CHECK((lhs - rhs).max_norm() <= 1e-9 * std::max(1.0, lhs.max_norm()));
  }
}

TEST_CASE("trace-free projection") {
  auto mg = grid_for(metrics::random(9, 2, 0.05));
  const auto g = SymTensorField::metric_tensor(mg);
  CHECK(op_p(g).max_norm() < 1e-14);
  const auto f2 = random::sym_field(mg, 2, 3, 40);
  const auto explicit_p = f2 - sym_product(SymTensorField::scalar(mg, 0.5 * op_j(f2)[0]), g);
  CHECK(rel_diff(op_p(f2), explicit_p) < 1e-13);

  const auto t = random::trace_free(mg, 3, 3, 41).expand();
  CHECK(rel_diff(op_p(t), t) < 1e-14);

  for (int r = 1; r <= 5; ++r) {
    const auto f = random::sym_field(mg, r, 3, 50 + r);
    const auto h = random::sym_field(mg, r, 3, 60 + r);
    const auto pf = op_p(f);
    CHECK(rel_diff(op_p(pf), pf) < 1e-13);
    if (r >= 2) CHECK(op_j(pf).max_norm() < 1e-12 * pf.max_norm());
    const Grid lhs = fiber_inner(pf, h);
    const Grid rhs = fiber_inner(f, op_p(h));
    CHECK((lhs - rhs).abs().maxCoeff() < 1e-12 * (1.0 + lhs.abs().maxCoeff()));
    // Orthogonal complement: f - pf is fiberwise orthogonal to every trace-free field.
    const auto rest = f - pf;
    const auto th = random::trace_free(mg, r, 3, 70 + r).expand();
    CHECK(fiber_inner(rest, th).abs().maxCoeff() < 1e-12 * fiber_inner(f, th).abs().maxCoeff());
  }
}

TEST_CASE("inner derivative special cases") {
  auto flat = grid_for(metrics::flat());
  for (int r = 0; r <= 4; ++r) {
    SymTensorField c(flat, r);
    for (int k = 0; k <= r; ++k) c[k] = flat->grid().constant(0.3 * k - 1.0);
    CHECK(inner_derivative(c).max_norm() < 1e-13);
  }
  auto mg = grid_for(metrics::generic());
  const Grid u = random::band_limited(mg->grid(), 4, 80);
  const auto du = inner_derivative(SymTensorField::scalar(mg, u));
  CHECK((du[0] - mg->grid().dx(u)).abs().maxCoeff() < 1e-14);
  CHECK((du[1] - mg->grid().dy(u)).abs().maxCoeff() < 1e-14);

  auto rot = grid_for(metrics::rotation());
  const SymTensorField kv(rot, {rot->lambda, rot->grid().zeros()});
  CHECK(inner_derivative(kv).max_norm() <= 1e-9);
  CHECK(is_killing(kv));
}

TEST_CASE("divergence: fast trace-free path, kernel fields, adjointness") {
  auto mg = grid_for(metrics::random(13, 3, 0.05), 96);
  for (int m = 1; m <= 4; ++m) {
    const auto t = random::trace_free(mg, m, 4, 90 + m);
    const auto general = divergence(t.expand());
    const auto fast = divergence(t);
    if (m >= 2) {
      CHECK(rel_diff(general, fast.expand()) < 1e-11);
    } else {
      CHECK((general[0] - fast.a).abs().maxCoeff() < 1e-11 * general.max_norm());
    }
    // pd: complex fast path against p(d(.)).
    const auto slow_pd = trace_free_part(inner_derivative(t.expand()));
    const auto fast_pd = pd(t);
    CHECK((slow_pd - fast_pd).max_norm() <= 1e-11 * slow_pd.max_norm());
  }
  // delta of kernel fields lambda^m c equals 2m Z^{m-1, c}.
  for (int m = 1; m <= 4; ++m) {
    const double c1 = 0.6, c2 = -1.1;
    const Grid lm = (2.0 * m * mg->mu).exp();
    const TraceFreeField k(mg, m, c1 * lm, c2 * lm);
    const auto dk = divergence(k);
    const Grid lm1 = (2.0 * (m - 1) * mg->mu).exp();
    const Grid za = lm1 * (c1 * mg->mu_x + c2 * mg->mu_y);
    const Grid zb = lm1 * (c2 * mg->mu_x - c1 * mg->mu_y);
    CHECK((dk.a - 2.0 * m * za).abs().maxCoeff() < 1e-11);
    if (m >= 2) CHECK((dk.b - 2.0 * m * zb).abs().maxCoeff() < 1e-11);
  }
  for (int r = 0; r <= 3; ++r) {
    const auto f = random::sym_field(mg, r, 4, 100 + r);
    const auto h = random::sym_field(mg, r + 1, 4, 200 + r);
    const double lhs = l2_inner(inner_derivative(f), h);
    const double rhs = -l2_inner(f, divergence(h));
    CHECK(std::abs(lhs - rhs) <= 1e-9 * l2_norm(f) * l2_norm(h));
  }
}

TEST_CASE("j and delta commute; Leibniz rule") {
  auto mg = grid_for(metrics::random(17, 2, 0.05));
  const auto f = random::sym_field(mg, 4, 3, 300);
  const auto lhs = op_j(divergence(f));
  const auto rhs = divergence(op_j(f));
  CHECK((lhs - rhs).max_norm() <= 1e-9 * std::max(1.0, lhs.max_norm()));
  for (int r = 0; r <= 3; ++r) {
    for (int s = 0; s <= 3; s += 3) {
      const auto a = random::sym_field(mg, r, 3, 310 + r);
      const auto b = random::sym_field(mg, s, 3, 320 + s);
      const auto left = inner_derivative(sym_product(a, b));
      const auto right = sym_product(inner_derivative(a), b) + sym_product(a, inner_derivative(b));
      CHECK((left - right).max_norm() <= 1e-9 * left.max_norm());
    }
  }
}

TEST_CASE("harmonic decomposition") {
  auto mg = grid_for(metrics::random(19, 2, 0.05));
  const auto t = random::trace_free(mg, 4, 3, 400);
  const auto dt = harmonic_decompose(t.expand());
  REQUIRE(dt.parts.size() == 3);
  CHECK((dt.parts[2] - t).max_norm() < 1e-12 * t.max_norm());
  CHECK(dt.parts[0].max_norm() < 1e-12 * t.max_norm());
  CHECK(dt.parts[1].max_norm() < 1e-12 * t.max_norm());

  const auto dg = harmonic_decompose(SymTensorField::metric_tensor(mg));
  CHECK((*dg.scalar() - 1.0).abs().maxCoeff() < 1e-14);
  CHECK(dg.parts[1].max_norm() < 1e-14);

  for (int m = 0; m <= 5; ++m) {
    const auto f = random::sym_field(mg, m, 3, 410 + m);
    const auto d = harmonic_decompose(f);
    CHECK(static_cast<int>(d.parts.size()) == m / 2 + 1);
    CHECK(rel_diff(d.reconstruct(), f) <= 1e-10);
    for (const auto& part : d.parts) {
      if (part.rank() >= 2) CHECK(op_j(part.expand()).max_norm() <= 1e-12 * f.max_norm());
    }
  }
}

TEST_CASE("chain coefficients keep n explicit") {
  CHECK(chain_coefficient_even(0, 3) == doctest::Approx(2.0 / 5.0));
  CHECK(chain_coefficient_odd(1, 3) == doctest::Approx(5.0 / 11.0));
  for (int k = 0; k < 5; ++k) {
    CHECK(chain_coefficient_even(k) == doctest::Approx(0.5));
    CHECK(chain_coefficient_odd(k) == doctest::Approx(0.5));
  }
}

TEST_CASE("chain residuals vanish exactly on Killing fields") {
  auto rot = grid_for(metrics::rotation());
  const SymTensorField kv(rot, {rot->lambda, rot->grid().zeros()});
  for (double r : chain_residuals(kv)) CHECK(r <= 1e-9);

  auto mg = grid_for(metrics::random(23, 2, 0.05));
  auto g = SymTensorField::metric_tensor(mg);
  auto gk = g;
  for (int k = 1; k <= 2; ++k) {
    for (double r : chain_residuals(gk)) CHECK(r <= 1e-10);
    gk = sym_product(gk, g);
  }

  // Non-Killing field: the residuals are the harmonics of df.
  const auto f = random::sym_field(mg, 3, 3, 500);
  const auto res = chain_residuals(f);
  const auto hdf = harmonic_decompose(inner_derivative(f));
  double top = 0.0;
  for (const auto& part : hdf.parts) top = std::max(top, part.max_norm());
  const double worst = *std::max_element(res.begin(), res.end());
  CHECK(worst <= 10.0 * top);
  CHECK(worst >= top / 10.0);
}

TEST_CASE("polynomial evaluation") {
  auto flat = grid_for(metrics::flat());
  const auto t1 = random::trace_free(flat, 1, 3, 600);
  CHECK(to_polynomial(t1, 4, 7, 0.0) == doctest::Approx(t1.a(4, 7)));
  const auto t2 = random::trace_free(flat, 2, 3, 601);
  CHECK(to_polynomial(t2, 4, 7, M_PI / 2) == doctest::Approx(-t2.a(4, 7)));

  auto mg = grid_for(metrics::generic());
  const auto t3 = random::trace_free(mg, 3, 3, 602);
  const auto full = t3.expand();
  for (double th : {0.1, 1.3, 4.0}) {
    const double e = std::exp(-mg->mu(5, 9));
    const Vec2 xi(e * std::cos(th), e * std::sin(th));
    CHECK(to_polynomial(t3, 5, 9, th) == doctest::Approx(polynomial_value(full, 5, 9, xi)).epsilon(1e-13));
  }
  // Interpolated evaluation at a node equals the node value.
  const Vec2 node = mg->grid().point(5, 9);
  CHECK(to_polynomial(t3, node, 0.7) == doctest::Approx(to_polynomial(t3, 5, 9, 0.7)).epsilon(1e-11));
}

TEST_CASE("Cauchy-Riemann residual") {
  auto mg = grid_for(metrics::random(29, 3, 0.05), 96);
  for (int m = 1; m <= 4; ++m) {
    const Grid lm = (2.0 * m * mg->mu).exp();
    const auto [r1, r2] = cauchy_riemann_residual(TraceFreeField(mg, m, 0.4 * lm, 1.7 * lm));
    CHECK(r1.abs().maxCoeff() <= 1e-11);
    CHECK(r2.abs().maxCoeff() <= 1e-11);
    const auto t = random::trace_free(mg, m, 4, 700 + m);
    const auto [s1, s2] = cauchy_riemann_residual(t);
    const auto p = pd(t);
    // pd f = lambda^m (R1, R2) / 2.
    CHECK((p.a - 0.5 * lm * s1).abs().maxCoeff() <= 1e-11 * p.max_norm());
    CHECK((p.b - 0.5 * lm * s2).abs().maxCoeff() <= 1e-11 * p.max_norm());
  }
  auto flat = grid_for(metrics::flat());
  const auto [z1, z2] = cauchy_riemann_residual(
      TraceFreeField(flat, 2, flat->grid().constant(0.3), flat->grid().constant(-2.0)));
  CHECK(z1.abs().maxCoeff() < 1e-14);
  CHECK(z2.abs().maxCoeff() < 1e-14);
}

TEST_CASE("Liouville quadratic integral") {
  auto mg = grid_for(metrics::liouville(), 64);
  const Grid a = mg->grid().sample([](const Vec2& p) { return 1.2 + 0.2 * std::cos(2 * M_PI * p.x()); });
  const Grid b = mg->grid().sample([](const Vec2& p) { return 0.3 * std::cos(2 * M_PI * p.y()); });
  CHECK((mg->lambda - a - b).abs().maxCoeff() < 1e-13);
  const SymTensorField f(mg, {mg->lambda * b, mg->grid().zeros(), -mg->lambda * a});
  CHECK(inner_derivative(f).max_norm() <= 1e-8 * f.max_norm());
  for (double r : chain_residuals(f)) CHECK(r <= 1e-9);
  // Perturbed field is detected both ways.
  auto bad = f;
  bad[1] += 1e-3 * random::band_limited(mg->grid(), 3, 800);
  CHECK(!is_killing(bad));
  const auto res = chain_residuals(bad);
  CHECK(*std::max_element(res.begin(), res.end()) > 1e-6);
}
