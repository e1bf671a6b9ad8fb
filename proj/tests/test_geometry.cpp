#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "vartok/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace vartok;
using geometry::Vec;
using testing::fd_gradient;
using testing::randn;
using testing::random_in_ball;
using testing::rel_err;

namespace {

// Tree-path length in edges, via parent pointers (oracle for the embedding
// distortion checks).
int tree_edge_distance(const geometry::ParentArray& parents, int u, int v) {
  std::vector<int> depth(parents.size(), 0);
  for (size_t i = 1; i < parents.size(); ++i) depth[i] = depth[parents[i]] + 1;
  int d = 0;
  while (depth[u] > depth[v]) { u = parents[u]; ++d; }
  while (depth[v] > depth[u]) { v = parents[v]; ++d; }
  while (u != v) { u = parents[u]; v = parents[v]; d += 2; }
  return d;
}

geometry::ParentArray full_bary_tree(int branching, int depth) {
  geometry::ParentArray parents{-1};
  std::vector<int> frontier{0};
  for (int level = 0; level < depth; ++level) {
    std::vector<int> next;
    for (int node : frontier) {
      for (int j = 0; j < branching; ++j) {
        next.push_back(static_cast<int>(parents.size()));
        parents.push_back(node);
      }
    }
    frontier = std::move(next);
  }
  return parents;
}

}  // namespace

TEST_CASE("distance and conformal factor closed-form values") {
  const double c = 1.0;
  Vec x = Vec::Zero(4);
  Vec y = Vec::Zero(4);
  y[0] = 0.5;

  // d(0, x) = 2 atanh(0.5) = ln 3 for |x| = 0.5 at c = 1.
  CHECK(geometry::hyp_distance(x, y, c) == doctest::Approx(1.0986122886681098).epsilon(1e-12));

  // lambda_x = 2 / (1 - 0.25) = 8/3.
  CHECK(geometry::conformal_factor(y, c) == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
  CHECK(geometry::conformal_factor(x, c) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("exp map norm and exp/log inversion") {
  const double c = 1.0;
  std::mt19937 rng(11);

  Vec v = randn(6, rng);
  v *= 1.0 / v.norm();  // |v| = 1
  CHECK(geometry::exp_map_origin(v, c).norm() ==
        doctest::Approx(0.7615941559557649).epsilon(1e-12));  // tanh(1)

  for (int it = 0; it < 2000; ++it) {
    const double cc = (it % 2 == 0) ? 1.0 : 0.5;
    Vec t = random_in_ball(5, 3.0, rng);
    Vec x = geometry::exp_map_origin(t, cc);
    Vec back = geometry::log_map_origin(x, cc);
    CHECK((back - t).norm() <= 1e-12 * std::max(1.0, t.norm()));
  }
}

TEST_CASE("mobius addition identities") {
  std::mt19937 rng(13);
  for (int it = 0; it < 2000; ++it) {
    const double c = (it % 3 == 0) ? 0.5 : (it % 3 == 1) ? 1.0 : 2.0;
    const double rad = 0.9 / std::sqrt(c);
    Vec x = random_in_ball(4, rad, rng);
    Vec y = random_in_ball(4, rad, rng);
    Vec zero = Vec::Zero(4);

    CHECK((geometry::mobius_add(x, zero, c) - x).norm() <= 1e-12);
    CHECK((geometry::mobius_add(zero, y, c) - y).norm() <= 1e-12);
    CHECK(geometry::mobius_add(geometry::mobius_neg(x), x, c).norm() <= 1e-9);
    // Left cancellation: (-x) (+) (x (+) y) = y.
    Vec lc = geometry::mobius_add(geometry::mobius_neg(x), geometry::mobius_add(x, y, c), c);
    CHECK((lc - y).norm() <= 1e-9);
  }
}

TEST_CASE("metric axioms on random triples") {
  std::mt19937 rng(17);
  for (int it = 0; it < 1000; ++it) {
    const double c = (it % 2 == 0) ? 1.0 : 2.0;
    const double rad = 0.9 / std::sqrt(c);
    Vec x = random_in_ball(5, rad, rng);
    Vec y = random_in_ball(5, rad, rng);
    Vec z = random_in_ball(5, rad, rng);

    const double dxy = geometry::hyp_distance(x, y, c);
    const double dyx = geometry::hyp_distance(y, x, c);
    CHECK(dxy >= 0.0);
    CHECK(std::abs(dxy - dyx) <= 1e-12 * std::max(1.0, dxy));
    CHECK(geometry::hyp_distance(x, x, c) <= 1e-12);
    const double dxz = geometry::hyp_distance(x, z, c);
    const double dzy = geometry::hyp_distance(z, y, c);
    CHECK(dxy <= dxz + dzy + 1e-9);
  }
}

TEST_CASE("hyp_scale endpoints and radial proportionality") {
  std::mt19937 rng(19);
  const double c = 1.0;
  for (int it = 0; it < 500; ++it) {
    Vec x = random_in_ball(4, 0.9, rng);
    CHECK((geometry::hyp_scale(1.0, x, c) - x).norm() <= 1e-12);
    CHECK(geometry::hyp_scale(0.0, x, c).norm() <= 1e-15);

    std::uniform_real_distribution<double> us(0.0, 1.0);
    const double s = us(rng);
    const double d_full = geometry::hyp_distance(Vec(Vec::Zero(4)), x, c);
    const double d_part =
        geometry::hyp_distance(Vec(Vec::Zero(4)), geometry::hyp_scale(s, x, c), c);
    CHECK(std::abs(d_part - s * d_full) <= 1e-10 * std::max(1.0, d_full));
  }
  CHECK_THROWS_AS(geometry::hyp_scale(1.5, Vec(Vec::Zero(3)), c), std::invalid_argument);
  CHECK_THROWS_AS(geometry::hyp_scale(-0.1, Vec(Vec::Zero(3)), c), std::invalid_argument);
}

TEST_CASE("exp map at a base point") {
  std::mt19937 rng(23);
  const double c = 1.0;
  for (int it = 0; it < 500; ++it) {
    Vec w = random_in_ball(4, 0.8, rng);
    Vec v = 0.3 * randn(4, rng);

    // exp_w(0) = w.
    CHECK((geometry::exp_map(w, Vec(Vec::Zero(4)), c) - w).norm() <= 1e-15);
    // d(w, exp_w(v)) equals the metric norm lambda_w |v|.
    const double d = geometry::hyp_distance(w, geometry::exp_map(w, v, c), c);
    const double expected = geometry::conformal_factor(w, c) * v.norm();
    CHECK(std::abs(d - expected) <= 1e-9 * std::max(1.0, expected));
  }
  // At the origin the general map reduces to exp_0.
  Vec v = randn(4, rng);
  CHECK((geometry::exp_map(Vec(Vec::Zero(4)), v, c) - geometry::exp_map_origin(v, c)).norm()
        <= 1e-12);
}

TEST_CASE("safe-ball projection") {
  const double c = 1.0;
  Vec far = Vec::Zero(3);
  far[0] = 5.0;
  Vec p = geometry::project_to_safe_ball(far, c);
  CHECK(p.norm() == doctest::Approx(1.0 - 1e-5).epsilon(1e-12));

  Vec inside = Vec::Zero(3);
  inside[0] = 0.3;
  CHECK((geometry::project_to_safe_ball(inside, c) - inside).norm() == 0.0);

  // Direction is preserved on the clamped branch.
  CHECK(p[0] > 0.0);
  CHECK(p[1] == 0.0);

  const double c4 = 4.0;
  Vec q = geometry::project_to_safe_ball(far, c4);
  CHECK(q.norm() == doctest::Approx(0.5 - 1e-5).epsilon(1e-12));
}

TEST_CASE("argument validation") {
  CHECK_THROWS_AS(geometry::Curvature(0.0), std::invalid_argument);
  CHECK_THROWS_AS(geometry::Curvature(-1.0), std::invalid_argument);

  Vec a = Vec::Zero(3);
  Vec b = Vec::Zero(4);
  CHECK_THROWS_AS(geometry::mobius_add(a, b, 1.0), std::invalid_argument);

  geometry::PoincarePoint pa(a, geometry::Curvature(1.0));
  geometry::PoincarePoint pc(a, geometry::Curvature(2.0));
  CHECK_THROWS_AS(geometry::hyp_distance(pa, pc), std::invalid_argument);

  Vec outside = Vec::Zero(3);
  outside[0] = 1.5;
  CHECK_THROWS_AS(geometry::PoincarePoint(outside, geometry::Curvature(1.0)),
                  std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Gradient checks: analytic VJPs against central finite differences
// (step 1e-6, relative error <= 1e-4, points with norm <= 0.9/sqrt(c)).
// ----------------------------------------------------------------------------

TEST_CASE("mobius_add vjp matches finite differences") {
  std::mt19937 rng(29);
  const double h = 1e-6;
  for (int it = 0; it < 200; ++it) {
    const double c = (it % 2 == 0) ? 1.0 : 0.5;
    const double rad = 0.9 / std::sqrt(c);
    Vec x = random_in_ball(4, 0.8 * rad, rng);
    Vec y = random_in_ball(4, 0.8 * rad, rng);
    Vec g = randn(4, rng);

    auto [gx, gy] = geometry::mobius_add_vjp(x, y, c, g);
    auto fx = [&](const Vec& q) { return g.dot(geometry::mobius_add(q, y, c)); };
    auto fy = [&](const Vec& q) { return g.dot(geometry::mobius_add(x, q, c)); };
    Vec fdx = fd_gradient(fx, x, h);
    Vec fdy = fd_gradient(fy, y, h);
    for (int i = 0; i < 4; ++i) {
      CHECK(rel_err(gx[i], fdx[i]) <= 1e-4);
      CHECK(rel_err(gy[i], fdy[i]) <= 1e-4);
    }
  }
}

TEST_CASE("exp/log/scale vjps match finite differences") {
  std::mt19937 rng(31);
  const double h = 1e-6;
  for (int it = 0; it < 200; ++it) {
    const double c = (it % 2 == 0) ? 1.0 : 2.0;
    const double rad = 0.9 / std::sqrt(c);
    Vec v = randn(5, rng);
    Vec x = random_in_ball(5, 0.85 * rad, rng);
    if (x.norm() < 0.05) x[0] += 0.1;
    Vec g = randn(5, rng);

    Vec ge = geometry::exp_map_origin_vjp(v, c, g);
    Vec fde = fd_gradient([&](const Vec& q) { return g.dot(geometry::exp_map_origin(q, c)); },
                          v, h);
    for (int i = 0; i < 5; ++i) CHECK(rel_err(ge[i], fde[i]) <= 1e-4);

    Vec gl = geometry::log_map_origin_vjp(x, c, g);
    Vec fdl = fd_gradient([&](const Vec& q) { return g.dot(geometry::log_map_origin(q, c)); },
                          x, h);
    for (int i = 0; i < 5; ++i) CHECK(rel_err(gl[i], fdl[i]) <= 1e-4);

    std::uniform_real_distribution<double> us(0.05, 0.95);
    const double s = us(rng);
    auto [gs, gxs] = geometry::hyp_scale_vjp(s, x, c, g);
    const double fds = (g.dot(geometry::hyp_scale(s + h, x, c)) -
                        g.dot(geometry::hyp_scale(s - h, x, c))) / (2.0 * h);
    CHECK(rel_err(gs, fds) <= 1e-4);
    Vec fdxs = fd_gradient([&](const Vec& q) { return g.dot(geometry::hyp_scale(s, q, c)); },
                           x, h);
    for (int i = 0; i < 5; ++i) CHECK(rel_err(gxs[i], fdxs[i]) <= 1e-4);
  }
}

TEST_CASE("distance gradients match finite differences") {
  std::mt19937 rng(37);
  const double h = 1e-6;
  for (int it = 0; it < 200; ++it) {
    const double c = (it % 2 == 0) ? 1.0 : 0.5;
    const double rad = 0.9 / std::sqrt(c);
    Vec x = random_in_ball(4, 0.8 * rad, rng);
    Vec y = random_in_ball(4, 0.8 * rad, rng);
    if ((x - y).norm() < 0.05) y[0] += 0.2;

    auto [gx, gy] = geometry::hyp_distance_grad(x, y, c);
    Vec fdx = fd_gradient([&](const Vec& q) { return geometry::hyp_distance(q, y, c); }, x, h);
    Vec fdy = fd_gradient([&](const Vec& q) { return geometry::hyp_distance(x, q, c); }, y, h);
    for (int i = 0; i < 4; ++i) {
      CHECK(rel_err(gx[i], fdx[i]) <= 1e-4);
      CHECK(rel_err(gy[i], fdy[i]) <= 1e-4);
    }

    auto [sx, sy] = geometry::hyp_distance_sq_grad(x, y, c);
    Vec fsx = fd_gradient([&](const Vec& q) { return geometry::hyp_distance_sq(q, y, c); }, x, h);
    Vec fsy = fd_gradient([&](const Vec& q) { return geometry::hyp_distance_sq(x, q, c); }, y, h);
    for (int i = 0; i < 4; ++i) {
      CHECK(rel_err(sx[i], fsx[i]) <= 1e-4);
      CHECK(rel_err(sy[i], fsy[i]) <= 1e-4);
    }
  }

  // Squared distance is smooth at coincident points: zero gradient.
  Vec x = Vec::Zero(3);
  x[0] = 0.4;
  auto [za, zb] = geometry::hyp_distance_sq_grad(x, x, 1.0);
  CHECK(za.norm() == 0.0);
  CHECK(zb.norm() == 0.0);
}

TEST_CASE("projection vjp matches finite differences off the boundary") {
  std::mt19937 rng(41);
  const double h = 1e-6;
  const double c = 1.0;
  for (int it = 0; it < 100; ++it) {
    Vec g = randn(4, rng);
    // Interior branch.
    Vec x = random_in_ball(4, 0.9, rng);
    Vec gi = geometry::project_to_safe_ball_vjp(x, c, g);
    CHECK((gi - g).norm() == 0.0);
    // Clamped branch: points well outside.
    Vec far = randn(4, rng);
    far *= 3.0 / far.norm();
    Vec gc = geometry::project_to_safe_ball_vjp(far, c, g);
    Vec fdc = fd_gradient(
        [&](const Vec& q) { return g.dot(geometry::project_to_safe_ball(q, c)); }, far, h);
    for (int i = 0; i < 4; ++i) CHECK(rel_err(gc[i], fdc[i]) <= 1e-4);
  }
}

// ----------------------------------------------------------------------------
// Tree embedding
// ----------------------------------------------------------------------------

TEST_CASE("tree embedding radial law") {
  const double c = 1.0;
  for (int b : {2, 3}) {
    auto parents = full_bary_tree(b, 4);
    auto pos = geometry::sarkar_embed_tree(parents, c, 10);
    std::vector<int> depth(parents.size(), 0);
    for (size_t i = 1; i < parents.size(); ++i) depth[i] = depth[parents[i]] + 1;

    CHECK(pos[0].norm() == 0.0);  // root at the origin
    for (size_t i = 0; i < parents.size(); ++i) {
      const double d0 = geometry::hyp_distance(Vec(Vec::Zero(10)), pos[i], c);
      CHECK(std::abs(d0 - 2.0 * depth[i]) <= 1e-6);
    }
  }
}

TEST_CASE("tree embedding distortion stays within 1.1") {
  const double c = 1.0;
  // Binary and ternary trees with edge scale 2: every tree distance is at
  // most 1.1 times the embedded distance.
  for (int b : {2, 3}) {
    for (int depth = 1; depth <= 4; ++depth) {
      auto parents = full_bary_tree(b, depth);
      auto pos = geometry::sarkar_embed_tree(parents, c, 10);
      for (size_t u = 0; u < parents.size(); ++u) {
        for (size_t v = u + 1; v < parents.size(); ++v) {
          const double tree_d = 2.0 * tree_edge_distance(parents, static_cast<int>(u),
                                                         static_cast<int>(v));
          const double emb_d = geometry::hyp_distance(pos[u], pos[v], c);
          CHECK(tree_d <= 1.1 * emb_d + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("tree embedding input validation") {
  CHECK_THROWS_AS(geometry::sarkar_embed_tree({}, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(geometry::sarkar_embed_tree({0}, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(geometry::sarkar_embed_tree({-1, 2, 1}, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(geometry::sarkar_embed_tree({-1, 0}, 1.0, 1), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Ball volume
// ----------------------------------------------------------------------------

namespace {

// Closed-form volumes used as quadrature oracles.
double volume_d2(double r, double c) {
  return 2.0 * std::numbers::pi * (std::cosh(std::sqrt(c) * r) - 1.0) / c;
}
double volume_d3(double r, double c) {
  const double sc = std::sqrt(c);
  return std::numbers::pi * (std::sinh(2.0 * sc * r) - 2.0 * sc * r) / (c * sc);
}
double volume_d5(double r, double c) {
  const double sc = std::sqrt(c);
  const double omega4 = 8.0 * std::numbers::pi * std::numbers::pi / 3.0;
  const double integral =
      (std::sinh(4.0 * sc * r) / (4.0 * sc) - 2.0 * std::sinh(2.0 * sc * r) / sc + 3.0 * r) / 8.0;
  return omega4 * integral / (c * c);
}

}  // namespace

TEST_CASE("ball volume matches closed forms") {
  for (double c : {0.5, 1.0, 2.0}) {
    for (double r : {0.5, 1.0, 3.0, 6.0, 10.0}) {
      CHECK(rel_err(geometry::hyp_ball_volume(r, 2, c), volume_d2(r, c), 1e-300) <= 1e-8);
      CHECK(rel_err(geometry::hyp_ball_volume(r, 3, c), volume_d3(r, c), 1e-300) <= 1e-8);
      CHECK(rel_err(geometry::hyp_ball_volume(r, 5, c), volume_d5(r, c), 1e-300) <= 1e-8);
    }
  }
  CHECK(geometry::hyp_ball_volume(0.0, 3, 1.0) == 0.0);
}

TEST_CASE("ball volume grows exponentially with the expected rate") {
  // ln(V(r+1)/V(r)) at r = 8, d = 3, c = 1 is within 5% of (d-1)sqrt(c) = 2.
  const double ratio =
      std::log(geometry::hyp_ball_volume(9.0, 3, 1.0) / geometry::hyp_ball_volume(8.0, 3, 1.0));
  CHECK(std::abs(ratio / 2.0 - 1.0) <= 0.05);

  // Least-squares slope of ln V(r) over r = 6..10 for d in {3, 5}.
  for (int d : {3, 5}) {
    const double expected = d - 1.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (double r = 6.0; r <= 10.0; r += 1.0) {
      const double y = std::log(geometry::hyp_ball_volume(r, d, 1.0));
      sx += r; sy += y; sxx += r * r; sxy += r * y; ++n;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(std::abs(slope / expected - 1.0) <= 0.05);
  }
}
