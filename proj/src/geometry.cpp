#include "vartok/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vartok::geometry {

namespace {

constexpr double kTinyNorm = 1e-15;

// atanh argument guard: round-off can push sqrt(c)*|x| of an in-ball point
// to 1.0 exactly; the clamp keeps the result finite.
double safe_atanh(double z) {
  return std::atanh(std::min(z, 1.0 - 1e-16));
}

void check_finite_dim(const Vec& x, const char* what) {
  if (x.size() == 0) throw std::invalid_argument(std::string(what) + ": empty vector");
}

}  // namespace

// ============================================================================
// Curvature and points
// ============================================================================

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("curvature must be a positive finite real");
  }
}

PoincarePoint::PoincarePoint(Vec coords_in, Curvature curv_in)
    : coords(std::move(coords_in)), curv(curv_in) {
  check_finite_dim(coords, "PoincarePoint");
  if (!in_ball(coords, curv.c())) {
    throw std::invalid_argument("point lies outside the open ball");
  }
}

void check_compatible(const PoincarePoint& a, const PoincarePoint& b) {
  if (a.coords.size() != b.coords.size()) {
    throw std::invalid_argument("dimension mismatch between points");
  }
  if (!(a.curv == b.curv)) {
    throw std::invalid_argument("curvature mismatch between points");
  }
}

// ============================================================================
// Core operations
// ============================================================================

Vec mobius_add(const Vec& x, const Vec& y, double c) {
  if (x.size() != y.size()) throw std::invalid_argument("mobius_add: dimension mismatch");
  const double dot = x.dot(y);
  const double nx2 = x.squaredNorm();
  const double ny2 = y.squaredNorm();
  const double a = 1.0 + 2.0 * c * dot + c * ny2;
  const double b = 1.0 - c * nx2;
  const double den = 1.0 + 2.0 * c * dot + c * c * nx2 * ny2;
  return (a * x + b * y) / den;
}

double hyp_distance(const Vec& x, const Vec& y, double c) {
  const Vec m = mobius_add(-x, y, c);
  const double sc = std::sqrt(c);
  return (2.0 / sc) * safe_atanh(sc * m.norm());
}

double hyp_distance_sq(const Vec& x, const Vec& y, double c) {
  const double d = hyp_distance(x, y, c);
  return d * d;
}

Vec exp_map_origin(const Vec& v, double c) {
  check_finite_dim(v, "exp_map_origin");
  const double n = v.norm();
  if (n < kTinyNorm) return v;
  const double sc = std::sqrt(c);
  return (std::tanh(sc * n) / (sc * n)) * v;
}

Vec log_map_origin(const Vec& x, double c) {
  check_finite_dim(x, "log_map_origin");
  const double n = x.norm();
  if (n < kTinyNorm) return x;
  const double sc = std::sqrt(c);
  return (safe_atanh(sc * n) / (sc * n)) * x;
}

Vec exp_map(const Vec& w, const Vec& v, double c) {
  if (w.size() != v.size()) throw std::invalid_argument("exp_map: dimension mismatch");
  const double n = v.norm();
  const double lambda = conformal_factor(w, c);
  const double sc = std::sqrt(c);
  Vec u;
  if (n < kTinyNorm) {
    u = (lambda / 2.0) * v;
  } else {
    u = (std::tanh(sc * lambda * n / 2.0) / (sc * n)) * v;
  }
  return mobius_add(w, u, c);
}

Vec hyp_scale(double s, const Vec& x, double c) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw std::invalid_argument("hyp_scale: s must lie in [0, 1]");
  }
  return exp_map_origin(s * log_map_origin(x, c), c);
}

double conformal_factor(const Vec& x, double c) {
  const double den = 1.0 - c * x.squaredNorm();
  if (!(den > 0.0)) throw std::invalid_argument("conformal_factor: point outside ball");
  return 2.0 / den;
}

Vec project_to_safe_ball(const Vec& x, double c, double margin) {
  const double radius = 1.0 / std::sqrt(c) - margin;
  if (!(radius > 0.0)) throw std::invalid_argument("project_to_safe_ball: margin too large");
  const double n = x.norm();
  if (n <= radius) return x;
  return (radius / n) * x;
}

bool in_ball(const Vec& x, double c) {
  return c * x.squaredNorm() < 1.0;
}

// ============================================================================
// Analytic gradients
// ============================================================================

std::pair<Vec, Vec> mobius_add_vjp(const Vec& x, const Vec& y, double c, const Vec& g) {
  if (x.size() != y.size() || x.size() != g.size()) {
    throw std::invalid_argument("mobius_add_vjp: dimension mismatch");
  }
  const double dot = x.dot(y);
  const double nx2 = x.squaredNorm();
  const double ny2 = y.squaredNorm();
  const double a = 1.0 + 2.0 * c * dot + c * ny2;
  const double b = 1.0 - c * nx2;
  const double den = 1.0 + 2.0 * c * dot + c * c * nx2 * ny2;

  const double xg = x.dot(g);
  const double yg = y.dot(g);
  const double s = (a * xg + b * yg) / den;  // <f, g>

  Vec grad_x = (a * g + 2.0 * c * xg * y - 2.0 * c * yg * x) / den
               - (s / den) * (2.0 * c * y + 2.0 * c * c * ny2 * x);
  Vec grad_y = (xg * (2.0 * c * x + 2.0 * c * y) + b * g) / den
               - (s / den) * (2.0 * c * x + 2.0 * c * c * nx2 * y);
  return {std::move(grad_x), std::move(grad_y)};
}

Vec exp_map_origin_vjp(const Vec& v, double c, const Vec& g) {
  const double n = v.norm();
  if (n < kTinyNorm) return g;  // Jacobian tends to the identity at 0.
  const double sc = std::sqrt(c);
  const double z = sc * n;
  const double th = std::tanh(z);
  const double fac = th / z;
  // d/dz [tanh(z)/z] = ((1 - tanh^2) z - tanh) / z^2, then dz/dn = sqrt(c).
  const double dfac_dn = sc * ((1.0 - th * th) * z - th) / (z * z);
  return fac * g + (dfac_dn * v.dot(g) / n) * v;
}

Vec log_map_origin_vjp(const Vec& x, double c, const Vec& g) {
  const double n = x.norm();
  if (n < kTinyNorm) return g;
  const double sc = std::sqrt(c);
  const double z = std::min(sc * n, 1.0 - 1e-16);
  const double at = safe_atanh(z);
  const double fac = at / z;
  // d/dz [atanh(z)/z] = (z/(1-z^2) - atanh(z)) / z^2, then dz/dn = sqrt(c).
  const double dfac_dn = sc * (z / (1.0 - z * z) - at) / (z * z);
  return fac * g + (dfac_dn * x.dot(g) / n) * x;
}

std::pair<double, Vec> hyp_scale_vjp(double s, const Vec& x, double c, const Vec& g) {
  const Vec v = log_map_origin(x, c);
  const Vec gv = exp_map_origin_vjp(s * v, c, g);
  const double grad_s = gv.dot(v);
  Vec grad_x = log_map_origin_vjp(x, c, Vec(s * gv));
  return {grad_s, std::move(grad_x)};
}

namespace {

// Shared chain for distance gradients: upstream scalar dd arrives at the
// Mobius image m = (-x) (+) y with gradient dd * 2/(1 - c|m|^2) * m/|m|.
std::pair<Vec, Vec> distance_chain(const Vec& x, const Vec& y, double c, double dd,
                                   const Vec& m, double n) {
  const Vec grad_m = (dd * 2.0 / ((1.0 - c * n * n) * n)) * m;
  auto [gx_neg, gy] = mobius_add_vjp(-x, y, c, grad_m);
  return {Vec(-gx_neg), std::move(gy)};
}

}  // namespace

std::pair<Vec, Vec> hyp_distance_grad(const Vec& x, const Vec& y, double c) {
  const Vec m = mobius_add(-x, y, c);
  const double n = m.norm();
  if (n < kTinyNorm) {
    throw std::invalid_argument("hyp_distance_grad: undefined at coincident points");
  }
  return distance_chain(x, y, c, 1.0, m, n);
}

std::pair<Vec, Vec> hyp_distance_sq_grad(const Vec& x, const Vec& y, double c) {
  const Vec m = mobius_add(-x, y, c);
  const double n = m.norm();
  if (n < kTinyNorm) {
    return {Vec(Vec::Zero(x.size())), Vec(Vec::Zero(y.size()))};
  }
  const double d = hyp_distance(x, y, c);
  return distance_chain(x, y, c, 2.0 * d, m, n);
}

Vec project_to_safe_ball_vjp(const Vec& x, double c, const Vec& g, double margin) {
  const double radius = 1.0 / std::sqrt(c) - margin;
  const double n = x.norm();
  if (n <= radius) return g;
  const Vec u = x / n;
  return (radius / n) * (g - u.dot(g) * u);
}

// ============================================================================
// Typed wrappers
// ============================================================================

PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y) {
  check_compatible(x, y);
  return PoincarePoint(mobius_add(x.coords, y.coords, x.curv.c()), x.curv);
}

PoincarePoint mobius_neg(const PoincarePoint& x) {
  return PoincarePoint(-x.coords, x.curv);
}

double hyp_distance(const PoincarePoint& x, const PoincarePoint& y) {
  check_compatible(x, y);
  return hyp_distance(x.coords, y.coords, x.curv.c());
}

PoincarePoint exp_map_origin(const Vec& v, Curvature curv) {
  return PoincarePoint(exp_map_origin(v, curv.c()), curv);
}

Vec log_map_origin(const PoincarePoint& x) {
  return log_map_origin(x.coords, x.curv.c());
}

PoincarePoint hyp_scale(double s, const PoincarePoint& x) {
  return PoincarePoint(hyp_scale(s, x.coords, x.curv.c()), x.curv);
}

double conformal_factor(const PoincarePoint& x) {
  return conformal_factor(x.coords, x.curv.c());
}

PoincarePoint project_to_safe_ball(const PoincarePoint& x, double margin) {
  return PoincarePoint(project_to_safe_ball(x.coords, x.curv.c(), margin), x.curv);
}

// ============================================================================
// Tree embedding
// ============================================================================

namespace {

// Unit vector along coordinate axis `idx`, orthonormalized against the
// (unit) vectors in `against`; returns a zero vector when degenerate.
Vec axis_orthonormal(int idx, int dim, const std::vector<const Vec*>& against) {
  Vec w = Vec::Zero(dim);
  w[idx % dim] = 1.0;
  for (const Vec* a : against) w -= w.dot(*a) * (*a);
  const double n = w.norm();
  if (n < 1e-9) return Vec::Zero(dim);
  return w / n;
}

// First axis (scanning from `start`) that stays independent of `against`.
Vec fresh_direction(int start, int dim, const std::vector<const Vec*>& against) {
  for (int k = 0; k < dim; ++k) {
    Vec w = axis_orthonormal(start + k, dim, against);
    if (w.norm() > 0.5) return w;
  }
  throw std::invalid_argument("sarkar_embed_tree: dimension too small for tree");
}

// Sector half-angle for the children of a depth-k node with g siblings.
// Wider groups get narrower offsets; deeper levels shrink geometrically,
// which keeps the total angular drift of a subtree bounded.
double sector_offset(int g, int parent_depth) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  double base;
  if (g <= 1) {
    return 0.0;
  } else if (g == 2) {
    base = 20.0 * kDeg;
  } else if (g == 3) {
    base = 15.0 * kDeg;
  } else {
    base = (45.0 / g) * kDeg;
  }
  return base * std::pow(0.32, parent_depth - 1);
}

}  // namespace

std::vector<Vec> sarkar_embed_tree(const ParentArray& parents, double c, int dim) {
  const int n = static_cast<int>(parents.size());
  if (n == 0) throw std::invalid_argument("sarkar_embed_tree: empty tree");
  if (dim < 2) throw std::invalid_argument("sarkar_embed_tree: dim must be >= 2");
  if (parents[0] != -1) throw std::invalid_argument("sarkar_embed_tree: node 0 must be the root");

  std::vector<int> depth(n, 0);
  std::vector<std::vector<int>> children(n);
  for (int i = 1; i < n; ++i) {
    if (parents[i] < 0 || parents[i] >= i) {
      throw std::invalid_argument("sarkar_embed_tree: parents[i] must satisfy 0 <= parents[i] < i");
    }
    children[parents[i]].push_back(i);
    depth[i] = depth[parents[i]] + 1;
  }

  const double sc = std::sqrt(c);
  std::vector<Vec> dir(n, Vec::Zero(dim));
  std::vector<Vec> pos(n, Vec::Zero(dim));

  for (int u = 0; u < n; ++u) {
    const auto& kids = children[u];
    const int g = static_cast<int>(kids.size());
    if (g == 0) continue;

    std::vector<Vec> kid_dirs(g, Vec::Zero(dim));
    if (u == 0) {
      // Root: spread children over the full sphere using the first axes.
      if (g == 1) {
        kid_dirs[0] = Vec::Unit(dim, 0);
      } else if (g == 2) {
        kid_dirs[0] = Vec::Unit(dim, 0);
        kid_dirs[1] = -Vec::Unit(dim, 0);
      } else {
        for (int j = 0; j < g; ++j) {
          const double ang = 2.0 * std::numbers::pi * j / g;
          kid_dirs[j] = std::cos(ang) * Vec::Unit(dim, 0) + std::sin(ang) * Vec::Unit(dim, 1);
        }
      }
    } else {
      const Vec& v = dir[u];
      const double phi = sector_offset(g, depth[u]);
      const int axis0 = 2 * depth[u];  // fresh axis pair per level while dim allows
      if (g == 1) {
        kid_dirs[0] = v;
      } else if (g == 2) {
        const Vec w = fresh_direction(axis0, dim, {&v});
        kid_dirs[0] = std::cos(phi) * v + std::sin(phi) * w;
        kid_dirs[1] = std::cos(phi) * v - std::sin(phi) * w;
      } else {
        const Vec w1 = fresh_direction(axis0, dim, {&v});
        const Vec w2 = fresh_direction(axis0 + 1, dim, {&v, &w1});
        for (int j = 0; j < g; ++j) {
          const double ang = 2.0 * std::numbers::pi * j / g;
          kid_dirs[j] = std::cos(phi) * v
                        + std::sin(phi) * (std::cos(ang) * w1 + std::sin(ang) * w2);
        }
      }
    }

    for (int j = 0; j < g; ++j) {
      const int v = kids[j];
      dir[v] = kid_dirs[j].normalized();
      // Euclidean radius tanh(sqrt(c)*k)/sqrt(c) makes d(0, pos) = 2k exactly.
      pos[v] = (std::tanh(sc * depth[v]) / sc) * dir[v];
    }
  }
  return pos;
}

// ============================================================================
// Ball volume
// ============================================================================

namespace {

double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fb, double fm,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double err = left + right - whole;
  if (depth >= 50 || std::abs(err) <= 15.0 * tol) {
    return left + right + err / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, fm, flm, left, 0.5 * tol, depth + 1)
       + adaptive_simpson(f, m, b, fm, fb, frm, right, 0.5 * tol, depth + 1);
}

}  // namespace

double unit_sphere_area(int dim) {
  if (dim < 1) throw std::invalid_argument("unit_sphere_area: dim must be >= 1");
  const double half = 0.5 * dim;
  return 2.0 * std::exp(half * std::log(std::numbers::pi) - std::lgamma(half));
}

double hyp_ball_volume(double r, int dim, double c) {
  if (!(r >= 0.0)) throw std::invalid_argument("hyp_ball_volume: radius must be >= 0");
  if (dim < 2) throw std::invalid_argument("hyp_ball_volume: dim must be >= 2");
  if (!(c > 0.0)) throw std::invalid_argument("hyp_ball_volume: curvature must be positive");
  if (r == 0.0) return 0.0;

  const double sc = std::sqrt(c);
  const auto integrand = [sc, dim](double t) {
    return std::pow(std::sinh(sc * t) / sc, dim - 1);
  };
  const double fa = integrand(0.0);
  const double fb = integrand(r);
  const double fm = integrand(0.5 * r);
  const double rough = simpson(0.0, fa, r, fb, fm);
  const double tol = 1e-10 * std::max(std::abs(rough), 1e-300);
  const double integral =
      adaptive_simpson(integrand, 0.0, r, fa, fb, fm, rough, tol, 0);
  return unit_sphere_area(dim) * integral;
}

}  // namespace vartok::geometry
