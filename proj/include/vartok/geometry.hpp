#pragma once

// Poincare-ball primitives.
//
// All operations live on the open ball D_c^d = { x in R^d : c*|x|^2 < 1 }
// of constant negative curvature -c (c > 0).  The module provides the exact
// closed forms (Mobius addition, geodesic distance, exponential/logarithmic
// maps at the origin and at arbitrary base points), their analytic gradients
// as vector-Jacobian products, a numerically safe projection that keeps
// iterates strictly inside the ball, a constructive tree embedding, and the
// volume of a hyperbolic ball obtained by quadrature.
//
// Conventions:
//   - Vectors are Eigen column vectors of double.
//   - Every function that consumes two points validates dimension and
//     curvature agreement and throws std::invalid_argument on mismatch.
//   - Functions returning points guarantee the result is finite; callers
//     that iterate (optimizers, residual chains) re-project explicitly.

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace vartok::geometry {

using Vec = Eigen::VectorXd;

// Margin used by project_to_safe_ball: points are pulled back to radius
// (1 - kSafeBallMargin * sqrt(c)) / sqrt(c), i.e. Euclidean norm
// 1/sqrt(c) - kSafeBallMargin.
inline constexpr double kSafeBallMargin = 1e-5;

// ============================================================================
// Curvature and points
// ============================================================================

// Positive curvature magnitude c of the ball D_c; immutable.
class Curvature {
 public:
  explicit Curvature(double c);

  double c() const { return c_; }
  double sqrt_c() const { return sqrt_c_; }

  friend bool operator==(const Curvature& a, const Curvature& b) {
    return a.c_ == b.c_;
  }

 private:
  double c_;
  double sqrt_c_;
};

// A point of D_c carrying its curvature so mixed-ball arithmetic is caught
// at the call site.  Construction validates c*|x|^2 < 1.
struct PoincarePoint {
  Vec coords;
  Curvature curv;

  PoincarePoint(Vec coords_in, Curvature curv_in);

  int dim() const { return static_cast<int>(coords.size()); }
};

// Throws std::invalid_argument unless both points share dimension and
// curvature.
void check_compatible(const PoincarePoint& a, const PoincarePoint& b);

// ============================================================================
// Core operations (raw form: coordinates + curvature)
// ============================================================================
// The raw overloads are the workhorses used by the quantizer's inner loops;
// the PoincarePoint overloads validate and delegate.

// Mobius addition x (+)_c y.
Vec mobius_add(const Vec& x, const Vec& y, double c);

// Additive inverse: (-x) (+)_c x = 0.
inline Vec mobius_neg(const Vec& x) { return -x; }

// Geodesic distance d_c(x, y) = (2/sqrt(c)) * atanh(sqrt(c) |(-x) (+) y|).
double hyp_distance(const Vec& x, const Vec& y, double c);

// Squared geodesic distance; smooth at x == y.
double hyp_distance_sq(const Vec& x, const Vec& y, double c);

// exp_0(v) = tanh(sqrt(c)|v|) * v / (sqrt(c)|v|); exp_0(0) = 0.
Vec exp_map_origin(const Vec& v, double c);

// log_0(x) = atanh(sqrt(c)|x|) * x / (sqrt(c)|x|); log_0(0) = 0.
Vec log_map_origin(const Vec& x, double c);

// Exponential map at an arbitrary base point w:
//   exp_w(v) = w (+)_c tanh(sqrt(c) * lambda_w * |v| / 2) * v / (sqrt(c)|v|).
Vec exp_map(const Vec& w, const Vec& v, double c);

// Geodesic scaling toward the origin: exp_0(s * log_0(x)).
// Requires s in [0, 1]; hyp_scale(0, x) = 0 and hyp_scale(1, x) = x.
Vec hyp_scale(double s, const Vec& x, double c);

// Conformal factor lambda_x = 2 / (1 - c|x|^2).
double conformal_factor(const Vec& x, double c);

// Radially rescales x onto Euclidean norm 1/sqrt(c) - margin when it lies
// outside; interior points pass through unchanged.
Vec project_to_safe_ball(const Vec& x, double c, double margin = kSafeBallMargin);

// True when c*|x|^2 < 1 (open ball membership).
bool in_ball(const Vec& x, double c);

// ============================================================================
// Analytic gradients (vector-Jacobian products)
// ============================================================================
// Each *_vjp takes the upstream gradient g with respect to the operation's
// output and returns gradients with respect to the inputs.  At removable
// singularities (zero-norm arguments) the analytic limit is used.

std::pair<Vec, Vec> mobius_add_vjp(const Vec& x, const Vec& y, double c, const Vec& g);

Vec exp_map_origin_vjp(const Vec& v, double c, const Vec& g);

Vec log_map_origin_vjp(const Vec& x, double c, const Vec& g);

// Returns (grad_s, grad_x) for hyp_scale(s, x).
std::pair<double, Vec> hyp_scale_vjp(double s, const Vec& x, double c, const Vec& g);

// Gradient of the scalar distance with respect to both points.
// Undefined at x == y (the distance is not differentiable there).
std::pair<Vec, Vec> hyp_distance_grad(const Vec& x, const Vec& y, double c);

// Gradient of the squared distance; zero at x == y (smooth minimum).
std::pair<Vec, Vec> hyp_distance_sq_grad(const Vec& x, const Vec& y, double c);

// VJP of project_to_safe_ball (identity inside; radial-rescale Jacobian on
// the clamped branch).
Vec project_to_safe_ball_vjp(const Vec& x, double c, const Vec& g,
                             double margin = kSafeBallMargin);

// ============================================================================
// Typed wrappers
// ============================================================================

PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y);
PoincarePoint mobius_neg(const PoincarePoint& x);
double hyp_distance(const PoincarePoint& x, const PoincarePoint& y);
PoincarePoint exp_map_origin(const Vec& v, Curvature curv);
Vec log_map_origin(const PoincarePoint& x);
PoincarePoint hyp_scale(double s, const PoincarePoint& x);
double conformal_factor(const PoincarePoint& x);
PoincarePoint project_to_safe_ball(const PoincarePoint& x,
                                   double margin = kSafeBallMargin);

// ============================================================================
// Tree embedding
// ============================================================================

// Rooted tree given as a parent array: parents[0] == -1 for the root and
// parents[i] < i otherwise.
using ParentArray = std::vector<int>;

// Embeds a rooted tree into D_c^dim.  The root maps to the origin and a
// depth-k node is placed at Euclidean radius tanh(sqrt(c)*k)/sqrt(c), so its
// geodesic distance from the origin is exactly 2k.  Sibling groups receive
// disjoint angular sectors; sector offsets shrink geometrically with depth
// and consume fresh coordinate axes while dim allows, which keeps deep
// cross-branch pairs well separated.  Low distortion needs roughly
// dim >= 2*depth + 2; any dim >= 2 still yields a valid embedding with the
// exact radial law.
std::vector<Vec> sarkar_embed_tree(const ParentArray& parents, double c, int dim);

// ============================================================================
// Ball volume
// ============================================================================

// Volume of the hyperbolic ball of geodesic radius r in D_c^dim:
//   V(r) = omega_{dim-1} * Integral_0^r (sinh(sqrt(c) t)/sqrt(c))^{dim-1} dt,
// evaluated with adaptive Simpson quadrature at relative tolerance 1e-10.
double hyp_ball_volume(double r, int dim, double c);

// Surface area of the unit sphere S^{dim-1} in R^dim.
double unit_sphere_area(int dim);

}  // namespace vartok::geometry
