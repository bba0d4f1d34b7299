#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include "rigno/geometry.hpp"

namespace rigno {
namespace {

using Vec2 = Eigen::Vector2d;

constexpr int kGhost = -1;

double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Signed containment margin: positive when p is strictly inside the
// circumcircle by more than the tolerance, negative when strictly outside,
// zero-ish when cocircular. Returns +inf/-inf style sentinels are never used;
// degenerate (collinear) triangles report "outside".
struct Circle {
  Vec2 center;
  double r2 = 0.0;
  bool valid = false;
};

Circle circumcircle(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a, ac = c - a;
  const double det = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  Circle out;
  if (det == 0.0) return out;
  const double ab2 = ab.squaredNorm(), ac2 = ac.squaredNorm();
  const Vec2 rel((ac.y() * ab2 - ab.y() * ac2) / det, (ab.x() * ac2 - ac.x() * ab2) / det);
  out.center = a + rel;
  out.r2 = rel.squaredNorm();
  out.valid = true;
  return out;
}

// r^2 - |p - c|^2 scaled by 1 / r^2; > tol means strictly inside.
double incircle_margin(const Circle& circle, const Vec2& p) {
  if (!circle.valid) return -1.0;
  return (circle.r2 - (p - circle.center).squaredNorm()) / circle.r2;
}

struct Tri {
  std::array<int, 3> v;    // CCW; kGhost marks the vertex at infinity
  std::array<int, 3> nbr;  // nbr[i] is across the edge opposite v[i]
  Circle circle;
  bool alive = true;
};

std::uint64_t hilbert_key(std::uint32_t x, std::uint32_t y, int order) {
  std::uint64_t d = 0;
  for (std::uint32_t s = 1u << (order - 1); s > 0; s >>= 1) {
    const std::uint32_t rx = (x & s) > 0 ? 1 : 0;
    const std::uint32_t ry = (y & s) > 0 ? 1 : 0;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

class BowyerWatson {
 public:
  explicit BowyerWatson(const std::vector<Vec2>& pts) : pts_(pts) {}

  void run(const std::vector<int>& order) {
    // Seed with the first non-collinear triple in insertion order.
    const int a = order[0], b = order[1];
    std::size_t k = 2;
    while (k < order.size() && orient(pts_[a], pts_[b], pts_[order[k]]) == 0.0) ++k;
    if (k == order.size()) throw GeometryError("delaunay: all points are collinear");
    int c = order[k];
    seed(a, b, c);
    for (std::size_t i = 2; i < order.size(); ++i) {
      if (i == k) continue;
      insert(order[i]);
    }
  }

  std::vector<std::array<int, 3>> triangles() const {
    std::vector<std::array<int, 3>> out;
    for (const Tri& t : tris_) {
      if (t.alive && t.v[0] != kGhost && t.v[1] != kGhost && t.v[2] != kGhost) out.push_back(t.v);
    }
    return out;
  }

 private:
  const std::vector<Vec2>& pts_;
  std::vector<Tri> tris_;
  int last_ = 0;

  int add(int a, int b, int c) {
    Tri t;
    t.v = {a, b, c};
    t.nbr = {-1, -1, -1};
    if (a != kGhost && b != kGhost && c != kGhost) t.circle = circumcircle(pts_[a], pts_[b], pts_[c]);
    tris_.push_back(t);
    return static_cast<int>(tris_.size()) - 1;
  }

  void seed(int a, int b, int c) {
    if (orient(pts_[a], pts_[b], pts_[c]) < 0) std::swap(b, c);
    const int t0 = add(a, b, c);
    // Ghosts sit across each hull edge, with the edge reversed.
    const int g0 = add(b, a, kGhost);  // across edge a-b (opposite c)
    const int g1 = add(c, b, kGhost);  // across edge b-c (opposite a)
    const int g2 = add(a, c, kGhost);  // across edge c-a (opposite b)
    tris_[t0].nbr = {g1, g2, g0};
    // Ghost (p, q, G): nbr[2] is the real triangle, nbr[0] / nbr[1] are the
    // neighbouring ghosts sharing q-G and G-p.
    tris_[g0].nbr = {g2, g1, t0};
    tris_[g1].nbr = {g0, g2, t0};
    tris_[g2].nbr = {g1, g0, t0};
    last_ = t0;
  }

  bool is_ghost(const Tri& t) const { return t.v[0] == kGhost || t.v[1] == kGhost || t.v[2] == kGhost; }

  // Ghost triangles are stored with the ghost in slot 2 when created by
  // seed(); cavity re-triangulation may rotate it, so locate it explicitly.
  bool conflicts(int ti, int p) const {
    const Tri& t = tris_[ti];
    if (!is_ghost(t)) return incircle_margin(t.circle, pts_[p]) > kIncircleTolerance;
    int g = 0;
    while (t.v[g] != kGhost) ++g;
    const Vec2& u = pts_[t.v[(g + 1) % 3]];
    const Vec2& w = pts_[t.v[(g + 2) % 3]];
    const double o = orient(u, w, pts_[p]);
    if (o > 0) return true;
    if (o < 0) return false;
    // Collinear with the hull edge: conflict only strictly between u and w.
    return (pts_[p] - u).dot(w - u) > 0 && (pts_[p] - w).dot(u - w) > 0;
  }

  int locate(int p) {
    int cur = last_;
    if (!tris_[cur].alive) {
      for (int i = static_cast<int>(tris_.size()) - 1; i >= 0; --i) {
        if (tris_[i].alive) {
          cur = i;
          break;
        }
      }
    }
    const std::size_t max_steps = tris_.size() + 8;
    for (std::size_t step = 0; step < max_steps; ++step) {
      const Tri& t = tris_[cur];
      if (is_ghost(t)) {
        if (conflicts(cur, p)) return cur;
        // Step back into the real triangle behind this hull edge.
        int g = 0;
        while (t.v[g] != kGhost) ++g;
        cur = t.nbr[g];
        continue;
      }
      int next = -1;
      for (int e = 0; e < 3; ++e) {
        const Vec2& u = pts_[t.v[(e + 1) % 3]];
        const Vec2& w = pts_[t.v[(e + 2) % 3]];
        if (orient(u, w, pts_[p]) < 0) {
          next = t.nbr[e];
          break;
        }
      }
      if (next < 0) {
        if (conflicts(cur, p)) return cur;
        break;
      }
      cur = next;
    }
    for (int i = 0; i < static_cast<int>(tris_.size()); ++i) {
      if (tris_[i].alive && conflicts(i, p)) return i;
    }
    throw GeometryError("delaunay: failed to locate an inserted point");
  }

  void insert(int p) {
    const int start = locate(p);
    std::vector<int> cavity{start};
    std::vector<char> in_cavity(tris_.size(), 0);
    in_cavity[start] = 1;

    // Grow the conflict region, then enlarge it further if any boundary edge
    // would produce a non-positive triangle with p.
    for (bool grow = true; grow;) {
      grow = false;
      for (std::size_t i = 0; i < cavity.size(); ++i) {
        const Tri& t = tris_[cavity[i]];
        for (int e = 0; e < 3; ++e) {
          const int n = t.nbr[e];
          if (in_cavity[n]) continue;
          if (conflicts(n, p)) {
            in_cavity[n] = 1;
            cavity.push_back(n);
          }
        }
      }
      for (std::size_t i = 0; i < cavity.size() && !grow; ++i) {
        const Tri& t = tris_[cavity[i]];
        for (int e = 0; e < 3; ++e) {
          const int n = t.nbr[e];
          if (in_cavity[n]) continue;
          const int u = t.v[(e + 1) % 3], w = t.v[(e + 2) % 3];
          if (u == kGhost || w == kGhost) continue;
          if (orient(pts_[u], pts_[w], pts_[p]) <= 0.0) {
            if (is_ghost(tris_[n]) && !is_ghost(t)) continue;
            in_cavity[n] = 1;
            cavity.push_back(n);
            grow = true;
            break;
          }
        }
      }
    }

    struct Boundary {
      int u, w, outside;
    };
    std::vector<Boundary> boundary;
    for (int ti : cavity) {
      const Tri& t = tris_[ti];
      for (int e = 0; e < 3; ++e) {
        const int n = t.nbr[e];
        if (!in_cavity[n]) boundary.push_back({t.v[(e + 1) % 3], t.v[(e + 2) % 3], n});
      }
    }
    for (int ti : cavity) tris_[ti].alive = false;

    std::unordered_map<int, int> by_start, by_end;
    std::vector<int> created;
    created.reserve(boundary.size());
    for (const Boundary& b : boundary) {
      const int ti = add(b.u, b.w, p);
      created.push_back(ti);
      by_start[b.u] = ti;
      by_end[b.w] = ti;
      Tri& out = tris_[b.outside];
      for (int e = 0; e < 3; ++e) {
        if (out.nbr[e] >= 0 && !tris_[out.nbr[e]].alive && out.v[(e + 1) % 3] == b.w && out.v[(e + 2) % 3] == b.u) {
          out.nbr[e] = ti;
        }
      }
      tris_[ti].nbr[2] = b.outside;
    }
    for (std::size_t i = 0; i < boundary.size(); ++i) {
      Tri& t = tris_[created[i]];
      t.nbr[0] = by_start.at(boundary[i].w);
      t.nbr[1] = by_end.at(boundary[i].u);
    }
    // Prefer a real triangle as the next walk start.
    last_ = created.front();
    for (int ti : created) {
      if (!is_ghost(tris_[ti])) {
        last_ = ti;
        break;
      }
    }
  }
};

std::array<Index, 3> canonical(std::array<Index, 3> t) {
  const auto it = std::min_element(t.begin(), t.end());
  std::rotate(t.begin(), it, t.end());
  return t;
}

// Flip cocircular diagonals until each one touches the smallest index of its
// quadrilateral. Terminates because every flip replaces an edge by one whose
// smaller endpoint is strictly smaller.
void apply_tie_break(const std::vector<Vec2>& pts, std::vector<std::array<Index, 3>>& tris) {
  for (int pass = 0; pass < 1000; ++pass) {
    std::map<std::pair<Index, Index>, std::vector<std::pair<std::size_t, int>>> edge_map;
    for (std::size_t ti = 0; ti < tris.size(); ++ti) {
      for (int e = 0; e < 3; ++e) {
        Index a = tris[ti][(e + 1) % 3], b = tris[ti][(e + 2) % 3];
        if (a > b) std::swap(a, b);
        edge_map[{a, b}].push_back({ti, e});
      }
    }
    std::vector<char> touched(tris.size(), 0);
    bool flipped = false;
    for (const auto& [edge, owners] : edge_map) {
      if (owners.size() != 2) continue;
      const auto [t0, e0] = owners[0];
      const auto [t1, e1] = owners[1];
      if (touched[t0] || touched[t1]) continue;
      const Index c = tris[t0][e0];
      const Index d = tris[t1][e1];
      const Index a = edge.first, b = edge.second;
      const Index lo = std::min({a, b, c, d});
      if (lo == a || lo == b) continue;
      const Circle circle = circumcircle(pts[tris[t0][0]], pts[tris[t0][1]], pts[tris[t0][2]]);
      if (std::abs(incircle_margin(circle, pts[d])) > kIncircleTolerance) continue;
      // New diagonal c-d; keep CCW orientation.
      const Index u = tris[t0][(e0 + 1) % 3], w = tris[t0][(e0 + 2) % 3];
      std::array<Index, 3> n0{c, u, d}, n1{c, d, w};
      if (orient(pts[n0[0]], pts[n0[1]], pts[n0[2]]) <= 0 || orient(pts[n1[0]], pts[n1[1]], pts[n1[2]]) <= 0) {
        continue;
      }
      tris[t0] = n0;
      tris[t1] = n1;
      touched[t0] = touched[t1] = 1;
      flipped = true;
    }
    if (!flipped) return;
  }
}

}  // namespace

bool in_circumcircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                     const Eigen::Vector2d& p, double rel_tol) {
  return incircle_margin(circumcircle(a, b, c), p) > rel_tol;
}

Triangulation delaunay(const Points& points) {
  if (points.cols() != 2) throw ArgumentError("delaunay: only 2-D point sets are supported");
  const Index n = points.rows();
  if (n < 3) throw GeometryError("delaunay: need at least 3 points");

  std::vector<Vec2> pts(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pts[i] = Vec2(points(i, 0), points(i, 1));

  std::vector<int> sorted(static_cast<std::size_t>(n));
  std::iota(sorted.begin(), sorted.end(), 0);
  std::sort(sorted.begin(), sorted.end(), [&](int i, int j) {
    return pts[i].x() != pts[j].x() ? pts[i].x() < pts[j].x() : pts[i].y() < pts[j].y();
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (pts[sorted[i]] == pts[sorted[i - 1]]) {
      throw GeometryError("delaunay: duplicate points " + std::to_string(sorted[i - 1]) + " and " +
                          std::to_string(sorted[i]));
    }
  }

  // Hilbert order keeps the point-location walks short.
  Vec2 lo = pts[0], hi = pts[0];
  for (const Vec2& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec2 span = (hi - lo).cwiseMax(Vec2::Constant(std::numeric_limits<double>::min()));
  constexpr int kOrder = 16;
  const double cells = static_cast<double>((1u << kOrder) - 1);
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto x = static_cast<std::uint32_t>((pts[i].x() - lo.x()) / span.x() * cells);
    const auto y = static_cast<std::uint32_t>((pts[i].y() - lo.y()) / span.y() * cells);
    keys[i] = hilbert_key(x, y, kOrder);
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return keys[i] < keys[j]; });

  BowyerWatson bw(pts);
  bw.run(order);

  std::vector<std::array<Index, 3>> tris;
  for (const auto& t : bw.triangles()) tris.push_back({t[0], t[1], t[2]});
  for (const auto& t : tris) {
    if (orient(pts[t[0]], pts[t[1]], pts[t[2]]) <= 0.0) {
      throw GeometryError("delaunay: produced a degenerate triangle");
    }
  }
  apply_tie_break(pts, tris);

  Triangulation out;
  out.num_points = n;
  out.simplices.reserve(tris.size());
  for (const auto& t : tris) out.simplices.push_back(canonical(t));
  std::sort(out.simplices.begin(), out.simplices.end());
  return out;
}

}  // namespace rigno
