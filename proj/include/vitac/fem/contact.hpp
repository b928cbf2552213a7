#pragma once

#include "vitac/fem/barrier.hpp"
#include "vitac/fem/ccd.hpp"
#include "vitac/fem/sim_state.hpp"

namespace vitac {

struct NodeRef {
  int body = 0;
  int vertex = 0;
  bool operator==(const NodeRef&) const = default;
};

/// Point-triangle pair (p, t0, t1, t2) or edge-edge pair (a0, a1, b0, b1).
struct ContactPair {
  bool edge_edge = false;
  std::array<NodeRef, 4> nodes;
  double weight = 0.0;  // m^2
};

/// Collision primitives of every body of a SimState plus which bodies interact.
/// Gels interact with rigid bodies; rigid pairs interact when one is dynamic.
class ContactTopology {
 public:
  struct Body {
    std::vector<int> vertices;
    std::vector<Tri> tris;
    std::vector<Edge> edges;
    std::vector<double> vertex_w, tri_w, edge_w;  // empty for rigid bodies
    bool gel = false;
  };

  ContactTopology() = default;

  ContactTopology(const SimState& s, double rigid_contact_area) : rigid_area_(rigid_contact_area) {
    for (const auto& g : s.gels) {
      const GelModel& m = *g.model;
      Body b;
      b.gel = true;
      b.vertices = m.surface_vertices;
      b.tris = m.mesh->surface_tris;
      b.edges = m.surface_edges;
      for (int v : b.vertices) b.vertex_w.push_back(m.vertex_area[v]);
      for (double a : m.tri_area) b.tri_w.push_back(a / 3.0);
      b.edge_w = m.edge_area;
      bodies_.push_back(std::move(b));
    }
    for (const auto& r : s.rigids) {
      Body b;
      b.vertices.resize(r.shape->vertices.size());
      for (std::size_t i = 0; i < b.vertices.size(); ++i) b.vertices[i] = static_cast<int>(i);
      b.tris = r.shape->tris;
      b.edges = r.shape->edges;
      bodies_.push_back(std::move(b));
    }
    const int ng = static_cast<int>(s.gels.size()), nr = static_cast<int>(s.rigids.size());
    for (int g = 0; g < ng; ++g)
      for (int r = 0; r < nr; ++r) pairs_.emplace_back(g, ng + r);
    for (int a = 0; a < nr; ++a)
      for (int b = a + 1; b < nr; ++b)
        if (s.rigids[a].dynamic || s.rigids[b].dynamic) pairs_.emplace_back(ng + a, ng + b);
  }

  const std::vector<Body>& bodies() const { return bodies_; }
  const std::vector<std::pair<int, int>>& body_pairs() const { return pairs_; }

  /// Calls f(ContactPair) for every primitive pair whose (swept, inflated)
  /// bounding boxes overlap. `end` may be null for a static query.
  template <class F>
  void for_each_candidate(const Configuration& start, const Configuration* end, double inflate, F&& f) const {
    std::vector<BodyBoxes> boxes(bodies_.size());
    std::vector<bool> built(bodies_.size(), false);
    const auto ensure = [&](int b) {
      if (!built[b]) {
        boxes[b] = make_boxes(b, start.bodies[b], end ? &end->bodies[b] : nullptr, inflate);
        built[b] = true;
      }
    };
    for (const auto& [a, b] : pairs_) {
      ensure(a);
      ensure(b);
      if (!boxes[a].all.overlaps(boxes[b].all)) continue;
      point_triangle(a, b, boxes, f);
      point_triangle(b, a, boxes, f);
      edge_edge(a, b, boxes, f);
    }
  }

 private:
  struct BodyBoxes {
    Aabb all;
    std::vector<Aabb> verts, tris, edges;
  };

  static Aabb box_of(std::initializer_list<int> ids, const std::vector<Vec3>& x0, const std::vector<Vec3>* x1,
                     double inflate) {
    Aabb b;
    for (int i : ids) {
      b.expand(x0[i]);
      if (x1) b.expand((*x1)[i]);
    }
    b.inflate(inflate);
    return b;
  }

  BodyBoxes make_boxes(int body, const std::vector<Vec3>& x0, const std::vector<Vec3>* x1, double inflate) const {
    const Body& b = bodies_[body];
    BodyBoxes out;
    for (int v : b.vertices) {
      out.verts.push_back(box_of({v}, x0, x1, inflate));
      out.all.expand(out.verts.back().lo);
      out.all.expand(out.verts.back().hi);
    }
    for (const auto& t : b.tris) out.tris.push_back(box_of({t[0], t[1], t[2]}, x0, x1, inflate));
    for (const auto& e : b.edges) out.edges.push_back(box_of({e[0], e[1]}, x0, x1, inflate));
    return out;
  }

  template <class F>
  void point_triangle(int pb, int tb, const std::vector<BodyBoxes>& boxes, F& f) const {
    const Body& P = bodies_[pb];
    const Body& T = bodies_[tb];
    const BodyBoxes& bp = boxes[pb];
    const BodyBoxes& bt = boxes[tb];
    for (std::size_t i = 0; i < P.vertices.size(); ++i) {
      if (!bp.verts[i].overlaps(bt.all)) continue;
      for (std::size_t k = 0; k < T.tris.size(); ++k) {
        if (!bp.verts[i].overlaps(bt.tris[k])) continue;
        const Tri& t = T.tris[k];
        ContactPair c;
        c.edge_edge = false;
        c.nodes = {NodeRef{pb, P.vertices[i]}, NodeRef{tb, t[0]}, NodeRef{tb, t[1]}, NodeRef{tb, t[2]}};
        c.weight = P.gel ? P.vertex_w[i] : T.gel ? T.tri_w[k] : rigid_area_;
        f(c);
      }
    }
  }

  template <class F>
  void edge_edge(int ab, int bb, const std::vector<BodyBoxes>& boxes, F& f) const {
    const Body& A = bodies_[ab];
    const Body& B = bodies_[bb];
    const BodyBoxes& ba = boxes[ab];
    const BodyBoxes& bx = boxes[bb];
    for (std::size_t i = 0; i < A.edges.size(); ++i) {
      if (!ba.edges[i].overlaps(bx.all)) continue;
      for (std::size_t k = 0; k < B.edges.size(); ++k) {
        if (!ba.edges[i].overlaps(bx.edges[k])) continue;
        ContactPair c;
        c.edge_edge = true;
        c.nodes = {NodeRef{ab, A.edges[i][0]}, NodeRef{ab, A.edges[i][1]}, NodeRef{bb, B.edges[k][0]},
                   NodeRef{bb, B.edges[k][1]}};
        c.weight = A.gel ? A.edge_w[i] : B.gel ? B.edge_w[k] : rigid_area_;
        f(c);
      }
    }
  }

  std::vector<Body> bodies_;
  std::vector<std::pair<int, int>> pairs_;
  double rigid_area_ = 1e-5;
};

inline std::array<Vec3, 4> pair_positions(const ContactPair& c, const Configuration& x) {
  return {x.bodies[c.nodes[0].body][c.nodes[0].vertex], x.bodies[c.nodes[1].body][c.nodes[1].vertex],
          x.bodies[c.nodes[2].body][c.nodes[2].vertex], x.bodies[c.nodes[3].body][c.nodes[3].vertex]};
}

inline DistanceStencil classify(const ContactPair& c, const std::array<Vec3, 4>& x) {
  return c.edge_edge ? classify_edge_edge(x[0], x[1], x[2], x[3]) : classify_point_triangle(x[0], x[1], x[2], x[3]);
}

/// Unsigned distance of a pair (exact, not the squared-stencil approximation for
/// nearly parallel edges).
inline double pair_distance(const ContactPair& c, const std::array<Vec3, 4>& x) {
  return c.edge_edge ? segment_segment_distance(x[0], x[1], x[2], x[3])
                     : point_triangle_distance(x[0], x[1], x[2], x[3]);
}

/// Pairs within `dhat`, i.e. those with a nonzero barrier.
inline std::vector<ContactPair> active_pairs(const ContactTopology& topo, const Configuration& x, double dhat) {
  std::vector<ContactPair> out;
  topo.for_each_candidate(x, nullptr, dhat, [&](const ContactPair& c) {
    const auto p = pair_positions(c, x);
    if (stencil_squared_distance(classify(c, p), p) < dhat * dhat) out.push_back(c);
  });
  return out;
}

/// Minimum primitive distance among pairs closer than `cutoff` (cutoff if none).
inline double min_distance(const ContactTopology& topo, const Configuration& x, double cutoff) {
  double best = cutoff;
  topo.for_each_candidate(x, nullptr, cutoff, [&](const ContactPair& c) {
    best = std::min(best, pair_distance(c, pair_positions(c, x)));
  });
  return best;
}

/// Earliest time of impact in [0, 1] along the straight-line motion start -> end
/// (kNoImpact when none).
inline double earliest_impact(const ContactTopology& topo, const Configuration& start, const Configuration& end) {
  double toi = kNoImpact;
  topo.for_each_candidate(start, &end, 0.0, [&](const ContactPair& c) {
    const auto p = pair_positions(c, start);
    const auto q = pair_positions(c, end);
    const double t = c.edge_edge ? edge_edge_toi(p[0], p[1], p[2], p[3], q[0] - p[0], q[1] - p[1], q[2] - p[2],
                                                 q[3] - p[3])
                                 : point_triangle_toi(p[0], p[1], p[2], p[3], q[0] - p[0], q[1] - p[1],
                                                      q[2] - p[2], q[3] - p[3]);
    toi = std::min(toi, t);
  });
  return toi;
}

/// Largest safe fraction of a per-vertex displacement: ccd_safety times the
/// earliest impact, capped at 1.
inline double ccd_max_step(const SimState& s, const Configuration& direction, double ccd_safety,
                           double rigid_contact_area = 1e-5) {
  const ContactTopology topo(s, rigid_contact_area);
  const Configuration start = configuration_of(s);
  Configuration end = start;
  for (std::size_t b = 0; b < end.bodies.size(); ++b)
    for (std::size_t i = 0; i < end.bodies[b].size(); ++i) end.bodies[b][i] += direction.bodies[b][i];
  const double toi = earliest_impact(topo, start, end);
  return std::min(1.0, ccd_safety * toi);
}

/// Total barrier energy with its gradient over every body vertex coordinate
/// (per body, 3 entries per vertex).
struct BarrierTotal {
  double energy = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> gradient;
};

inline BarrierTotal barrier_energy(const SimState& s, double dhat, double kappa, double rigid_contact_area = 1e-5) {
  const ContactTopology topo(s, rigid_contact_area);
  const Configuration x = configuration_of(s);
  BarrierTotal out;
  for (const auto& b : x.bodies) out.gradient.push_back(Eigen::VectorXd::Zero(3 * b.size()));
  for (const auto& c : active_pairs(topo, x, dhat)) {
    const auto p = pair_positions(c, x);
    const PairBarrier r = pair_barrier_gradient(classify(c, p), p, c.weight, kappa, dhat);
    out.energy += r.energy;
    out.min_distance = std::min(out.min_distance, std::sqrt(r.d_sq));
    for (int k = 0; k < 4; ++k)
      out.gradient[c.nodes[k].body].segment<3>(3 * c.nodes[k].vertex) += r.gradient.segment<3>(3 * k);
  }
  return out;
}

}  // namespace vitac
