#pragma once

#include "vitac/fem/contact.hpp"

#include <Eigen/SparseCholesky>

#include <functional>
#include <unordered_map>

namespace vitac {

struct SolverConfig {
  double barrier_stiffness = 1e4;      // Pa, initial value of the adaptive stiffness
  double barrier_distance = 1e-4;      // m
  double newton_tol = 1e-6;            // m, inf-norm of the Newton direction
  int max_newton_iters = 80;
  double ccd_safety = 0.9;
  double dt = 0.1;                     // s
  double max_barrier_stiffness = 1e9;  // Pa
  double rigid_contact_area = 1e-5;    // m^2, barrier weight of rigid-rigid pairs
};

inline void validate(const SolverConfig& c) {
  if (!(c.barrier_distance > 0.0)) throw Error("config-invalid", "barrier_distance must be > 0");
  if (!(c.barrier_stiffness > 0.0)) throw Error("config-invalid", "barrier_stiffness must be > 0");
  if (!(c.ccd_safety > 0.0 && c.ccd_safety < 1.0)) throw Error("config-invalid", "ccd_safety must lie in (0, 1)");
  if (!(c.dt > 0.0)) throw Error("config-invalid", "dt must be > 0");
  if (!(c.newton_tol > 0.0)) throw Error("config-invalid", "newton_tol must be > 0");
  if (c.max_newton_iters < 1) throw Error("config-invalid", "max_newton_iters must be >= 1");
}

/// Where every body is headed this substep. Constrained gel entries are the
/// Dirichlet targets; free entries and dynamic rigid translations are the
/// predictor the proximity term pulls toward. Rigid rotations are prescribed.
struct SolveRequest {
  std::vector<std::vector<Vec3>> gel_predictor;
  std::vector<RigidTransform> rigid_predictor;
};

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;  // inf-norm of the last Newton direction
  double energy = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();
  double kappa = 0.0;
  bool partial_predictor = false;
};

/// Iteration 0 is the admissible starting point (the predictor, possibly
/// shortened); later iterations are accepted Newton steps.
struct AcceptedIterate {
  int iteration;
  double energy;       // total potential at the accepted point
  double prev_energy;  // at the previous iterate, same stiffness
  double alpha;
  const Configuration& positions;
};

class QuasiStaticSolver {
 public:
  using Observer = std::function<void(const AcceptedIterate&)>;

  QuasiStaticSolver(SolverConfig config, MaterialParams material) : cfg_(config), mat_(material) {
    validate(cfg_);
    validate(mat_);
    lame_ = lame_parameters(mat_);
  }

  const SolverConfig& config() const { return cfg_; }
  const MaterialParams& material() const { return mat_; }

  SolveStats solve(SimState& state, const SolveRequest& req, const Observer& on_accept = {}) {
    prepare(state);
    if (req.gel_predictor.size() != state.gels.size() || req.rigid_predictor.size() != state.rigids.size())
      throw Error("solver-input", "predictor does not match the state");

    const Configuration current = configuration_of(state);
    base_ = current;
    pred_rot_.clear();
    pred_trans_.clear();
    for (std::size_t r = 0; r < state.rigids.size(); ++r) {
      pred_rot_.push_back(req.rigid_predictor[r].rotation);
      pred_trans_.push_back(req.rigid_predictor[r].translation);
    }
    // Fixed parts: Dirichlet targets and kinematic rigid bodies.
    for (std::size_t g = 0; g < state.gels.size(); ++g) {
      const auto& model = *state.gels[g].model;
      for (int v = 0; v < model.mesh->num_vertices(); ++v)
        if (model.constrained[v]) base_.bodies[g][v] = req.gel_predictor[g][v];
    }
    const int ng = static_cast<int>(state.gels.size());
    for (std::size_t r = 0; r < state.rigids.size(); ++r) {
      if (!state.rigids[r].dynamic) base_.bodies[ng + r] = transformed(state.rigids[r], req.rigid_predictor[r]);
    }

    // Predictor target as a DOF vector.
    Eigen::VectorXd y_pred(ndof_), y_cur(ndof_);
    for (std::size_t g = 0; g < state.gels.size(); ++g) {
      for (std::size_t v = 0; v < gel_dof_[g].size(); ++v) {
        if (gel_dof_[g][v] < 0) continue;
        y_pred.segment<3>(3 * gel_dof_[g][v]) = req.gel_predictor[g][v];
        y_cur.segment<3>(3 * gel_dof_[g][v]) = state.gels[g].x[v];
      }
    }
    for (std::size_t r = 0; r < state.rigids.size(); ++r) {
      if (rigid_dof_[r] < 0) continue;
      y_pred.segment<3>(3 * rigid_dof_[r]) = req.rigid_predictor[r].translation;
      y_cur.segment<3>(3 * rigid_dof_[r]) = state.rigids[r].pose.translation;
    }
    y_tilde_ = y_pred;

    SolveStats stats;
    Eigen::VectorXd y = y_pred;
    Configuration x = assemble_configuration(state, y);
    // CCD can miss a predictor that ends exactly touching, so also demand a
    // positive gap at the end of the motion.
    const double dhat = cfg_.barrier_distance;
    const double gap = std::min(1e-3 * dhat, 0.5 * min_distance(topo_, current, dhat));
    const auto admissible = [&](const Configuration& c) {
      return min_jacobian(state, c) > 0.0 && earliest_impact(topo_, current, c) == kNoImpact &&
             min_distance(topo_, c, dhat) > gap;
    };
    double start_alpha = 1.0;
    if (!admissible(x)) {
      stats.partial_predictor = true;
      const double toi = std::min(1.0, earliest_impact(topo_, current, x));
      bool ok = false;
      for (double a : {cfg_.ccd_safety * toi, 0.0}) {
        y = y_cur + a * (y_pred - y_cur);
        x = assemble_configuration(state, y);
        if (admissible(x)) {
          start_alpha = a;
          ok = true;
          break;
        }
      }
      if (!ok) throw SolverError("solver-blocked", "boundary motion cannot be applied without intersection");
    }

    double& kappa = state.kappa;
    if (!(kappa > 0.0)) kappa = cfg_.barrier_stiffness;
    Eigen::VectorXd grad(ndof_);
    Eigen::VectorXd p;
    const auto positive = [&] { return ldlt_.info() == Eigen::Success && (ldlt_.vectorD().array() > 0.0).all(); };
    double last_residual = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
      // Projected Newton stalls into linear convergence near the solution;
      // switch to the exact Hessian there while it stays definite.
      exact_hessian_ = last_residual < 100.0 * cfg_.newton_tol;
      Eval e = evaluate(state, x, kappa, true, &grad);
      ldlt_.factorize(hessian_);
      if (exact_hessian_ && !positive()) {
        exact_hessian_ = false;
        e = evaluate(state, x, kappa, true, &grad);
        ldlt_.factorize(hessian_);
      }
      stats.min_distance = e.min_distance;
      if (it == 0 && on_accept) on_accept(AcceptedIterate{0, e.energy, e.energy, start_alpha, x});
      double reg = 0.0;
      while (!positive()) {
        reg = reg == 0.0 ? 1e-8 * std::max(1.0, hessian_.diagonal().cwiseAbs().maxCoeff()) : reg * 10.0;
        Eigen::SparseMatrix<double> h = hessian_;
        for (int i = 0; i < h.rows(); ++i) h.coeffRef(i, i) += reg;
        ldlt_.factorize(h);
        if (reg > 1e12) throw SolverError("solver-nonconvergence", "Newton system is singular");
      }
      p = ldlt_.solve(-grad);
      stats.residual = p.size() ? p.lpNorm<Eigen::Infinity>() : 0.0;
      last_residual = stats.residual;
      stats.iterations = it;
      stats.energy = e.energy;
      if (stats.residual < cfg_.newton_tol) break;
      if (it >= cfg_.max_newton_iters)
        throw SolverError("solver-nonconvergence",
                          "Newton did not converge in " + std::to_string(cfg_.max_newton_iters) + " iterations",
                          stats.residual);

      const Configuration x_full = assemble_configuration(state, y + p);
      double alpha = std::min(1.0, cfg_.ccd_safety * earliest_impact(topo_, x, x_full));
      bool accepted = false;
      Eigen::VectorXd y_new;
      Configuration x_new;
      double e_new = 0.0;
      for (int ls = 0; ls < 64 && alpha > 0.0; ++ls, alpha *= 0.5) {
        y_new = y + alpha * p;
        x_new = assemble_configuration(state, y_new);
        if (!(min_jacobian(state, x_new) > 0.0)) continue;
        e_new = evaluate(state, x_new, kappa, false, nullptr).energy;
        if (e_new <= e.energy) {
          accepted = true;
          break;
        }
      }
      if (!accepted)
        throw SolverError("solver-nonconvergence", "line search failed to decrease the potential", stats.residual);
      y = std::move(y_new);
      x = std::move(x_new);
      if (on_accept) on_accept(AcceptedIterate{it + 1, e_new, e.energy, alpha, x});
      const double dmin = min_distance(topo_, x, cfg_.barrier_distance);
      if (dmin < 0.1 * cfg_.barrier_distance && kappa < cfg_.max_barrier_stiffness)
        kappa = std::min(2.0 * kappa, cfg_.max_barrier_stiffness);
    }

    for (std::size_t g = 0; g < state.gels.size(); ++g) state.gels[g].x = x.bodies[g];
    for (std::size_t r = 0; r < state.rigids.size(); ++r) {
      auto& body = state.rigids[r];
      body.pose.rotation = pred_rot_[r];
      body.pose.translation = rigid_dof_[r] >= 0 ? Vec3(y.segment<3>(3 * rigid_dof_[r])) : pred_trans_[r];
    }
    stats.kappa = kappa;
    return stats;
  }

  /// Net contact force on rigid body `r` (sum of -dE_contact/dx over its
  /// vertices).
  Vec3 rigid_contact_force(const SimState& state, int r) {
    prepare(state);
    const Configuration x = configuration_of(state);
    const int body = static_cast<int>(state.gels.size()) + r;
    Vec3 f = Vec3::Zero();
    for (const auto& c : active_pairs(topo_, x, cfg_.barrier_distance)) {
      const auto pos = pair_positions(c, x);
      const PairBarrier pb = pair_barrier_gradient(classify(c, pos), pos, c.weight, state.kappa, cfg_.barrier_distance);
      for (int k = 0; k < 4; ++k)
        if (c.nodes[k].body == body) f -= pb.gradient.segment<3>(3 * k);
    }
    return f;
  }

  /// Force the shell must supply to hold the constrained vertices of gel `g`
  /// (sum of -dE/dx over the constrained set), elastic plus contact.
  Vec3 reaction_force(const SimState& state, int g) {
    prepare(state);
    const Configuration x = configuration_of(state);
    const auto& body = state.gels[g];
    const auto& model = *body.model;
    Vec3 f = Vec3::Zero();
    for (int t = 0; t < model.mesh->num_tets(); ++t) {
      const auto& tet = model.mesh->tets[t];
      const TetEval r = tet_elastic(model.elements[t], {body.x[tet[0]], body.x[tet[1]], body.x[tet[2]], body.x[tet[3]]},
                                    lame_, false);
      for (int a = 0; a < 4; ++a)
        if (model.constrained[tet[a]]) f -= r.gradient.segment<3>(3 * a);
    }
    for (const auto& c : active_pairs(topo_, x, cfg_.barrier_distance)) {
      const auto pos = pair_positions(c, x);
      const PairBarrier r = pair_barrier_gradient(classify(c, pos), pos, c.weight, state.kappa, cfg_.barrier_distance);
      for (int k = 0; k < 4; ++k)
        if (c.nodes[k].body == g && model.constrained[c.nodes[k].vertex]) f -= r.gradient.segment<3>(3 * k);
    }
    return f;
  }

  /// Total potential (elastic + contact + tether) of a state with the proximity
  /// term anchored at the state itself.
  double potential(const SimState& state) {
    prepare(state);
    base_ = configuration_of(state);
    pred_rot_.clear();
    pred_trans_.clear();
    for (const auto& r : state.rigids) {
      pred_rot_.push_back(r.pose.rotation);
      pred_trans_.push_back(r.pose.translation);
    }
    y_tilde_ = Eigen::VectorXd::Zero(ndof_);
    for (std::size_t g = 0; g < state.gels.size(); ++g)
      for (std::size_t v = 0; v < gel_dof_[g].size(); ++v)
        if (gel_dof_[g][v] >= 0) y_tilde_.segment<3>(3 * gel_dof_[g][v]) = state.gels[g].x[v];
    for (std::size_t r = 0; r < state.rigids.size(); ++r)
      if (rigid_dof_[r] >= 0) y_tilde_.segment<3>(3 * rigid_dof_[r]) = state.rigids[r].pose.translation;
    return evaluate(state, base_, state.kappa, false, nullptr).energy;
  }

  const ContactTopology& topology(const SimState& state) {
    prepare(state);
    return topo_;
  }

 private:
  struct Eval {
    double energy = 0.0;
    double min_distance = std::numeric_limits<double>::infinity();
  };

  static std::vector<Vec3> transformed(const RigidBody& body, const RigidTransform& pose) {
    std::vector<Vec3> out;
    out.reserve(body.shape->vertices.size());
    for (const auto& v : body.shape->vertices) out.push_back(pose.apply(v));
    return out;
  }

  // Structure key: the gel models and rigid shapes/dynamic flags in order.
  std::vector<const void*> structure_key(const SimState& s) const {
    std::vector<const void*> key;
    for (const auto& g : s.gels) key.push_back(g.model.get());
    for (const auto& r : s.rigids) {
      key.push_back(r.shape.get());
      key.push_back(r.dynamic ? &cfg_ : nullptr);
    }
    return key;
  }

  void prepare(const SimState& s) {
    auto key = structure_key(s);
    if (prepared_ && key == key_) return;
    key_ = std::move(key);
    prepared_ = true;
    topo_ = ContactTopology(s, cfg_.rigid_contact_area);

    int nb = 0;
    gel_dof_.assign(s.gels.size(), {});
    for (std::size_t g = 0; g < s.gels.size(); ++g) {
      const auto& model = *s.gels[g].model;
      gel_dof_[g].assign(model.mesh->num_vertices(), -1);
      for (int v = 0; v < model.mesh->num_vertices(); ++v)
        if (!model.constrained[v]) gel_dof_[g][v] = nb++;
    }
    rigid_dof_.assign(s.rigids.size(), -1);
    for (std::size_t r = 0; r < s.rigids.size(); ++r)
      if (s.rigids[r].dynamic) rigid_dof_[r] = nb++;
    nblocks_ = nb;
    ndof_ = 3 * nb;

    std::vector<std::pair<int, int>> blocks;
    for (int b = 0; b < nb; ++b) blocks.emplace_back(b, b);
    for (std::size_t g = 0; g < s.gels.size(); ++g) {
      for (const auto& t : s.gels[g].model->mesh->tets)
        for (int a : t)
          for (int b : t)
            if (gel_dof_[g][a] >= 0 && gel_dof_[g][b] >= 0) blocks.emplace_back(gel_dof_[g][a], gel_dof_[g][b]);
    }
    for (std::size_t r = 0; r < s.rigids.size(); ++r) {
      if (rigid_dof_[r] < 0) continue;
      for (std::size_t g = 0; g < s.gels.size(); ++g)
        for (int v : s.gels[g].model->surface_vertices)
          if (gel_dof_[g][v] >= 0) {
            blocks.emplace_back(rigid_dof_[r], gel_dof_[g][v]);
            blocks.emplace_back(gel_dof_[g][v], rigid_dof_[r]);
          }
      for (std::size_t q = 0; q < s.rigids.size(); ++q)
        if (rigid_dof_[q] >= 0) blocks.emplace_back(rigid_dof_[r], rigid_dof_[q]);
    }
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(blocks.size() * 9);
    for (const auto& [bi, bj] : blocks)
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) trips.emplace_back(3 * bi + r, 3 * bj + k, 0.0);
    hessian_.resize(ndof_, ndof_);
    hessian_.setFromTriplets(trips.begin(), trips.end());
    hessian_.makeCompressed();

    slots_.clear();
    slot_list_.clear();
    slots_.reserve(blocks.size());
    const int* outer = hessian_.outerIndexPtr();
    const int* inner = hessian_.innerIndexPtr();
    for (const auto& [bi, bj] : blocks) {
      std::array<int, 3> s3;
      for (int k = 0; k < 3; ++k) {
        const int col = 3 * bj + k;
        const int* pos = std::lower_bound(inner + outer[col], inner + outer[col + 1], 3 * bi);
        s3[k] = static_cast<int>(pos - inner);
      }
      slots_.emplace(block_key(bi, bj), s3);
    }
    tet_slots_.assign(s.gels.size(), {});
    for (std::size_t g = 0; g < s.gels.size(); ++g) {
      for (const auto& t : s.gels[g].model->mesh->tets) {
        std::array<int, 16> ts;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            const int da = gel_dof_[g][t[a]], db = gel_dof_[g][t[b]];
            ts[4 * a + b] = (da >= 0 && db >= 0) ? static_cast<int>(slot_index(da, db)) : -1;
          }
        tet_slots_[g].push_back(ts);
      }
    }
    ldlt_.analyzePattern(hessian_);
  }

  static long long block_key(int bi, int bj) { return (static_cast<long long>(bi) << 32) | static_cast<unsigned>(bj); }

  // Index into slot_list_ for a block, creating the flat list lazily.
  std::size_t slot_index(int bi, int bj) {
    const auto it = slots_.find(block_key(bi, bj));
    slot_list_.push_back(it->second);
    return slot_list_.size() - 1;
  }

  void add_block(const std::array<int, 3>& s3, const Eigen::Ref<const Mat3>& m) {
    double* v = hessian_.valuePtr();
    for (int k = 0; k < 3; ++k)
      for (int r = 0; r < 3; ++r) v[s3[k] + r] += m(r, k);
  }

  Configuration assemble_configuration(const SimState& s, const Eigen::VectorXd& y) const {
    Configuration x = base_;
    const int ng = static_cast<int>(s.gels.size());
    for (std::size_t g = 0; g < s.gels.size(); ++g)
      for (std::size_t v = 0; v < gel_dof_[g].size(); ++v)
        if (gel_dof_[g][v] >= 0) x.bodies[g][v] = y.segment<3>(3 * gel_dof_[g][v]);
    for (std::size_t r = 0; r < s.rigids.size(); ++r) {
      if (rigid_dof_[r] < 0) continue;
      const RigidTransform pose{pred_rot_[r], y.segment<3>(3 * rigid_dof_[r])};
      x.bodies[ng + r] = transformed(s.rigids[r], pose);
    }
    return x;
  }

  int node_dof(const SimState& s, const NodeRef& n) const {
    const int ng = static_cast<int>(s.gels.size());
    return n.body < ng ? gel_dof_[n.body][n.vertex] : rigid_dof_[n.body - ng];
  }

  Eval evaluate(const SimState& s, const Configuration& x, double kappa, bool derivatives, Eigen::VectorXd* grad) {
    Eval out;
    if (derivatives) {
      grad->setZero(ndof_);
      std::fill(hessian_.valuePtr(), hessian_.valuePtr() + hessian_.nonZeros(), 0.0);
    }
    const double inv_dt2 = 1.0 / (cfg_.dt * cfg_.dt);
    const int ng = static_cast<int>(s.gels.size());

    for (int g = 0; g < ng; ++g) {
      const auto& model = *s.gels[g].model;
      const auto& xg = x.bodies[g];
      for (int t = 0; t < model.mesh->num_tets(); ++t) {
        const auto& tet = model.mesh->tets[t];
        const TetEval r = tet_elastic(model.elements[t], {xg[tet[0]], xg[tet[1]], xg[tet[2]], xg[tet[3]]}, lame_,
                                      derivatives, !exact_hessian_);
        out.energy += r.energy;
        if (!derivatives) continue;
        for (int a = 0; a < 4; ++a) {
          const int da = gel_dof_[g][tet[a]];
          if (da < 0) continue;
          grad->segment<3>(3 * da) += r.gradient.segment<3>(3 * a);
          for (int b = 0; b < 4; ++b) {
            const int slot = tet_slots_[g][t][4 * a + b];
            if (slot >= 0) add_block(slot_list_[slot], r.hessian.block<3, 3>(3 * a, 3 * b));
          }
        }
      }
      // Proximity term toward the transported predictor.
      for (int v = 0; v < model.mesh->num_vertices(); ++v) {
        const int d = gel_dof_[g][v];
        if (d < 0) continue;
        const double k = mat_.damping * mat_.density * model.vertex_volume[v] * inv_dt2;
        const Vec3 diff = xg[v] - y_tilde_.segment<3>(3 * d);
        out.energy += 0.5 * k * diff.squaredNorm();
        if (derivatives) {
          grad->segment<3>(3 * d) += k * diff;
          add_block(slots_.at(block_key(d, d)), k * Mat3::Identity());
        }
      }
    }
    for (std::size_t r = 0; r < s.rigids.size(); ++r) {
      const int d = rigid_dof_[r];
      if (d < 0) continue;
      const auto& body = s.rigids[r];
      const Vec3 t = x.bodies[ng + r].empty() ? pred_trans_[r] : rigid_translation(s, x, r);
      const double kp = mat_.damping * body.mass * inv_dt2;
      const Vec3 dp = t - y_tilde_.segment<3>(3 * d), da = t - body.anchor;
      out.energy += 0.5 * kp * dp.squaredNorm() + 0.5 * body.tether_stiffness * da.squaredNorm();
      if (derivatives) {
        grad->segment<3>(3 * d) += kp * dp + body.tether_stiffness * da;
        add_block(slots_.at(block_key(d, d)), (kp + body.tether_stiffness) * Mat3::Identity());
      }
    }

    const double dhat = cfg_.barrier_distance;
    topo_.for_each_candidate(x, nullptr, dhat, [&](const ContactPair& c) {
      const auto pos = pair_positions(c, x);
      const DistanceStencil st = classify(c, pos);
      const double d2 = stencil_squared_distance(st, pos);
      if (d2 >= dhat * dhat) return;
      out.min_distance = std::min(out.min_distance, std::sqrt(d2));
      if (!derivatives) {
        out.energy += kappa * c.weight * dhat * barrier(d2, dhat);
        return;
      }
      const PairBarrier pb = pair_barrier(st, pos, c.weight, kappa, dhat, true, !exact_hessian_);
      out.energy += pb.energy;
      std::array<int, 4> dof;
      for (int k = 0; k < 4; ++k) dof[k] = node_dof(s, c.nodes[k]);
      for (int a = 0; a < 4; ++a) {
        if (dof[a] < 0) continue;
        grad->segment<3>(3 * dof[a]) += pb.gradient.segment<3>(3 * a);
        for (int b = 0; b < 4; ++b)
          if (dof[b] >= 0) add_block(slots_.at(block_key(dof[a], dof[b])), pb.hessian.block<3, 3>(3 * a, 3 * b));
      }
    });
    return out;
  }

  Vec3 rigid_translation(const SimState& s, const Configuration& x, std::size_t r) const {
    // Recover T from the first vertex: x0 = R * v0 + T.
    const int ng = static_cast<int>(s.gels.size());
    return x.bodies[ng + r][0] - pred_rot_[r] * s.rigids[r].shape->vertices[0];
  }

  SolverConfig cfg_;
  MaterialParams mat_;
  Lame lame_{};

  bool prepared_ = false;
  std::vector<const void*> key_;
  ContactTopology topo_;
  std::vector<std::vector<int>> gel_dof_;
  std::vector<int> rigid_dof_;
  int nblocks_ = 0;
  int ndof_ = 0;
  Eigen::SparseMatrix<double> hessian_;
  std::unordered_map<long long, std::array<int, 3>> slots_;
  std::vector<std::array<int, 3>> slot_list_;
  std::vector<std::vector<std::array<int, 16>>> tet_slots_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool exact_hessian_ = false;

  Configuration base_;
  std::vector<Mat3> pred_rot_;
  std::vector<Vec3> pred_trans_;
  Eigen::VectorXd y_tilde_;
};

/// Best-fit rigid motion mapping `from` onto `to` (least squares).
inline RigidTransform fit_rigid_motion(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  Eigen::Matrix3Xd a(3, from.size()), b(3, to.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    a.col(i) = from[i];
    b.col(i) = to[i];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, false);
  return {t.block<3, 3>(0, 0), t.block<3, 1>(0, 3)};
}

/// Single solve with Dirichlet targets for each gel's constrained set (in
/// constrained_set order). Free vertices are predicted by the best-fit rigid
/// motion of their constrained set; rigid bodies stay put.
inline SimState solve_quasi_static(SimState state, const std::vector<std::vector<Vec3>>& dirichlet_targets,
                                   const SolverConfig& config, const MaterialParams& material,
                                   SolveStats* stats = nullptr) {
  SolveRequest req;
  for (std::size_t g = 0; g < state.gels.size(); ++g) {
    const auto& body = state.gels[g];
    const auto& cs = body.model->mesh->constrained_set;
    std::vector<Vec3> from;
    for (int v : cs) from.push_back(body.x[v]);
    const RigidTransform m = cs.size() >= 3 ? fit_rigid_motion(from, dirichlet_targets[g])
                                            : RigidTransform{Mat3::Identity(), dirichlet_targets[g].empty()
                                                                                   ? Vec3::Zero()
                                                                                   : Vec3(dirichlet_targets[g][0] - from[0])};
    std::vector<Vec3> pred(body.x.size());
    for (std::size_t v = 0; v < pred.size(); ++v) pred[v] = m.apply(body.x[v]);
    for (std::size_t i = 0; i < cs.size(); ++i) pred[cs[i]] = dirichlet_targets[g][i];
    req.gel_predictor.push_back(std::move(pred));
  }
  for (const auto& r : state.rigids) req.rigid_predictor.push_back(r.pose);
  QuasiStaticSolver solver(config, material);
  const SolveStats s = solver.solve(state, req);
  if (stats) *stats = s;
  return state;
}

}  // namespace vitac
