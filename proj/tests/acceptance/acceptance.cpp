// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Run with a criterion number (1-9) to run only that one.

#include "vitac/depth/render.hpp"
#include "vitac/service/episode_log.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

using namespace vitac;

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
  bool ok = true;
  std::string first_failure;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) first_failure = what;
    ok = ok && cond;
  }
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // s, 0 for none
  std::function<std::string(Check&)> run;
};

nlohmann::json quiet(const std::string& task) {
  return {{"task", task},
          {"randomization", {{"xy", 0.0}, {"theta", 0.0}, {"z", 0.0}}},
          {"sensor", {{"pixel_sigma", 0.0}, {"dropout_prob", 0.0}}}};
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Substep counts by counting: the smallest n with n * cap >= |delta|, with
// the same relative round-off allowance as the library.

int count_substeps(std::initializer_list<std::pair<long double, long double>> deltas_caps) {
  int n = 1;
  for (auto [delta, cap] : deltas_caps) {
    const long double need = std::fabs(delta) * (1.0L - 1e-9L);
    while (n * cap < need) ++n;
  }
  return n;
}

std::string kinematics_oracle(Check& c) {
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> u(-1.0, 1.0), theta(-deg_to_rad(15), deg_to_rad(15));
  std::uniform_int_distribution<int> grid(-25, 25), pick(0, 3);
  const MotionLimits lim;
  const double dt = lim.dt;
  int max_n = 0;
  for (int i = 0; i < 10000; ++i) {
    const Task task = static_cast<Task>(i % 3);
    ActionCommand a{task, {}};
    // A quarter of the actions sit on multiples of a linear cap, where
    // ceil() is most fragile; some exceed the action bound to get large counts.
    for (int k = 0; k < a.arity(); ++k) {
      switch (pick(rng)) {
        case 0: a.values[k] = grid(rng) * (task == Task::fusion ? 0.5 : 0.2); break;
        case 1: a.values[k] = 5.0 * u(rng); break;
        default: a.values[k] = u(rng);
      }
    }
    const Increment inc = to_si(a);
    const double th = theta(rng);
    Vec3 disp;
    int n = 0, expect = 0;
    double v_cap = 0.0, w_cap = lim.omega_max;
    switch (task) {
      case Task::peg: {
        const Vec2 g = local_to_global(inc.dx, inc.dy, th);
        disp = {g.x(), g.y(), 0.0};
        n = substep_count_peg(g.x(), g.y(), inc.dtheta, lim);
        v_cap = lim.v_max;
        expect = count_substeps({{g.x(), v_cap * dt}, {g.y(), v_cap * dt}, {inc.dtheta, w_cap * dt}});
        break;
      }
      case Task::lock:
        disp = {inc.dx, inc.dy, inc.dz};
        n = substep_count_lock(inc.dx, inc.dy, inc.dz, dt);
        v_cap = 2e-3;
        expect = count_substeps({{inc.dx, v_cap * dt}, {inc.dy, v_cap * dt}, {inc.dz, v_cap * dt}});
        break;
      case Task::fusion: {
        const Vec2 g = local_to_global(inc.dx, inc.dy, th);
        disp = {g.x(), g.y(), inc.dz};
        n = substep_count_fusion(g.x(), g.y(), inc.dz, inc.dtheta, dt);
        v_cap = 5e-3;
        expect = count_substeps(
            {{g.x(), v_cap * dt}, {g.y(), v_cap * dt}, {inc.dz, v_cap * dt}, {inc.dtheta, w_cap * dt}});
        break;
      }
    }
    max_n = std::max(max_n, n);
    c.expect(n == expect, fmt("action %d (%s): count %d, oracle %d", i, to_string(task).data(), n, expect));
    const SubstepVelocity sv = substep_velocities(disp, inc.dtheta, n, dt);
    for (int k = 0; k < 3; ++k) {
      const double direct = static_cast<double>(static_cast<long double>(disp[k]) / (n * static_cast<long double>(dt)));
      c.expect(std::abs(sv.linear[k] - direct) <= 1e-12 * std::abs(direct),
               fmt("action %d: velocity %d off by %.3g", i, k, sv.linear[k] - direct));
      c.expect(std::abs(sv.linear[k]) * dt <= v_cap * dt * (1 + 1e-9), fmt("action %d: linear cap exceeded", i));
    }
    const double w_direct = static_cast<double>(static_cast<long double>(inc.dtheta) / (n * static_cast<long double>(dt)));
    c.expect(std::abs(sv.angular - w_direct) <= 1e-12 * std::abs(w_direct), fmt("action %d: angular velocity", i));
    if (task != Task::lock)
      c.expect(std::abs(sv.angular) * dt <= w_cap * dt * (1 + 1e-9), fmt("action %d: angular cap exceeded", i));
  }
  return fmt("10000 actions, counts up to %d", max_n);
}

// ---------------------------------------------------------------------------

std::string rigid_motion(Check& c) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> p(-0.02, 0.02), v(-5e-3, 5e-3), w(-2.0, 2.0);
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Vec3> pts(20);
    for (auto& x : pts) x = {p(rng), p(rng), p(rng)};
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized(), pivot(p(rng), p(rng), p(rng)), lin(v(rng), v(rng), v(rng));
    const double omega = w(rng), dt = 0.1;
    std::vector<Vec3> moved;
    for (const auto& x : pts) {
      const BoundaryMotion m = boundary_vertex_motion(x, lin, omega, axis, pivot, dt);
      c.expect((m.velocity - (m.position - x) / dt).norm() <= 1e-12, "velocity is not the displacement rate");
      moved.push_back(m.position);
    }
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        worst = std::max(worst, std::abs((moved[i] - moved[j]).norm() - (pts[i] - pts[j]).norm()));
  }
  c.expect(worst <= 1e-10, fmt("pairwise distance changed by %.3g", worst));
  const double dt = 0.1;
  const BoundaryMotion q = boundary_vertex_motion(Vec3(1, 0, 0), Vec3::Zero(), (kPi / 2) / dt, Vec3::UnitZ(), Vec3::Zero(), dt);
  c.expect(q.position == Vec3(0, 1, 0), "quarter turn position");
  c.expect(q.velocity == Vec3(-1, 1, 0) / dt, "quarter turn velocity");
  return fmt("1000 motions x 190 pairs, worst %.2g m; quarter turn exact", worst);
}

// ---------------------------------------------------------------------------

std::shared_ptr<const SurfaceMesh> plate(double top) {
  const double h = 0.05;
  return std::make_shared<const SurfaceMesh>(make_prism({{-h, -h}, {h, -h}, {h, h}, {-h, h}}, top - 0.004, top));
}

std::string fem_gradient(Check& c) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
  std::normal_distribution<double> n;
  const MaterialParams mat;
  const double dhat = 1e-4, kappa = 1e4, area = 1e-5;
  double worst_elastic = 0.0, worst_contact = 0.0;
  int min_active = std::numeric_limits<int>::max();
  for (int m = 0; m < 20; ++m) {
    GelSpec spec;
    spec.base_x = 0.01 + 0.02 * unit(rng);
    spec.base_y = 0.01 + 0.02 * unit(rng);
    spec.thickness = 0.002 + 0.004 * unit(rng);
    spec.subdivisions = {2 + static_cast<int>(5 * unit(rng)), 2 + static_cast<int>(4 * unit(rng)),
                         1 + static_cast<int>(3 * unit(rng))};
    const auto mesh = std::make_shared<const TetMesh>(generate_gel_mesh(spec));
    const double cell = std::min(spec.base_x / spec.subdivisions[0], spec.base_y / spec.subdivisions[1]);
    // In-plane stretch and shear plus noise; z noise stays well inside dhat so
    // the sensing face keeps a positive gap to the plate below it.
    Mat3 f = Mat3::Identity();
    f(0, 0) += 0.1 * u(rng);
    f(1, 1) += 0.1 * u(rng);
    f(0, 1) = 0.1 * u(rng);
    std::vector<Vec3> x = mesh->vertices;
    for (auto& v : x) v = f * v + Vec3(0.02 * cell * u(rng), 0.02 * cell * u(rng), 0.1 * dhat * u(rng));

    const auto el = elastic_energy(*mesh, x, mat, false);
    SimState s;
    s.gels.push_back({GelModel::build(mesh), x});
    const double gap = (0.3 + 0.4 * unit(rng)) * dhat;
    s.rigids.push_back({plate(-spec.thickness / 2 - 0.1 * dhat - gap), RigidTransform{}, false});
    const BarrierTotal bar = barrier_energy(s, dhat, kappa, area);
    const ContactTopology topo(s, area);
    const int active = static_cast<int>(active_pairs(topo, configuration_of(s), dhat).size());
    min_active = std::min(min_active, active);
    c.expect(active > 0, fmt("mesh %d has no active contact pair", m));

    for (int trial = 0; trial < 3; ++trial) {
      std::vector<Vec3> dir(x.size());
      Eigen::VectorXd flat(3 * x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        dir[i] = Vec3(n(rng), n(rng), n(rng));
        flat.segment<3>(3 * i) = dir[i];
      }
      const auto shifted = [&](double h) {
        SimState t = s;
        for (std::size_t i = 0; i < x.size(); ++i) t.gels[0].x[i] += h * dir[i];
        return t;
      };
      const double he = 1e-6 * cell;
      const SimState ep = shifted(he), em = shifted(-he);
      const double fd_el =
          (elastic_energy(*mesh, ep.gels[0].x, mat, false).energy - elastic_energy(*mesh, em.gels[0].x, mat, false).energy) /
          (2 * he);
      const double an_el = el.gradient.dot(flat);
      worst_elastic = std::max(worst_elastic, std::abs(fd_el - an_el) / std::abs(an_el));

      const double hb = 1e-3 * dhat / flat.lpNorm<Eigen::Infinity>();
      const SimState bp = shifted(hb), bm = shifted(-hb);
      const double fd_total = (elastic_energy(*mesh, bp.gels[0].x, mat, false).energy +
                               barrier_energy(bp, dhat, kappa, area).energy -
                               elastic_energy(*mesh, bm.gels[0].x, mat, false).energy -
                               barrier_energy(bm, dhat, kappa, area).energy) /
                              (2 * hb);
      const double fd_bar = (barrier_energy(bp, dhat, kappa, area).energy - barrier_energy(bm, dhat, kappa, area).energy) / (2 * hb);
      const double an_bar = bar.gradient[0].dot(flat), an_total = an_el + an_bar;
      worst_contact = std::max({worst_contact, std::abs(fd_bar - an_bar) / std::abs(an_bar),
                                std::abs(fd_total - an_total) / std::abs(an_total)});
    }
  }
  c.expect(worst_elastic < 1e-4, fmt("elastic relative error %.3g", worst_elastic));
  c.expect(worst_contact < 1e-3, fmt("contact-active relative error %.3g", worst_contact));
  return fmt("20 meshes, elastic %.2g, contact-active %.2g (>= %d active pairs)", worst_elastic, worst_contact,
             min_active);
}

// ---------------------------------------------------------------------------

struct PenetrationStats {
  long states = 0;
  double min_distance = std::numeric_limits<double>::infinity();
  double min_jacobian = std::numeric_limits<double>::infinity();
};

// Checks one accepted configuration of `s`'s bodies.
void check_state(Check& c, PenetrationStats& st, const SimState& s, const Configuration& x, double rigid_area,
                 const std::string& where) {
  const ContactTopology topo(s, rigid_area);
  const double d = min_distance(topo, x, 1e-3), j = min_jacobian(s, x);
  ++st.states;
  st.min_distance = std::min(st.min_distance, d);
  st.min_jacobian = std::min(st.min_jacobian, j);
  c.expect(d > 0.0, where + fmt(": distance %.3g", d));
  c.expect(j > 0.0, where + fmt(": tet volume ratio %.3g", j));
}

std::shared_ptr<const SurfaceMesh> random_indenter(std::mt19937_64& rng, double top) {
  std::uniform_real_distribution<double> r(1.5e-3, 4e-3), phase(0.0, 2 * kPi);
  std::uniform_int_distribution<int> sides(3, 8);
  const int k = sides(rng);
  const double radius = r(rng), a0 = phase(rng);
  std::vector<Vec2> poly;
  for (int i = 0; i < k; ++i) poly.emplace_back(radius * std::cos(a0 + 2 * kPi * i / k), radius * std::sin(a0 + 2 * kPi * i / k));
  return std::make_shared<const SurfaceMesh>(make_prism(poly, top - 0.005, top));
}

std::string non_penetration(Check& c) {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> unit(0.0, 1.0), u(-1.0, 1.0);
  PenetrationStats st;
  int blocked = 0, episodes = 0;
  long tets_max = 0;

  // Press-and-slide episodes straight on the solver.
  const SolverConfig cfg;
  for (int e = 0; e < 40; ++e, ++episodes) {
    GelSpec spec;
    spec.subdivisions = {8 + static_cast<int>(5 * unit(rng)), 6 + static_cast<int>(4 * unit(rng)), 2 + static_cast<int>(2 * unit(rng))};
    const auto mesh = std::make_shared<const TetMesh>(generate_gel_mesh(spec));
    tets_max = std::max<long>(tets_max, mesh->num_tets());
    SimState s;
    s.gels.push_back({GelModel::build(mesh), mesh->vertices});
    const double face = -spec.thickness / 2, gap = (0.2 + 0.8 * unit(rng)) * cfg.barrier_distance;
    if (e % 2 == 0)
      s.rigids.push_back({plate(face - gap), RigidTransform{}, false});
    else
      s.rigids.push_back({random_indenter(rng, face - gap),
                          RigidTransform::from_axis_angle(Vec3::UnitZ(), 0.0, {4e-3 * u(rng), 4e-3 * u(rng), 0.0}), false});
    QuasiStaticSolver solver(cfg, MaterialParams{});
    const std::string where = fmt("press/slide episode %d", e);
    const auto observe = [&](const AcceptedIterate& a) { check_state(c, st, s, a.positions, cfg.rigid_contact_area, where); };
    const double depth = (e % 2 ? 0.3e-3 : 0.15e-3) + 0.4e-3 * unit(rng);
    const Vec3 slide(1.0e-3 * u(rng), 1.0e-3 * u(rng), 0.0);
    const double twist = deg_to_rad(3.0) * u(rng);
    const int press_steps = 4, slide_steps = 6;
    Vec3 shift = Vec3::Zero();
    double angle = 0.0;
    try {
      for (int k = 1; k <= press_steps + slide_steps; ++k) {
        if (k <= press_steps) {
          shift.z() = -(gap + depth) * k / press_steps;
        } else {
          shift.head<2>() = slide.head<2>() * double(k - press_steps) / slide_steps;
          angle = twist * (k - press_steps) / slide_steps;
        }
        const Mat3 r = axis_rotation(Vec3::UnitZ(), angle);
        SolveRequest req;
        std::vector<Vec3> pred = s.gels[0].x;
        for (int v : mesh->constrained_set) pred[v] = r * mesh->vertices[v] + shift;
        req.gel_predictor = {pred};
        req.rigid_predictor = {s.rigids[0].pose};
        solver.solve(s, req, observe);
        check_state(c, st, s, configuration_of(s), cfg.rigid_contact_area, where);
      }
    } catch (const SolverError&) {
      ++blocked;
    }
  }

  // Insertion episodes through the environments, every solver iterate observed.
  const char* tasks[] = {"peg", "lock", "fusion"};
  for (int e = 0; e < 60; ++e, ++episodes) {
    const std::string task = tasks[e % 3];
    auto j = nlohmann::json{{"task", task}, {"max_steps", 20}};
    Environment env(make_config(j));
    const std::string where = fmt("%s insert episode %d", task.c_str(), e);
    env.set_iterate_observer([&](const AcceptedIterate& a) {
      check_state(c, st, env.sim(), a.positions, env.config().solver.rigid_contact_area, where);
    });
    for (const auto& g : env.sim().gels) tets_max = std::max<long>(tets_max, g.model->mesh->num_tets());
    BuiltinPolicy policy(e % 2 ? PolicyKind::random : PolicyKind::oracle);
    const EpisodeRecord rec = run_episode(env, policy, 1000 + e);
    if (rec.aborted) ++blocked;
    check_state(c, st, env.sim(), configuration_of(env.sim()), env.config().solver.rigid_contact_area, where);
  }
  c.expect(episodes == 100, "episode count");
  c.expect(tets_max <= 3000, fmt("gel with %ld tets", tets_max));
  return fmt("%d episodes, %ld accepted states, min distance %.3g m, min J %.3g, %d ended by solver errors, <= %ld tets",
             episodes, st.states, st.min_distance, st.min_jacobian, blocked, tets_max);
}

// ---------------------------------------------------------------------------

std::string marker_pipeline(Check& c) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_rec = 0.0, worst_rt = 0.0;
  for (int m = 0; m < 5; ++m) {
    GelSpec spec;
    spec.subdivisions = {4 + 2 * m, 3 + m, 2};
    const TetMesh mesh = generate_gel_mesh(spec);
    std::vector<Vec3> pts;
    for (int i = 0; i < 1000; ++i)
      pts.emplace_back((unit(rng) - 0.5) * 0.999 * spec.base_x, (unit(rng) - 0.5) * 0.999 * spec.base_y, -spec.thickness / 2);
    const MarkerBinding b = bind_points(mesh, pts);
    const auto rec = marker_world_positions(b, mesh.vertices);
    for (std::size_t i = 0; i < pts.size(); ++i) worst_rec = std::max(worst_rec, (rec[i] - pts[i]).norm());
  }
  c.expect(worst_rec <= 1e-10, fmt("reconstruction error %.3g", worst_rec));

  const TetMesh mesh = generate_gel_mesh(GelSpec{});
  const MarkerBinding grid = bind_markers(mesh, MarkerGrid{});
  const SensorCamera cam = SensorConfig{}.camera();
  std::uniform_real_distribution<double> d(-3e-4, 3e-4);
  auto deformed = mesh.vertices;
  for (auto& v : deformed) v += Vec3(d(rng), d(rng), d(rng));
  for (const std::vector<Vec3>* x : {&mesh.vertices, static_cast<const std::vector<Vec3>*>(&deformed)}) {
    const auto pts = marker_world_positions(grid, *x);
    const Projection p = project_to_camera(pts, cam);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      c.expect(p.valid[i] == 1, fmt("marker %zu off image", i));
      worst_rt = std::max(worst_rt, (back_project(p.pixels[i], p.depth[i], cam) - pts[i]).norm());
    }
  }
  c.expect(worst_rt <= 1e-9, fmt("projection round trip %.3g", worst_rt));

  // Noiseless flow of an undeformed gel, directly and at environment reset.
  const auto px = project_to_camera(marker_world_positions(grid, mesh.vertices), cam).pixels;
  std::mt19937_64 flow_rng(3);
  const MarkerFlow still = marker_flow_observation(px, px, NoiseConfig{0.0, 0.0}, flow_rng, flow_selection(grid.size(), 128, 1));
  for (int i = 0; i < still.size(); ++i) c.expect(still.current[i] == still.initial[i], "noiseless flow is not zero");
  for (const char* task : {"peg", "lock", "fusion"}) {
    auto j = nlohmann::json{{"task", task}, {"sensor", {{"pixel_sigma", 0.0}, {"dropout_prob", 0.0}}}};
    Environment env(make_config(j));
    const Observation o = env.reset(8);
    for (const MarkerFlow* f : {&o.flow_left, &o.flow_right})
      for (int i = 0; i < f->size(); ++i)
        c.expect(f->current[i] == f->initial[i] && f->valid[i], fmt("%s reset flow is not zero", task));
  }

  double worst_var = 0.0;
  for (double sigma : {0.5, 1.7}) {
    const int n = 100000;
    std::vector<Vec2> init(n, Vec2(160, 120));
    std::mt19937_64 noise_rng(42);
    const MarkerFlow f = marker_flow_observation(init, init, NoiseConfig{sigma, 0.0}, noise_rng);
    for (int axis = 0; axis < 2; ++axis) {
      double mean = 0, sq = 0;
      for (const auto& p : f.current) mean += p[axis];
      mean /= n;
      for (const auto& p : f.current) sq += (p[axis] - mean) * (p[axis] - mean);
      const double rel = std::abs(sq / (n - 1) / (sigma * sigma) - 1.0);
      worst_var = std::max(worst_var, rel);
    }
  }
  c.expect(worst_var <= 0.05, fmt("noise variance off by %.3g", worst_var));
  return fmt("reconstruction %.2g m, round trip %.2g m, variance within %.2g%%", worst_rec, worst_rt, 100 * worst_var);
}

// ---------------------------------------------------------------------------

std::string reward_identities(Check& c) {
  int prefixes = 0, successes = 0, failures = 0;
  double worst = 0.0;
  // Telescoping over every non-terminal prefix, and the success bonus.
  for (const char* task : {"peg", "lock", "fusion"}) {
    for (int e = 0; e < 4; ++e) {
      Environment env(make_config({{"task", task}, {"max_steps", 30}}));
      Observation obs = env.reset(300 + e);
      const double p = env.config().reward.step_penalty, e0 = env.error();
      BuiltinAgent agent(e % 2 ? PolicyKind::random : PolicyKind::oracle, env, 77 + e);
      double sum = 0.0, e_prev = e0;
      int t = 0;
      while (!env.done()) {
        const StepResult r = env.step(agent.act(obs));
        obs = r.observation;
        ++t;
        if (!r.done) {
          sum += r.reward;
          const double err = std::abs(sum - (e0 - r.diagnostics.e_t - t * p));
          worst = std::max(worst, err);
          c.expect(err <= 1e-9, fmt("%s telescoping off by %.3g at t=%d", task, err, t));
          ++prefixes;
        } else if (r.status == Status::success) {
          ++successes;
          c.expect(r.diagnostics.reward.final == env.config().reward.success_reward && r.diagnostics.reward.final == 10.0,
                   fmt("%s success step without +10", task));
          c.expect(std::abs(r.reward - (e_prev - r.diagnostics.e_t - p + 10.0)) <= 1e-9,
                   fmt("%s success reward composition", task));
        }
        e_prev = r.diagnostics.e_t;
      }
    }
  }
  c.expect(successes >= 3, fmt("only %d successful episodes", successes));

  // Crafted failures against the closed forms.
  const auto fail_at = [&](nlohmann::json j, const ActionCommand& a, const std::string& expect_failure, bool lock) {
    Environment env(make_config(j));
    env.reset(1);
    const double p = env.config().reward.step_penalty;
    const int t_max = env.config().max_steps;
    double e_prev = env.error();
    StepResult r;
    while (!env.done()) {
      e_prev = env.error();
      r = env.step(a);
    }
    ++failures;
    const std::string task = j["task"];
    c.expect(r.status == Status::error_too_large || (lock && r.status == Status::too_many_steps),
             task + " crafted failure did not fail");
    if (!expect_failure.empty()) c.expect(r.diagnostics.failure == expect_failure, task + " failure was " + r.diagnostics.failure);
    const double closed = lock ? -10.0 * (t_max - r.t) * p - r.diagnostics.surface_diff : -2.0 * (t_max - r.t) * p;
    c.expect(std::abs(r.diagnostics.reward.fail - closed) <= 1e-12,
             fmt("%s R_fail %.12g vs closed form %.12g", task.c_str(), r.diagnostics.reward.fail, closed));
    c.expect(std::abs(r.reward - (e_prev - r.diagnostics.e_t - p + closed)) <= 1e-9, task + " failure reward composition");
    return r.t;
  };
  auto peg = quiet("peg");
  peg["limits"] = {{"x_max", 1.2e-3}};
  c.expect(fail_at(peg, make_action(Task::peg, {0.5, 0, 0}), "limit-x", false) == 3, "peg limit step");
  peg["limits"] = {{"theta_max", deg_to_rad(2.5)}};
  c.expect(fail_at(peg, make_action(Task::peg, {0, 0, 1}), "limit-theta", false) == 3, "peg theta limit step");
  auto lock = quiet("lock");
  lock["limits"] = {{"z_max", 1.2e-3}};
  fail_at(lock, make_action(Task::lock, {0, 0, -1}), "", true);
  lock = quiet("lock");
  lock["max_steps"] = 3;
  fail_at(lock, make_action(Task::lock, {0.3, 0, 0}), "", true);
  auto fusion = quiet("fusion");
  fusion["thresholds"] = {{"tau_theta", deg_to_rad(2.5)}};
  c.expect(fail_at(fusion, make_action(Task::fusion, {0, 0, 1, 0}), "angle-error", false) == 3, "fusion angle step");
  return fmt("%d prefixes (worst %.2g), %d success steps, %d crafted failures", prefixes, worst, successes, failures);
}

// ---------------------------------------------------------------------------

std::string oracle_success(Check& c) {
  std::vector<std::uint64_t> seeds(100);
  std::iota(seeds.begin(), seeds.end(), 0);
  std::string out;
  for (const char* task : {"peg", "lock"}) {
    for (PolicyKind kind : {PolicyKind::oracle, PolicyKind::random}) {
      BuiltinPolicy policy(kind);
      const EvaluationSummary s = evaluate(make_config({{"task", task}}), policy, std::string(to_string(kind)), seeds);
      // Aborted episodes count against the oracle and are left out for random.
      const double rate = kind == PolicyKind::oracle ? double(s.successes) / s.episodes : s.success_rate;
      if (kind == PolicyKind::oracle)
        c.expect(rate >= (std::string(task) == "peg" ? 0.90 : 0.80), fmt("%s oracle success %.2f", task, rate));
      else
        c.expect(rate < 0.05, fmt("%s random success %.2f", task, rate));
      out += fmt("%s%s %s %.2f", out.empty() ? "" : ", ", task, to_string(kind).data(), rate);
      if (s.aborted) out += fmt(" (%d aborted)", s.aborted);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string determinism(Check& c) {
  std::mt19937_64 rng(2718);
  std::uniform_int_distribution<std::uint64_t> seed_dist(0, 1u << 30);
  const char* tasks[] = {"peg", "lock", "fusion"};
  const PolicyKind kinds[] = {PolicyKind::random, PolicyKind::oracle, PolicyKind::tactile};
  std::uniform_int_distribution<int> budget(4, 16);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int steps = 0;
  std::map<std::string, int> statuses;
  for (int e = 0; e < 100; ++e) {
    auto j = nlohmann::json{{"task", tasks[e % 3]}, {"max_steps", budget(rng)}};
    // Tight workspace limits on some episodes so failures get replayed too.
    const PolicyKind kind = kinds[(e / 3) % 3];
    if (kind == PolicyKind::oracle) j["max_steps"] = 30;  // long enough to finish
    if (e % 4 == 1) {
      // Fusion starts 12 mm beside the hole, so only its margin is tight there.
      j["randomization"] = {{"xy", 0.5e-3}};
      const double xy = e % 3 == 2 ? 13e-3 : 1.2e-3;
      j["limits"] = {{"x_max", xy}, {"y_max", xy}};
    }
    if (e % 5 == 2) j["sensor"] = {{"pixel_sigma", 2.0 * unit(rng)}, {"dropout_prob", 0.3 * unit(rng)}};
    const std::uint64_t seed = seed_dist(rng);
    Environment env(make_config(j));
    BuiltinPolicy policy(kind);
    std::ostringstream first, second;
    EpisodeLogWriter w1(first), w2(second);
    const EpisodeRecord rec = run_episode(env, policy, seed, &w1);
    run_episode(env, policy, seed, &w2);
    steps += rec.steps;
    ++statuses[rec.status];
    c.expect(!rec.aborted, fmt("fuzz episode %d aborted: %s", e, rec.reason.c_str()));
    c.expect(first.str() == second.str(), fmt("fuzz episode %d: same-seed runs differ", e));
    std::istringstream in(first.str());
    const ReplayReport rep = replay(parse_episode_log(in));
    c.expect(!rep.refused, fmt("fuzz episode %d: replay refused: %s", e, rep.reason.c_str()));
    if (rep.divergence)
      c.expect(false, fmt("fuzz episode %d diverged at step %d (%s)", e, rep.divergence->step, rep.divergence->field.c_str()));
    c.expect(rep.steps_replayed == rec.steps, fmt("fuzz episode %d: replayed %d of %d steps", e, rep.steps_replayed, rec.steps));
  }
  std::string mix;
  for (const auto& [status, count] : statuses) mix += fmt("%s%s %d", mix.empty() ? "" : ", ", status.c_str(), count);
  return fmt("100 episodes, %d steps (%s), zero divergences, double runs byte-identical", steps, mix.c_str());
}

// ---------------------------------------------------------------------------

SurfaceMesh quad(double half, double z) {
  SurfaceMesh m;
  m.vertices = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
  m.tris = {{0, 1, 2}, {0, 2, 3}};
  m.finalize();
  return m;
}

std::string depth_camera(Check& c) {
  const CameraModel cam;
  for (double z : {0.05, 0.1, 0.37, 1.0, 1.9}) {
    const SurfaceMesh plane = quad(5.0, z);
    const auto r = render_depth({{&plane, RigidTransform{}, 1}}, cam);
    for (std::size_t i = 0; i < r.depth.size(); ++i)
      c.expect(r.valid(i) && r.depth[i] == static_cast<float>(z), fmt("plane at %.2f m: pixel %zu", z, i));
  }

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  long points = 0;
  const SurfaceMesh box = make_prism({{-0.05, -0.05}, {0.05, -0.05}, {0.05, 0.05}, {-0.05, 0.05}}, -0.05, 0.05);
  for (int k = 0; k < 5; ++k) {
    CameraModel view;
    view.pose = look_at({0.3 * u(rng), 0.3 * u(rng), 0.35 + 0.1 * u(rng)}, {0.01 * u(rng), 0.01 * u(rng), 0}, {0, 0, 1});
    const auto r = render_depth({{&box, RigidTransform{}, 4}}, view);
    const PointCloud pc = depth_to_pointcloud(r, view);
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
      const Vec2 p = view.project(pc.points[i]);
      worst = std::max({worst, std::abs(p.x() - pc.pixels[i][0]), std::abs(p.y() - pc.pixels[i][1])});
      c.expect(pc.points[i].z() == r.depth[pc.pixels[i][1] * r.width + pc.pixels[i][0]], "point depth");
    }
    points += static_cast<long>(pc.points.size());
  }
  c.expect(worst <= 1e-9, fmt("point cloud round trip %.3g px", worst));
  c.expect(points > 1000, "too few points");

  std::uniform_real_distribution<double> off(-0.1, 0.1), z(0.3, 0.8);
  int overlapping = 0;
  for (int scene = 0; scene < 50; ++scene) {
    const SurfaceMesh a = make_prism({{-0.05, -0.05}, {0.05, -0.05}, {0.05, 0.05}, {-0.05, 0.05}}, 0.0, 0.08);
    const SurfaceMesh b = make_prism({{-0.04, -0.03}, {0.06, -0.02}, {0.0, 0.07}}, 0.0, 0.05);
    const RigidTransform pa = RigidTransform::from_axis_angle(Vec3(off(rng), off(rng), 1), off(rng) * 10, {off(rng), off(rng), z(rng)});
    const RigidTransform pb = RigidTransform::from_axis_angle(Vec3(off(rng), 1, off(rng)), off(rng) * 10, {off(rng), off(rng), z(rng)});
    const auto ra = render_depth({{&a, pa, 1}}, cam), rb = render_depth({{&b, pb, 2}}, cam);
    const auto both = render_depth({{&a, pa, 1}, {&b, pb, 2}}, cam);
    bool overlap = false;
    for (std::size_t i = 0; i < both.depth.size(); ++i) {
      const float inf = std::numeric_limits<float>::infinity();
      const float da = ra.valid(i) ? ra.depth[i] : inf, db = rb.valid(i) ? rb.depth[i] : inf;
      overlap = overlap || (ra.valid(i) && rb.valid(i));
      const float expect = std::min(da, db);
      if (std::isinf(expect)) {
        c.expect(!both.valid(i), fmt("scene %d pixel %zu: phantom hit", scene, i));
      } else {
        c.expect(both.depth[i] == expect, fmt("scene %d pixel %zu: not the nearest surface", scene, i));
        c.expect(both.ids[i] == (da <= db ? 1 : 2) || da == db, fmt("scene %d pixel %zu: wrong instance", scene, i));
      }
    }
    overlapping += overlap;
  }
  return fmt("5 planes exact, %ld points within %.2g px, 50 scenes (%d overlapping)", points, worst, overlapping);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "kinematics oracle", 1.0, kinematics_oracle},
      {2, "rigid motion", 1.0, rigid_motion},
      {3, "FEM gradient check", 30.0, fem_gradient},
      {4, "non-penetration fuzz", 600.0, non_penetration},
      {5, "marker pipeline", 0.0, marker_pipeline},
      {6, "reward identities", 0.0, reward_identities},
      {7, "oracle-policy success", 1200.0, oracle_success},
      {8, "determinism and replay", 0.0, determinism},
      {9, "depth camera", 0.0, depth_camera},
  };
  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (const auto& cr : criteria) {
    if (only && cr.id != only) continue;
    Check c;
    std::string detail;
    const auto t0 = Clock::now();
    try {
      detail = cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (cr.time_limit > 0) c.expect(secs < cr.time_limit, fmt("took %.1f s, limit %.0f s", secs, cr.time_limit));
    std::cout << (c.ok ? "PASS " : "FAIL ") << cr.id << ". " << cr.name << ": "
              << (c.ok ? detail : c.first_failure + (detail.empty() ? "" : " [" + detail + "]"))
              << fmt(" (%.1f s)", secs) << std::endl;
    failed += !c.ok;
  }
  std::cout << (failed ? fmt("%d criteria failed", failed) : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
