#pragma once

#include "vitac/geometry/tet_mesh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

namespace vitac {

/// Codes: singular-configuration, solver-nonconvergence, solver-blocked.
class SolverError : public Error {
 public:
  SolverError(std::string code, const std::string& message, double residual = 0.0)
      : Error(std::move(code), message), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct MaterialParams {
  double youngs_modulus = 1.45e5;  // Pa
  double poisson_ratio = 0.45;
  double density = 1100.0;         // kg/m^3, only scales the proximity term
  double damping = 0.5;            // [0, 1]
};

inline void validate(const MaterialParams& m) {
  if (!(m.youngs_modulus > 0.0)) throw Error("config-invalid", "youngs_modulus must be > 0");
  if (!(m.poisson_ratio >= 0.0 && m.poisson_ratio < 0.5))
    throw Error("config-invalid", "poisson_ratio must lie in [0, 0.5)");
  if (!(m.density > 0.0)) throw Error("config-invalid", "density must be > 0");
  if (!(m.damping >= 0.0 && m.damping <= 1.0)) throw Error("config-invalid", "damping must lie in [0, 1]");
}

/// Lame parameters of the stable Neo-Hookean energy. `lambda` already carries
/// the +mu shift so the small-strain limit matches linear elasticity.
struct Lame {
  double mu;
  double lambda;
};

inline Lame lame_parameters(const MaterialParams& m) {
  const double e = m.youngs_modulus, nu = m.poisson_ratio;
  const double mu = e / (2.0 * (1.0 + nu));
  const double lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  return {mu, lambda + mu};
}

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

struct ElasticElement {
  Eigen::Matrix<double, 9, 12> dfdx;  // vec(F) (column-major) w.r.t. the 12 vertex coordinates
  Mat3 dm_inv;
  double volume;
};

inline ElasticElement make_element(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3) {
  Mat3 dm;
  dm << x1 - x0, x2 - x0, x3 - x0;
  ElasticElement e;
  e.dm_inv = dm.inverse();
  e.volume = dm.determinant() / 6.0;
  e.dfdx.setZero();
  const Mat3& b = e.dm_inv;
  for (int j = 0; j < 3; ++j) {
    const double s = b(0, j) + b(1, j) + b(2, j);
    for (int i = 0; i < 3; ++i) {
      e.dfdx(i + 3 * j, i) = -s;
      for (int a = 1; a < 4; ++a) e.dfdx(i + 3 * j, 3 * a + i) = b(a - 1, j);
    }
  }
  return e;
}

inline std::vector<ElasticElement> make_elements(const TetMesh& mesh) {
  std::vector<ElasticElement> out;
  out.reserve(mesh.tets.size());
  for (const auto& t : mesh.tets)
    out.push_back(make_element(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], mesh.vertices[t[3]]));
  return out;
}

inline Mat3 deformation_gradient(const ElasticElement& e, const Vec3& x0, const Vec3& x1, const Vec3& x2,
                                 const Vec3& x3) {
  Mat3 ds;
  ds << x1 - x0, x2 - x0, x3 - x0;
  return ds * e.dm_inv;
}

inline Mat3 cofactor(const Mat3& f) {
  Mat3 c;
  c << f.col(1).cross(f.col(2)), f.col(2).cross(f.col(0)), f.col(0).cross(f.col(1));
  return c;
}

inline double snh_energy_density(const Mat3& f, const Lame& l) {
  const double j = f.determinant();
  return 0.5 * l.mu * (f.squaredNorm() - 3.0) - l.mu * (j - 1.0) + 0.5 * l.lambda * (j - 1.0) * (j - 1.0);
}

inline Mat3 snh_pk1(const Mat3& f, const Lame& l) {
  const double j = f.determinant();
  return l.mu * f + (l.lambda * (j - 1.0) - l.mu) * cofactor(f);
}

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// dP/dF in column-major vec layout.
inline Mat9 snh_dpdf(const Mat3& f, const Lame& l) {
  const double j = f.determinant();
  const Mat3 c = cofactor(f);
  const Eigen::Map<const Vec9> g(c.data());
  Mat9 h = l.mu * Mat9::Identity() + l.lambda * g * g.transpose();
  const double s = l.lambda * (j - 1.0) - l.mu;
  const Mat3 f0 = cross_matrix(f.col(0)), f1 = cross_matrix(f.col(1)), f2 = cross_matrix(f.col(2));
  h.block<3, 3>(0, 3) -= s * f2;
  h.block<3, 3>(0, 6) += s * f1;
  h.block<3, 3>(3, 0) += s * f2;
  h.block<3, 3>(3, 6) -= s * f0;
  h.block<3, 3>(6, 0) -= s * f1;
  h.block<3, 3>(6, 3) += s * f0;
  return h;
}

/// Clamps negative eigenvalues of a symmetric matrix to zero.
template <int N>
Eigen::Matrix<double, N, N> project_psd(const Eigen::Matrix<double, N, N>& m) {
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(m);
  if (llt.info() == Eigen::Success) return m;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(m);
  const auto d = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Eigen-pairs of the stable Neo-Hookean dP/dF, in closed form from the
/// rotation-variant SVD of F. Modes are unit vec(U M V^T) for scaling (M
/// diagonal), twist (M skew) and flip (M symmetric off-diagonal).
struct SnhEigensystem {
  Vec9 values;
  Mat9 vectors;  // columns
};

inline SnhEigensystem snh_eigensystem(const Mat3& f, const Lame& l) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU(), v = svd.matrixV();
  Vec3 sigma = svd.singularValues();
  if (u.determinant() < 0.0) {
    u.col(2) *= -1.0;
    sigma(2) *= -1.0;
  }
  if (v.determinant() < 0.0) {
    v.col(2) *= -1.0;
    sigma(2) *= -1.0;
  }
  const double j = sigma.prod();
  const double s = l.lambda * (j - 1.0) - l.mu;
  SnhEigensystem out;
  const auto mode = [&](const Mat3& m) {
    const Mat3 q = u * m * v.transpose();
    return Eigen::Map<const Vec9>(q.data()).eval();
  };
  // Scaling block.
  Mat3 a;
  const Vec3 dj(sigma(1) * sigma(2), sigma(0) * sigma(2), sigma(0) * sigma(1));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) a(i, k) = (i == k ? l.mu : s * sigma(3 - i - k)) + l.lambda * dj(i) * dj(k);
  Eigen::SelfAdjointEigenSolver<Mat3> es;
  es.computeDirect(a);
  for (int m = 0; m < 3; ++m) {
    out.values(m) = es.eigenvalues()(m);
    out.vectors.col(m) = mode(es.eigenvectors().col(m).asDiagonal().toDenseMatrix());
  }
  // Twist and flip in the plane (p, q) opposite axis i.
  const double r = std::sqrt(0.5);
  for (int i = 0; i < 3; ++i) {
    const int p = (i + 1) % 3, q = (i + 2) % 3;
    Mat3 tw = Mat3::Zero(), fl = Mat3::Zero();
    tw(p, q) = -r;
    tw(q, p) = r;
    fl(p, q) = r;
    fl(q, p) = r;
    out.values(3 + i) = l.mu + s * sigma(i);
    out.vectors.col(3 + i) = mode(tw);
    out.values(6 + i) = l.mu - s * sigma(i);
    out.vectors.col(6 + i) = mode(fl);
  }
  return out;
}

/// dP/dF with negative eigenvalues clamped to zero.
inline Mat9 snh_dpdf_projected(const Mat3& f, const Lame& l) {
  const SnhEigensystem e = snh_eigensystem(f, l);
  return e.vectors * e.values.cwiseMax(0.0).asDiagonal() * e.vectors.transpose();
}

struct TetEval {
  double energy = 0.0;
  Vec12 gradient = Vec12::Zero();
  Mat12 hessian = Mat12::Zero();
};

/// Energy V*psi(F) of one element with gradient and (optionally) PSD-projected
/// Hessian w.r.t. its 12 vertex coordinates.
inline TetEval tet_elastic(const ElasticElement& e, const std::array<Vec3, 4>& x, const Lame& l,
                           bool with_hessian, bool project = true) {
  const Mat3 f = deformation_gradient(e, x[0], x[1], x[2], x[3]);
  if (!(f.determinant() > 0.0))
    throw SolverError("singular-configuration", "inverted element in elastic evaluation");
  TetEval out;
  out.energy = e.volume * snh_energy_density(f, l);
  const Mat3 p = snh_pk1(f, l);
  out.gradient = e.volume * e.dfdx.transpose() * Eigen::Map<const Vec9>(p.data());
  if (with_hessian) {
    if (project) {
      // Sum of rank-one terms over the clamped eigen-pairs.
      const SnhEigensystem es = snh_eigensystem(f, l);
      for (int m = 0; m < 9; ++m) {
        const double lam = es.values(m);
        if (lam <= 0.0) continue;
        const Vec12 b = e.dfdx.transpose() * es.vectors.col(m);
        out.hessian.noalias() += (e.volume * lam) * b * b.transpose();
      }
    } else {
      out.hessian = e.volume * e.dfdx.transpose() * snh_dpdf(f, l) * e.dfdx;
    }
  }
  return out;
}

struct ElasticResult {
  double energy = 0.0;
  Eigen::VectorXd gradient;           // 3 * num_vertices
  Eigen::SparseMatrix<double> hessian;  // 3n x 3n
};

/// Whole-mesh elastic energy over all vertex coordinates.
inline ElasticResult elastic_energy(const TetMesh& mesh, const std::vector<Vec3>& positions,
                                    const MaterialParams& material, bool with_hessian = true) {
  const Lame l = lame_parameters(material);
  const int n = mesh.num_vertices();
  ElasticResult out;
  out.gradient = Eigen::VectorXd::Zero(3 * n);
  std::vector<Eigen::Triplet<double>> trips;
  if (with_hessian) trips.reserve(mesh.tets.size() * 144);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const ElasticElement e = make_element(mesh.vertices[tet[0]], mesh.vertices[tet[1]], mesh.vertices[tet[2]],
                                          mesh.vertices[tet[3]]);
    const TetEval r = tet_elastic(e, {positions[tet[0]], positions[tet[1]], positions[tet[2]], positions[tet[3]]},
                                  l, with_hessian);
    out.energy += r.energy;
    for (int a = 0; a < 4; ++a) out.gradient.segment<3>(3 * tet[a]) += r.gradient.segment<3>(3 * a);
    if (with_hessian) {
      for (int a = 0; a < 12; ++a)
        for (int b = 0; b < 12; ++b)
          trips.emplace_back(3 * tet[a / 3] + a % 3, 3 * tet[b / 3] + b % 3, r.hessian(a, b));
    }
  }
  if (with_hessian) {
    out.hessian.resize(3 * n, 3 * n);
    out.hessian.setFromTriplets(trips.begin(), trips.end());
  }
  return out;
}

}  // namespace vitac
