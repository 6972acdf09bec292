// Localized natural estimator, jump estimators, and cross-mesh error norms
// against fine-mesh reference solutions.
#pragma once

#include <cmath>
#include <limits>

#include "dpg/assembly.hpp"
#include "dpg/eigensolve.hpp"

namespace dpg {

enum class IndicatorKind { Natural, JumpPrimal, JumpUltraweak };

struct IndicatorField {
    std::vector<double> eta_t;  // per-element, nonnegative
    double global = 0;          // sqrt of the sum of squares
    IndicatorKind kind = IndicatorKind::Natural;

    void finalize() {
        double s = 0;
        for (double e : eta_t) s += e * e;
        global = std::sqrt(s);
    }
};

/// eta_T = ||eps_h||_{V(T)} through the element Gram matrix.
inline IndicatorField eta_natural(const ResidualField& residual, const AssembledPencil& pencil) {
    IndicatorField out;
    out.kind = IndicatorKind::Natural;
    out.eta_t.resize(pencil.blocks.size());
    for (std::size_t t = 0; t < pencil.blocks.size(); ++t) {
        const Eigen::VectorXd& e = residual.element_coeffs[t];
        out.eta_t[t] = std::sqrt(std::max(0.0, e.dot(pencil.blocks[t].G * e)));
    }
    out.finalize();
    return out;
}

namespace detail {

// Broken gradient of the scalar residual component at an edge parameter
// point; ordering of the test basis follows assembly::eval_test_basis.
inline Eigen::Vector2d residual_scalar_gradient(const AssembledPencil& pencil,
                                                const ResidualField& residual, int t,
                                                const Eigen::Vector2d& phys) {
    const Mesh& mesh = *pencil.mesh;
    ElementMap em = ElementMap::from(mesh, t);
    Eigen::Vector2d r = em.to_reference(phys[0], phys[1]);
    int kv = (pencil.form.kind == FormulationKind::Primal)          ? pencil.form.k + 1
             : (pencil.form.kind == FormulationKind::UltraweakLowestRT) ? 1
                                                                        : pencil.form.k + 2;
    Eigen::MatrixXd g = lagrange_gradients(kv, r[0], r[1]);
    Eigen::Vector2d out = Eigen::Vector2d::Zero();
    const Eigen::VectorXd& c = residual.element_coeffs[t];
    for (int i = 0; i < g.rows(); ++i)
        out += c[i] * (em.Jinv.transpose() * g.row(i).transpose());
    return out;
}

// Vector (tau) part of the ultraweak lowest-order residual at a point.
inline Eigen::Vector2d residual_tau_value(const AssembledPencil& pencil,
                                          const ResidualField& residual, int t,
                                          const Eigen::Vector2d& phys) {
    Eigen::Vector2d out = Eigen::Vector2d::Zero();
    const Eigen::VectorXd& c = residual.element_coeffs[t];
    for (int i = 0; i < 3; ++i) out += c[3 + i] * rt0_value(*pencil.mesh, t, i, phys);
    return out;
}

// Per-edge integral of the squared jump of a piecewise vector field given by
// field(t, phys). Boundary edges use the one-sided trace.
template <typename Field>
inline std::vector<double> edge_jump_integrals(const Mesh& mesh, int quad_n, Field&& field) {
    std::vector<double> J(mesh.n_edges(), 0.0);
    std::vector<double> sp, sw;
    gauss_legendre_01(quad_n, sp, sw);
    for (int e = 0; e < mesh.n_edges(); ++e) {
        const Edge& E = mesh.edges()[e];
        const Vertex &a = mesh.vertices()[E.v[0]], &b = mesh.vertices()[E.v[1]];
        double acc = 0;
        for (int q = 0; q < quad_n; ++q) {
            Eigen::Vector2d phys(a.x + sp[q] * (b.x - a.x), a.y + sp[q] * (b.y - a.y));
            Eigen::Vector2d jump = field(E.tri[0], phys);
            if (E.tri[1] >= 0) jump -= field(E.tri[1], phys);
            acc += sw[q] * E.length * jump.squaredNorm();
        }
        J[e] = acc;
    }
    return J;
}

inline IndicatorField jump_indicator_from_edges(const Mesh& mesh, const std::vector<double>& J,
                                                IndicatorKind kind) {
    IndicatorField out;
    out.kind = kind;
    out.eta_t.resize(mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        double s = 0;
        for (int e : mesh.triangle_edges(t)) s += J[e];
        out.eta_t[t] = std::sqrt(std::sqrt(mesh.area(t)) * s);
    }
    out.finalize();
    return out;
}

}  // namespace detail

/// Jump estimator for the lowest-order primal formulation:
/// eta_T^2 = |T|^(1/2) sum_E || [grad eps_h] ||^2_{L2(E)}.
inline IndicatorField eta_bar(const ResidualField& residual, const AssembledPencil& pencil) {
    if (pencil.form.kind != FormulationKind::Primal || pencil.form.k != 1)
        throw std::invalid_argument("eta_bar requires the lowest-order primal formulation");
    auto J = detail::edge_jump_integrals(
        *pencil.mesh, pencil.form.k + 2, [&](int t, const Eigen::Vector2d& phys) {
            return detail::residual_scalar_gradient(pencil, residual, t, phys);
        });
    return detail::jump_indicator_from_edges(*pencil.mesh, J, IndicatorKind::JumpPrimal);
}

struct EtaTildeResult {
    IndicatorField indicator;     // grad-v jump form
    double tau_form_global = 0;   // tau jump form of the same quantity
};

/// Jump estimator for the lowest-order ultraweak formulation, computed in
/// both the grad-v and the tau form.
inline EtaTildeResult eta_tilde(const ResidualField& residual, const AssembledPencil& pencil) {
    if (pencil.form.kind != FormulationKind::UltraweakLowestRT)
        throw std::invalid_argument("eta_tilde requires the lowest-order RT ultraweak formulation");
    const Mesh& mesh = *pencil.mesh;
    auto Jv = detail::edge_jump_integrals(mesh, 3, [&](int t, const Eigen::Vector2d& phys) {
        return detail::residual_scalar_gradient(pencil, residual, t, phys);
    });
    auto Jt = detail::edge_jump_integrals(mesh, 3, [&](int t, const Eigen::Vector2d& phys) {
        return detail::residual_tau_value(pencil, residual, t, phys);
    });
    EtaTildeResult out;
    out.indicator = detail::jump_indicator_from_edges(mesh, Jv, IndicatorKind::JumpUltraweak);
    out.tau_form_global =
        detail::jump_indicator_from_edges(mesh, Jt, IndicatorKind::JumpUltraweak).global;
    return out;
}

/// Fine-mesh eigenpair used as a stand-in exact solution.
struct ReferenceSolution {
    const AssembledPencil* pencil = nullptr;  // pencil on the fine mesh
    EigenPair pair;
    double lambda_ref = 0;  // best known eigenvalue (reference constant)
};

namespace detail {

// Accumulated cross inner products between a reference function (native on
// the fine mesh) and a study function (evaluated by point location).
struct CrossNorms {
    double rr = 0, hh = 0, rh = 0;      // L2 products of u
    double grr = 0, ghh = 0, grh = 0;   // L2 products of grad u
    double srr = 0, shh = 0, srh = 0;   // L2 products of sigma (ultraweak)
};

inline Eigen::VectorXd local_value(const FEFunction& f, int t, double xr, double yr) {
    const DofMap& dm = *f.map;
    Eigen::VectorXd c = local_coeffs(f, t);
    Eigen::VectorXd v = lagrange_values(dm.desc.order, xr, yr);
    int n = v.size();
    Eigen::VectorXd out(dm.desc.components);
    for (int comp = 0; comp < dm.desc.components; ++comp)
        out[comp] = v.dot(c.segment(comp * n, n));
    return out;
}

inline Eigen::Vector2d local_gradient(const FEFunction& f, int t, double xr, double yr) {
    const DofMap& dm = *f.map;
    ElementMap em = ElementMap::from(*dm.mesh, t);
    Eigen::VectorXd c = local_coeffs(f, t);
    Eigen::MatrixXd g = lagrange_gradients(dm.desc.order, xr, yr);
    Eigen::Vector2d out = Eigen::Vector2d::Zero();
    for (int i = 0; i < g.rows(); ++i)
        out += c[i] * (em.Jinv.transpose() * g.row(i).transpose());
    return out;
}

// Locates a physical point in the study mesh, reusing a walk seed.
struct StudyLocator {
    const Mesh* mesh;
    int seed = 0;
    PointLocation operator()(const Eigen::Vector2d& p, int side_hint) {
        PointLocation loc = locate_point(*mesh, p[0], p[1], seed, side_hint);
        seed = loc.triangle;
        return loc;
    }
};

inline CrossNorms accumulate_cross_norms(const AssembledPencil& study, const Eigen::VectorXd& y,
                                         const ReferenceSolution& ref, bool with_sigma) {
    const AssembledPencil& fine = *ref.pencil;
    const Mesh& fine_mesh = *fine.mesh;
    FEFunction ur = extract_u0(fine, ref.pair.y);
    FEFunction uh = extract_u0(study, y);
    FEFunction sr, sh;
    if (with_sigma) {
        sr.map = &fine.layout.maps[1];
        sr.coeffs = ref.pair.y.segment(fine.layout.offsets[1], fine.layout.maps[1].n_global);
        sh.map = &study.layout.maps[1];
        sh.coeffs = y.segment(study.layout.offsets[1], study.layout.maps[1].n_global);
    }
    const int kref = fine.layout.maps[0].desc.order;
    const int kstudy = study.layout.maps[0].desc.order;
    QuadratureRule qr = quadrature(2 * std::max(kref, kstudy) + 2);
    CrossNorms acc;
    StudyLocator locator{study.mesh, 0};
    for (int t = 0; t < fine_mesh.n_triangles(); ++t) {
        ElementMap em = ElementMap::from(fine_mesh, t);
        double detJ = 2 * fine_mesh.area(t);
        auto bc = fine_mesh.barycenter(t);
        int side_hint = bc[1] >= 0 ? +1 : -1;
        for (std::size_t q = 0; q < qr.size(); ++q) {
            double w = qr.weights[q] * detJ;
            Eigen::Vector2d phys = em.to_physical(qr.x(q), qr.y(q));
            PointLocation loc = locator(phys, side_hint);
            double vr = local_value(ur, t, qr.x(q), qr.y(q))[0];
            double vh = local_value(uh, loc.triangle, loc.xref, loc.yref)[0];
            acc.rr += w * vr * vr;
            acc.hh += w * vh * vh;
            acc.rh += w * vr * vh;
            if (!with_sigma) {
                Eigen::Vector2d gr = local_gradient(ur, t, qr.x(q), qr.y(q));
                Eigen::Vector2d gh = local_gradient(uh, loc.triangle, loc.xref, loc.yref);
                acc.grr += w * gr.squaredNorm();
                acc.ghh += w * gh.squaredNorm();
                acc.grh += w * gr.dot(gh);
            } else {
                Eigen::VectorXd mr = local_value(sr, t, qr.x(q), qr.y(q));
                Eigen::VectorXd mh = local_value(sh, loc.triangle, loc.xref, loc.yref);
                acc.srr += w * mr.squaredNorm();
                acc.shh += w * mh.squaredNorm();
                acc.srh += w * mr.dot(mh);
            }
        }
    }
    return acc;
}

}  // namespace detail

/// Computable surrogate of the energy-norm eigenfunction error: broken H1
/// norm of the u difference (primal) or L2 norms of the u and sigma
/// differences (ultraweak). Skeleton components are not included.
inline double energy_error(const AssembledPencil& study, const EigenPair& pair,
                           const ReferenceSolution& ref) {
    bool uw = study.form.is_ultraweak();
    auto acc = detail::accumulate_cross_norms(study, pair.y, ref, uw);
    double s = acc.rh >= 0 ? 1.0 : -1.0;  // sign alignment via the L2 product
    double l2 = acc.rr - 2 * s * acc.rh + acc.hh;
    double extra = uw ? (acc.srr - 2 * s * acc.srh + acc.shh)
                      : (acc.grr - 2 * s * acc.grh + acc.ghh);
    return std::sqrt(std::max(0.0, l2 + extra));
}

/// || lambda_ref u_ref - lambda_h u_h ||_{L2}, sign-aligned.
inline double higher_order_term(const AssembledPencil& study, const EigenPair& pair,
                                const ReferenceSolution& ref) {
    bool uw = study.form.is_ultraweak();
    auto acc = detail::accumulate_cross_norms(study, pair.y, ref, uw);
    double s = acc.rh >= 0 ? 1.0 : -1.0;
    double lr = ref.pair.lambda, lh = pair.lambda;
    double v = lr * lr * acc.rr - 2 * lr * lh * s * acc.rh + lh * lh * acc.hh;
    return std::sqrt(std::max(0.0, v));
}

inline double efficiency_ratio(double eta_global, double energy_err) {
    if (eta_global == 0.0) return 0.0;
    if (!(energy_err > 0)) throw std::invalid_argument("efficiency_ratio: zero error");
    return eta_global / energy_err;
}

}  // namespace dpg
