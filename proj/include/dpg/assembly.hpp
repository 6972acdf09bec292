// Element blocks for the DPG formulations, element-local condensation of the
// broken test space, and assembly of the generalized pencil S y = lambda N y.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <ostream>

#include "dpg/fespace.hpp"
#include "dpg/mesh.hpp"
#include "dpg/quadrature.hpp"

namespace dpg {

struct AssemblyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FormulationKind { Primal, Ultraweak, UltraweakAugmented, UltraweakLowestRT };

struct Formulation {
    FormulationKind kind = FormulationKind::Primal;
    int k = 1;  // ignored for UltraweakLowestRT

    static Formulation primal(int k) {
        if (k < 1) throw std::invalid_argument("primal formulation needs k >= 1");
        return {FormulationKind::Primal, k};
    }
    static Formulation ultraweak(int k) {
        if (k < 0) throw std::invalid_argument("ultraweak formulation needs k >= 0");
        return {FormulationKind::Ultraweak, k};
    }
    static Formulation ultraweak_augmented(int k) {
        if (k < 0) throw std::invalid_argument("ultraweak formulation needs k >= 0");
        return {FormulationKind::UltraweakAugmented, k};
    }
    static Formulation ultraweak_lowest_rt() { return {FormulationKind::UltraweakLowestRT, 0}; }

    bool is_ultraweak() const { return kind != FormulationKind::Primal; }
    const char* name() const {
        switch (kind) {
            case FormulationKind::Primal: return "primal";
            case FormulationKind::Ultraweak: return "ultraweak";
            case FormulationKind::UltraweakAugmented: return "ultraweak+";
            case FormulationKind::UltraweakLowestRT: return "ultraweak-rt";
        }
        return "?";
    }
};

/// Trial component spaces in their fixed layout: volumetric components
/// first, skeleton components second.
struct TrialLayout {
    std::vector<DofMap> maps;
    std::vector<int> offsets;
    int n_trial = 0;

    const DofMap& u0_map() const { return maps[0]; }
    int component_count() const { return int(maps.size()); }
};

inline std::vector<SpaceDescriptor> trial_spaces(const Formulation& f) {
    switch (f.kind) {
        case FormulationKind::Primal:
            return {SpaceDescriptor::continuous_lagrange(f.k),
                    SpaceDescriptor::skeleton_pk(f.k - 1)};
        case FormulationKind::Ultraweak:
        case FormulationKind::UltraweakLowestRT:
            return {SpaceDescriptor::broken_lagrange(f.k, 1),
                    SpaceDescriptor::broken_lagrange(f.k, 2),
                    SpaceDescriptor::trace_skeleton(f.k + 1),
                    SpaceDescriptor::skeleton_pk(f.k)};
        case FormulationKind::UltraweakAugmented:
            return {SpaceDescriptor::broken_lagrange(f.k + 1, 1),
                    SpaceDescriptor::broken_lagrange(f.k, 2),
                    SpaceDescriptor::trace_skeleton(f.k + 1),
                    SpaceDescriptor::skeleton_pk(f.k)};
    }
    return {};
}

inline TrialLayout build_trial_layout(const Formulation& f, const Mesh& mesh) {
    TrialLayout layout;
    int offset = 0;
    for (const SpaceDescriptor& d : trial_spaces(f)) {
        layout.maps.push_back(build_dof_map(d, mesh));
        layout.offsets.push_back(offset);
        offset += layout.maps.back().n_global;
    }
    layout.n_trial = offset;
    return layout;
}

/// Local test-space dimension (the broken enriched space on one element).
inline int test_dim(const Formulation& f) {
    switch (f.kind) {
        case FormulationKind::Primal: return detail::lagrange_size(f.k + 1);
        case FormulationKind::Ultraweak:
        case FormulationKind::UltraweakAugmented: return 3 * detail::lagrange_size(f.k + 2);
        case FormulationKind::UltraweakLowestRT: return 6;  // P1 scalar + RT0
    }
    return 0;
}

inline int assembly_quad_degree(const Formulation& f) { return 2 * (f.k + 2) + 2; }

struct ElementBlocks {
    Eigen::MatrixXd G;  // test Gram, SPD
    Eigen::MatrixXd B;  // b-form, test x trial
    Eigen::MatrixXd M;  // m-form, test x trial (u0 columns only)
    std::vector<int> trial_dofs;  // global trial indices, -1 = constrained
};

struct ResidualField {
    std::vector<Eigen::VectorXd> element_coeffs;  // local test-basis coefficients
};

struct AssembledPencil {
    Eigen::SparseMatrix<double> S;  // B^T G^-1 B
    Eigen::SparseMatrix<double> N;  // B^T G^-1 M
    int n_trial = 0;
    Formulation form;
    TrialLayout layout;
    const Mesh* mesh = nullptr;
    std::vector<ElementBlocks> blocks;
};

namespace detail {

// Evaluation tables of the broken test basis at the volume quadrature points
// of one element. Vector-valued rows carry values (2 components) and a
// divergence; scalar rows carry value and physical gradient.
struct TestBasisEval {
    int n = 0;            // local test dimension
    int n_scalar = 0;     // leading scalar block size
    Eigen::MatrixXd val;  // n x nq, scalar value (0 for vector rows)
    Eigen::MatrixXd gx, gy;       // physical gradients of scalar rows
    Eigen::MatrixXd vx, vy, dv;   // vector rows: components and divergence
};

inline TestBasisEval eval_test_basis(const Formulation& f, const Mesh& mesh, int t,
                                     const QuadratureRule& qr) {
    ElementMap em = ElementMap::from(mesh, t);
    const int nq = int(qr.size());
    TestBasisEval tb;
    auto fill_scalar = [&](int k, int row0) {
        int ns = lagrange_size(k);
        for (int q = 0; q < nq; ++q) {
            Eigen::VectorXd v = lagrange_values(k, qr.x(q), qr.y(q));
            Eigen::MatrixXd g = lagrange_gradients(k, qr.x(q), qr.y(q));
            for (int i = 0; i < ns; ++i) {
                tb.val(row0 + i, q) = v[i];
                Eigen::Vector2d gp = em.Jinv.transpose() * g.row(i).transpose();
                tb.gx(row0 + i, q) = gp[0];
                tb.gy(row0 + i, q) = gp[1];
            }
        }
        return ns;
    };
    switch (f.kind) {
        case FormulationKind::Primal: {
            tb.n = tb.n_scalar = lagrange_size(f.k + 1);
            tb.val = Eigen::MatrixXd::Zero(tb.n, nq);
            tb.gx = tb.gy = tb.val;
            tb.vx = tb.vy = tb.dv = Eigen::MatrixXd::Zero(tb.n, nq);
            fill_scalar(f.k + 1, 0);
            break;
        }
        case FormulationKind::Ultraweak:
        case FormulationKind::UltraweakAugmented: {
            int ns = lagrange_size(f.k + 2);
            tb.n = 3 * ns;
            tb.n_scalar = ns;
            tb.val = Eigen::MatrixXd::Zero(tb.n, nq);
            tb.gx = tb.gy = tb.val;
            tb.vx = tb.vy = tb.dv = Eigen::MatrixXd::Zero(tb.n, nq);
            fill_scalar(f.k + 2, 0);
            // vector block: (phi, 0) then (0, phi)
            for (int q = 0; q < nq; ++q) {
                Eigen::VectorXd v = lagrange_values(f.k + 2, qr.x(q), qr.y(q));
                Eigen::MatrixXd g = lagrange_gradients(f.k + 2, qr.x(q), qr.y(q));
                for (int i = 0; i < ns; ++i) {
                    Eigen::Vector2d gp = em.Jinv.transpose() * g.row(i).transpose();
                    tb.vx(ns + i, q) = v[i];
                    tb.dv(ns + i, q) = gp[0];
                    tb.vy(2 * ns + i, q) = v[i];
                    tb.dv(2 * ns + i, q) = gp[1];
                }
            }
            break;
        }
        case FormulationKind::UltraweakLowestRT: {
            tb.n = 6;
            tb.n_scalar = 3;
            tb.val = Eigen::MatrixXd::Zero(tb.n, nq);
            tb.gx = tb.gy = tb.val;
            tb.vx = tb.vy = tb.dv = Eigen::MatrixXd::Zero(tb.n, nq);
            fill_scalar(1, 0);
            double area = mesh.area(t);
            const auto& T = mesh.triangles()[t];
            for (int i = 0; i < 3; ++i) {
                double sgn = mesh.normal_sign(t, i);
                const Vertex& p = mesh.vertices()[T.v[i]];
                for (int q = 0; q < nq; ++q) {
                    Eigen::Vector2d x = em.to_physical(qr.x(q), qr.y(q));
                    tb.vx(3 + i, q) = sgn * (x[0] - p.x) / (2 * area);
                    tb.vy(3 + i, q) = sgn * (x[1] - p.y) / (2 * area);
                    tb.dv(3 + i, q) = sgn / area;
                }
            }
            break;
        }
    }
    return tb;
}

// RT0 vector value at a reference point of element t, basis function i.
inline Eigen::Vector2d rt0_value(const Mesh& mesh, int t, int i, const Eigen::Vector2d& phys) {
    double area = mesh.area(t);
    const Vertex& p = mesh.vertices()[mesh.triangles()[t].v[i]];
    double sgn = mesh.normal_sign(t, i);
    return sgn / (2 * area) * Eigen::Vector2d(phys[0] - p.x, phys[1] - p.y);
}

}  // namespace detail

/// Local test-space Gram matrix: broken H1 inner product, plus the H(div)
/// product on the vector part for the ultraweak variants (no cross terms).
inline Eigen::MatrixXd gram_matrix(const Mesh& mesh, int t, const Formulation& f) {
    QuadratureRule qr = quadrature(assembly_quad_degree(f));
    auto tb = detail::eval_test_basis(f, mesh, t, qr);
    double detJ = 2 * mesh.area(t);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(tb.n, tb.n);
    for (std::size_t q = 0; q < qr.size(); ++q) {
        double w = qr.weights[q] * detJ;
        auto v = tb.val.col(q), gx = tb.gx.col(q), gy = tb.gy.col(q);
        auto vx = tb.vx.col(q), vy = tb.vy.col(q), dv = tb.dv.col(q);
        G.noalias() += w * (v * v.transpose() + gx * gx.transpose() + gy * gy.transpose() +
                            vx * vx.transpose() + vy * vy.transpose() + dv * dv.transpose());
    }
    return G;
}

namespace detail {

// Appends skeleton-term contributions on edge `le` of element t into B.
// eval_cols(s) must return pairs (local trial column, basis value) at edge
// parameter s measured from the lower-id endpoint.
template <typename RowFn, typename ColFn>
inline void edge_pairing(const Mesh& mesh, int t, int le, int quad_n, RowFn&& row_values,
                         ColFn&& col_values, Eigen::MatrixXd& B, double scale) {
    const auto& T = mesh.triangles()[t];
    int a = T.v[(le + 1) % 3], b = T.v[(le + 2) % 3];
    int lo = std::min(a, b), hi = std::max(a, b);
    const Vertex &plo = mesh.vertices()[lo], &phi = mesh.vertices()[hi];
    double len = std::hypot(phi.x - plo.x, phi.y - plo.y);
    std::vector<double> sp, sw;
    gauss_legendre_01(quad_n, sp, sw);
    for (int q = 0; q < quad_n; ++q) {
        double s = sp[q];
        Eigen::Vector2d phys(plo.x + s * (phi.x - plo.x), plo.y + s * (phi.y - plo.y));
        double w = sw[q] * len * scale;
        auto rows = row_values(phys);
        auto cols = col_values(s);
        for (const auto& [i, ri] : rows)
            for (const auto& [j, cj] : cols) B(i, j) += w * ri * cj;
    }
}

}  // namespace detail

/// Local b-form matrix with columns in the trial layout order. Skeleton flux
/// terms carry the global-orientation sign nu_E . n_T.
inline Eigen::MatrixXd bform(const Mesh& mesh, int t, const Formulation& f,
                             const TrialLayout& layout) {
    QuadratureRule qr = quadrature(assembly_quad_degree(f));
    auto tb = detail::eval_test_basis(f, mesh, t, qr);
    ElementMap em = ElementMap::from(mesh, t);
    double detJ = 2 * mesh.area(t);
    int edge_quad = f.k + 3;

    std::vector<int> comp_local_offsets;
    int n_trial_loc = 0;
    for (const DofMap& m : layout.maps) {
        comp_local_offsets.push_back(n_trial_loc);
        n_trial_loc += int(m.element_dofs[t].size());
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(tb.n, n_trial_loc);

    if (f.kind == FormulationKind::Primal) {
        // (grad u, grad v)_T
        const int ku = f.k;
        const int nu = detail::lagrange_size(ku);
        for (std::size_t q = 0; q < qr.size(); ++q) {
            double w = qr.weights[q] * detJ;
            Eigen::MatrixXd gu = lagrange_gradients(ku, qr.x(q), qr.y(q));
            for (int j = 0; j < nu; ++j) {
                Eigen::Vector2d gj = em.Jinv.transpose() * gu.row(j).transpose();
                for (int i = 0; i < tb.n; ++i)
                    B(i, j) += w * (tb.gx(i, q) * gj[0] + tb.gy(i, q) * gj[1]);
            }
        }
        // -<sigma_hat, v>_{dT}
        const int ks = f.k - 1;
        for (int le = 0; le < 3; ++le) {
            double sgn = mesh.normal_sign(t, le);
            int col0 = comp_local_offsets[1] + le * (ks + 1);
            detail::edge_pairing(
                mesh, t, le, edge_quad,
                [&](const Eigen::Vector2d& phys) {
                    Eigen::Vector2d r = em.to_reference(phys[0], phys[1]);
                    Eigen::VectorXd v = lagrange_values(f.k + 1, r[0], r[1]);
                    std::vector<std::pair<int, double>> rows;
                    for (int i = 0; i < v.size(); ++i) rows.emplace_back(i, v[i]);
                    return rows;
                },
                [&](double s) {
                    Eigen::VectorXd v = lagrange1d_values(ks, s);
                    std::vector<std::pair<int, double>> cols;
                    for (int i = 0; i <= ks; ++i) cols.emplace_back(col0 + i, v[i]);
                    return cols;
                },
                B, -sgn);
        }
        return B;
    }

    // ultraweak variants
    const int ku = (f.kind == FormulationKind::UltraweakAugmented) ? f.k + 1 : f.k;
    const int ks = f.k;        // sigma order
    const int kuh = f.k + 1;   // trace skeleton order
    const int ksh = f.k;       // skeleton flux order
    const int nu = detail::lagrange_size(ku);
    const int nsg = detail::lagrange_size(ks);
    for (std::size_t q = 0; q < qr.size(); ++q) {
        double w = qr.weights[q] * detJ;
        Eigen::VectorXd uval = lagrange_values(ku, qr.x(q), qr.y(q));
        Eigen::VectorXd sval = lagrange_values(ks, qr.x(q), qr.y(q));
        // -(u, div tau)
        for (int j = 0; j < nu; ++j)
            for (int i = 0; i < tb.n; ++i) B(i, j) -= w * tb.dv(i, q) * uval[j];
        // (sigma, tau) - (sigma, grad v); sigma columns blocked by component
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < nsg; ++j) {
                int col = comp_local_offsets[1] + c * nsg + j;
                for (int i = 0; i < tb.n; ++i) {
                    double tau_c = (c == 0) ? tb.vx(i, q) : tb.vy(i, q);
                    double gv_c = (c == 0) ? tb.gx(i, q) : tb.gy(i, q);
                    B(i, col) += w * sval[j] * (tau_c - gv_c);
                }
            }
    }
    // skeleton terms: <u_hat, tau . n_T> + <v, sigma_hat> with sign nu_E . n_T
    for (int le = 0; le < 3; ++le) {
        const auto& T = mesh.triangles()[t];
        int a = T.v[(le + 1) % 3], b = T.v[(le + 2) % 3];
        bool forward = a < b;
        double sgn = mesh.normal_sign(t, le);
        const Edge& E = mesh.edges()[mesh.triangle_edges(t)[le]];
        // outward normal of T on this edge
        Eigen::Vector2d nT = sgn * Eigen::Vector2d(E.nx, E.ny);

        // <u_hat, tau . n_T>: u_hat columns are the two endpoint vertex dofs
        // plus this edge's interior dofs (parameterized from the lower id).
        int uhat0 = comp_local_offsets[2];
        std::vector<int> uhat_cols;
        uhat_cols.push_back(uhat0 + (forward ? (le + 1) % 3 : (le + 2) % 3));  // s = 0
        uhat_cols.push_back(uhat0 + (forward ? (le + 2) % 3 : (le + 1) % 3));  // s = 1
        for (int i = 0; i < kuh - 1; ++i) uhat_cols.push_back(uhat0 + 3 + le * (kuh - 1) + i);
        detail::edge_pairing(
            mesh, t, le, edge_quad,
            [&](const Eigen::Vector2d& phys) {
                std::vector<std::pair<int, double>> rows;
                if (f.kind == FormulationKind::UltraweakLowestRT) {
                    for (int i = 0; i < 3; ++i) {
                        Eigen::Vector2d tau = detail::rt0_value(mesh, t, i, phys);
                        rows.emplace_back(3 + i, tau.dot(nT));
                    }
                } else {
                    Eigen::Vector2d r = em.to_reference(phys[0], phys[1]);
                    Eigen::VectorXd v = lagrange_values(f.k + 2, r[0], r[1]);
                    int ns = detail::lagrange_size(f.k + 2);
                    for (int i = 0; i < ns; ++i) {
                        rows.emplace_back(ns + i, v[i] * nT[0]);
                        rows.emplace_back(2 * ns + i, v[i] * nT[1]);
                    }
                }
                return rows;
            },
            [&](double s) {
                Eigen::VectorXd v = lagrange1d_values(kuh, s);
                std::vector<std::pair<int, double>> cols;
                for (std::size_t i = 0; i < uhat_cols.size(); ++i)
                    cols.emplace_back(uhat_cols[i], v[i]);
                return cols;
            },
            B, 1.0);

        // <v, sigma_hat> with the orientation sign
        int sh0 = comp_local_offsets[3] + le * (ksh + 1);
        int kv = (f.kind == FormulationKind::UltraweakLowestRT) ? 1 : f.k + 2;
        detail::edge_pairing(
            mesh, t, le, edge_quad,
            [&](const Eigen::Vector2d& phys) {
                Eigen::Vector2d r = em.to_reference(phys[0], phys[1]);
                Eigen::VectorXd v = lagrange_values(kv, r[0], r[1]);
                std::vector<std::pair<int, double>> rows;
                for (int i = 0; i < v.size(); ++i) rows.emplace_back(i, v[i]);
                return rows;
            },
            [&](double s) {
                Eigen::VectorXd v = lagrange1d_values(ksh, s);
                std::vector<std::pair<int, double>> cols;
                for (int i = 0; i <= ksh; ++i) cols.emplace_back(sh0 + i, v[i]);
                return cols;
            },
            B, sgn);
    }
    return B;
}

/// Local m-form: pairs the volumetric u0 trial component against the scalar
/// test component; every other column is zero.
inline Eigen::MatrixXd mform(const Mesh& mesh, int t, const Formulation& f,
                             const TrialLayout& layout) {
    QuadratureRule qr = quadrature(assembly_quad_degree(f));
    auto tb = detail::eval_test_basis(f, mesh, t, qr);
    double detJ = 2 * mesh.area(t);
    int n_trial_loc = 0;
    for (const DofMap& m : layout.maps) n_trial_loc += int(m.element_dofs[t].size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(tb.n, n_trial_loc);
    int ku = layout.maps[0].desc.order;
    int nu = detail::lagrange_size(ku);
    for (std::size_t q = 0; q < qr.size(); ++q) {
        double w = qr.weights[q] * detJ;
        Eigen::VectorXd uval = lagrange_values(ku, qr.x(q), qr.y(q));
        for (int j = 0; j < nu; ++j)
            for (int i = 0; i < tb.n_scalar; ++i) M(i, j) += w * tb.val(i, q) * uval[j];
    }
    return M;
}

inline ElementBlocks element_blocks(const Mesh& mesh, int t, const Formulation& f,
                                    const TrialLayout& layout) {
    ElementBlocks eb;
    eb.G = gram_matrix(mesh, t, f);
    eb.B = bform(mesh, t, f, layout);
    eb.M = mform(mesh, t, f, layout);
    for (std::size_t c = 0; c < layout.maps.size(); ++c)
        for (int dof : layout.maps[c].element_dofs[t])
            eb.trial_dofs.push_back(dof < 0 ? -1 : dof + layout.offsets[c]);
    return eb;
}

/// Assembles the condensed pencil S = B^T G^-1 B, N = B^T G^-1 M by element
/// loops with local dense solves; G is block diagonal because the test space
/// is broken. Element blocks are retained for residual recovery.
inline AssembledPencil condense_and_assemble(const Mesh& mesh, const Formulation& f) {
    AssembledPencil pencil;
    pencil.form = f;
    pencil.mesh = &mesh;
    pencil.layout = build_trial_layout(f, mesh);
    pencil.n_trial = pencil.layout.n_trial;
    pencil.blocks.reserve(mesh.n_triangles());

    using Trip = Eigen::Triplet<double>;
    std::vector<Trip> ts, tn;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        ElementBlocks eb = element_blocks(mesh, t, f, pencil.layout);
        Eigen::LLT<Eigen::MatrixXd> llt(eb.G);
        if (llt.info() != Eigen::Success)
            throw AssemblyError("singular test Gram matrix on element " + std::to_string(t));
        Eigen::MatrixXd GiB = llt.solve(eb.B);
        Eigen::MatrixXd Sloc = eb.B.transpose() * GiB;
        Eigen::MatrixXd Nloc = eb.B.transpose() * llt.solve(eb.M);
        const auto& dofs = eb.trial_dofs;
        for (std::size_t i = 0; i < dofs.size(); ++i) {
            if (dofs[i] < 0) continue;
            for (std::size_t j = 0; j < dofs.size(); ++j) {
                if (dofs[j] < 0) continue;
                ts.emplace_back(dofs[i], dofs[j], Sloc(i, j));
                if (Nloc(i, j) != 0.0) tn.emplace_back(dofs[i], dofs[j], Nloc(i, j));
            }
        }
        pencil.blocks.push_back(std::move(eb));
    }
    auto key = [](const Trip& a, const Trip& b) {
        return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
    };
    std::stable_sort(ts.begin(), ts.end(), key);
    std::stable_sort(tn.begin(), tn.end(), key);
    pencil.S.resize(pencil.n_trial, pencil.n_trial);
    pencil.N.resize(pencil.n_trial, pencil.n_trial);
    pencil.S.setFromTriplets(ts.begin(), ts.end());
    pencil.N.setFromTriplets(tn.begin(), tn.end());
    return pencil;
}

/// Element-local residual recovery: eps_T = G_T^-1 (lambda M_T y_T - B_T y_T).
inline ResidualField recover_residual(const AssembledPencil& pencil, const Eigen::VectorXd& y,
                                      double lambda) {
    if (y.size() != pencil.n_trial)
        throw std::invalid_argument("recover_residual: trial vector size mismatch");
    ResidualField res;
    res.element_coeffs.reserve(pencil.blocks.size());
    for (const ElementBlocks& eb : pencil.blocks) {
        Eigen::VectorXd yloc(eb.trial_dofs.size());
        for (std::size_t i = 0; i < eb.trial_dofs.size(); ++i)
            yloc[i] = eb.trial_dofs[i] < 0 ? 0.0 : y[eb.trial_dofs[i]];
        Eigen::VectorXd rhs = lambda * (eb.M * yloc) - eb.B * yloc;
        res.element_coeffs.push_back(Eigen::LLT<Eigen::MatrixXd>(eb.G).solve(rhs));
    }
    return res;
}

/// L2 norm of the volumetric u0 component of a trial vector.
inline double u0_l2_norm(const AssembledPencil& pencil, const Eigen::VectorXd& y) {
    const DofMap& um = pencil.layout.u0_map();
    const Mesh& mesh = *pencil.mesh;
    int k = um.desc.order;
    QuadratureRule qr = quadrature(std::max(1, 2 * k));
    double acc = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        double detJ = 2 * mesh.area(t);
        const auto& dofs = um.element_dofs[t];
        for (std::size_t q = 0; q < qr.size(); ++q) {
            Eigen::VectorXd v = lagrange_values(k, qr.x(q), qr.y(q));
            double uval = 0;
            for (std::size_t i = 0; i < dofs.size(); ++i)
                if (dofs[i] >= 0) uval += y[dofs[i] + pencil.layout.offsets[0]] * v[i];
            acc += qr.weights[q] * detJ * uval * uval;
        }
    }
    return std::sqrt(acc);
}

/// The u0 component as a standalone FE function on the pencil's mesh.
inline FEFunction extract_u0(const AssembledPencil& pencil, const Eigen::VectorXd& y) {
    FEFunction u(pencil.layout.u0_map());
    u.coeffs = y.segment(pencil.layout.offsets[0], pencil.layout.maps[0].n_global);
    return u;
}

/// Coordinate-triplet text dump (`row col value`) of a sparse matrix.
inline void dump_pencil_matrix(std::ostream& os, const Eigen::SparseMatrix<double>& A) {
    for (int c = 0; c < A.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, c); it; ++it) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", long(it.row()), long(it.col()),
                          it.value());
            os << buf;
        }
}

}  // namespace dpg
