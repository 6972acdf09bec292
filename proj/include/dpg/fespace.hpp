// Reference bases, global DOF maps, and piecewise-polynomial evaluation for
// the discrete space families used by the primal and ultraweak formulations.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dpg/mesh.hpp"
#include "dpg/quadrature.hpp"

namespace dpg {

enum class Family {
    ContinuousLagrangeZeroBC,  // S^k_0(Omega_h)
    BrokenLagrange,            // P_k(Omega_h), scalar or 2-vector
    SkeletonPk,                // P_k on every skeleton edge
    TraceSkeleton,             // traces of S^k_0 (zero on the boundary)
    BrokenRT0,                 // element-wise lowest-order Raviart-Thomas
    CrouzeixRaviartZeroBC,
};

struct SpaceDescriptor {
    Family family;
    int order = 1;
    int components = 1;

    static SpaceDescriptor continuous_lagrange(int k) {
        if (k < 1) throw std::invalid_argument("continuous Lagrange needs k >= 1");
        return {Family::ContinuousLagrangeZeroBC, k, 1};
    }
    static SpaceDescriptor broken_lagrange(int k, int components = 1) {
        if (k < 0 || (components != 1 && components != 2))
            throw std::invalid_argument("bad broken Lagrange descriptor");
        return {Family::BrokenLagrange, k, components};
    }
    static SpaceDescriptor skeleton_pk(int k) {
        if (k < 0) throw std::invalid_argument("skeleton order must be >= 0");
        return {Family::SkeletonPk, k, 1};
    }
    static SpaceDescriptor trace_skeleton(int k) {
        if (k < 1) throw std::invalid_argument("trace skeleton needs k >= 1");
        return {Family::TraceSkeleton, k, 1};
    }
    static SpaceDescriptor broken_rt0() { return {Family::BrokenRT0, 0, 2}; }
    static SpaceDescriptor crouzeix_raviart() { return {Family::CrouzeixRaviartZeroBC, 1, 1}; }
};

namespace detail {

inline int lagrange_size(int k) { return (k + 1) * (k + 2) / 2; }

// Node lattice of P_k on the reference triangle in the element-local order:
// vertices, edge nodes (edge i opposite vertex i, walked from vertex i+1 to
// vertex i+2), interior nodes. k = 0 uses the barycenter.
inline std::vector<std::array<double, 2>> lagrange_nodes(int k) {
    std::vector<std::array<double, 2>> nodes;
    if (k == 0) {
        nodes.push_back({1.0 / 3.0, 1.0 / 3.0});
        return nodes;
    }
    nodes.push_back({0, 0});
    nodes.push_back({1, 0});
    nodes.push_back({0, 1});
    auto lerp = [&](std::array<double, 2> a, std::array<double, 2> b, double t) {
        return std::array<double, 2>{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
    };
    const std::array<std::array<double, 2>, 3> vx = {{{0, 0}, {1, 0}, {0, 1}}};
    for (int e = 0; e < 3; ++e)
        for (int i = 1; i < k; ++i)
            nodes.push_back(lerp(vx[(e + 1) % 3], vx[(e + 2) % 3], double(i) / k));
    for (int i = 1; i < k; ++i)
        for (int j = 1; i + j < k; ++j)
            nodes.push_back({double(i) / k, double(j) / k});
    return nodes;
}

// Monomial exponents (a,b), total degree ascending.
inline std::vector<std::array<int, 2>> monomials(int k) {
    std::vector<std::array<int, 2>> m;
    for (int d = 0; d <= k; ++d)
        for (int a = d; a >= 0; --a) m.push_back({a, d - a});
    return m;
}

// Coefficients of the nodal Lagrange basis in the monomial basis:
// column j holds the coefficients of shape function j.
inline const Eigen::MatrixXd& lagrange_coefficients(int k) {
    static std::map<int, Eigen::MatrixXd> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    auto nodes = lagrange_nodes(k);
    auto mono = monomials(k);
    const int n = lagrange_size(k);
    Eigen::MatrixXd V(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            V(i, j) = std::pow(nodes[i][0], mono[j][0]) * std::pow(nodes[i][1], mono[j][1]);
    return cache.emplace(k, V.inverse()).first->second;
}

inline Eigen::VectorXd monomial_values(int k, double x, double y) {
    auto mono = monomials(k);
    Eigen::VectorXd m(mono.size());
    for (std::size_t j = 0; j < mono.size(); ++j)
        m[j] = std::pow(x, mono[j][0]) * std::pow(y, mono[j][1]);
    return m;
}

inline Eigen::MatrixXd monomial_gradients(int k, double x, double y) {
    auto mono = monomials(k);
    Eigen::MatrixXd g(mono.size(), 2);
    for (std::size_t j = 0; j < mono.size(); ++j) {
        int a = mono[j][0], b = mono[j][1];
        g(j, 0) = a == 0 ? 0.0 : a * std::pow(x, a - 1) * std::pow(y, b);
        g(j, 1) = b == 0 ? 0.0 : b * std::pow(x, a) * std::pow(y, b - 1);
    }
    return g;
}

}  // namespace detail

/// Values of all P_k shape functions at a reference point.
inline Eigen::VectorXd lagrange_values(int k, double x, double y) {
    return detail::lagrange_coefficients(k).transpose() * detail::monomial_values(k, x, y);
}

/// Reference gradients of all P_k shape functions, one row per function.
inline Eigen::MatrixXd lagrange_gradients(int k, double x, double y) {
    return detail::lagrange_coefficients(k).transpose() * detail::monomial_gradients(k, x, y);
}

/// Crouzeix-Raviart basis: function i equals 1 at the midpoint of edge i
/// (opposite vertex i) and vanishes at the other midpoints.
inline Eigen::Vector3d cr_values(double x, double y) {
    double l0 = 1 - x - y;
    return Eigen::Vector3d(1 - 2 * l0, 1 - 2 * x, 1 - 2 * y);
}

inline Eigen::Matrix<double, 3, 2> cr_gradients() {
    Eigen::Matrix<double, 3, 2> g;
    g << 2, 2, -2, 0, 0, -2;
    return g;
}

/// 1D equispaced Lagrange basis of degree k on [0,1]; nodes ordered
/// endpoint 0, endpoint 1, then interior nodes i/k.
inline Eigen::VectorXd lagrange1d_values(int k, double t) {
    if (k == 0) return Eigen::VectorXd::Ones(1);
    std::vector<double> nodes;
    nodes.push_back(0.0);
    nodes.push_back(1.0);
    for (int i = 1; i < k; ++i) nodes.push_back(double(i) / k);
    Eigen::VectorXd vals(k + 1);
    for (int i = 0; i <= k; ++i) {
        double v = 1.0;
        for (int j = 0; j <= k; ++j)
            if (j != i) v *= (t - nodes[j]) / (nodes[i] - nodes[j]);
        vals[i] = v;
    }
    return vals;
}

enum class BasisWhat { Value, Gradient, Divergence };

/// Reference-element basis evaluation under the spec'd conventions. RT0 uses
/// the unit-integral-flux scaling, so every divergence equals 1/|T_ref| = 2.
inline Eigen::MatrixXd basis_eval(const SpaceDescriptor& d, double x, double y, BasisWhat what) {
    if (x < -1e-12 || y < -1e-12 || x + y > 1 + 1e-12)
        throw std::invalid_argument("basis_eval: point outside the reference triangle");
    switch (d.family) {
        case Family::ContinuousLagrangeZeroBC:
        case Family::BrokenLagrange:
            if (what == BasisWhat::Value) return lagrange_values(d.order, x, y);
            if (what == BasisWhat::Gradient) return lagrange_gradients(d.order, x, y);
            break;
        case Family::CrouzeixRaviartZeroBC:
            if (what == BasisWhat::Value) return cr_values(x, y);
            if (what == BasisWhat::Gradient) return cr_gradients();
            break;
        case Family::BrokenRT0: {
            // phi_i = (x - p_i) / (2 |T_ref|), p_i the vertex opposite edge i
            const std::array<std::array<double, 2>, 3> p = {{{0, 0}, {1, 0}, {0, 1}}};
            if (what == BasisWhat::Value) {
                Eigen::MatrixXd v(3, 2);
                for (int i = 0; i < 3; ++i) {
                    v(i, 0) = (x - p[i][0]);
                    v(i, 1) = (y - p[i][1]);
                }
                return v;
            }
            if (what == BasisWhat::Divergence) return Eigen::MatrixXd::Constant(3, 1, 2.0);
            break;
        }
        case Family::SkeletonPk:
        case Family::TraceSkeleton:
            break;  // edge-supported families have no triangle-local basis
    }
    throw std::invalid_argument("basis_eval: unsupported family/what combination");
}

/// Global DOF enumeration for one space family on one mesh. Constrained
/// (homogeneous Dirichlet) DOFs appear as -1 in the element lists and are
/// not counted in n_global.
struct DofMap {
    SpaceDescriptor desc;
    const Mesh* mesh = nullptr;
    int n_global = 0;
    std::vector<std::vector<int>> element_dofs;
    // entity per global dof: 0 vertex, 1 edge, 2 element interior
    std::vector<int> dof_entity;

    int local_size() const { return element_dofs.empty() ? 0 : int(element_dofs[0].size()); }
};

inline DofMap build_dof_map(const SpaceDescriptor& d, const Mesh& mesh) {
    DofMap dm;
    dm.desc = d;
    dm.mesh = &mesh;
    const int nT = mesh.n_triangles(), nE = mesh.n_edges(), nV = mesh.n_vertices();
    const int k = d.order;

    switch (d.family) {
        case Family::ContinuousLagrangeZeroBC: {
            std::vector<int> vdof(nV, -1), edof(nE, -1);
            int next = 0;
            for (int v = 0; v < nV; ++v)
                if (!mesh.vertex_on_boundary(v)) {
                    vdof[v] = next++;
                    dm.dof_entity.push_back(0);
                }
            for (int e = 0; e < nE; ++e)
                if (!mesh.edges()[e].boundary && k > 1) {
                    edof[e] = next;
                    next += k - 1;
                    for (int i = 0; i < k - 1; ++i) dm.dof_entity.push_back(1);
                }
            int n_int = (k - 1) * (k - 2) / 2;
            dm.element_dofs.assign(nT, {});
            for (int t = 0; t < nT; ++t) {
                auto& loc = dm.element_dofs[t];
                const auto& T = mesh.triangles()[t];
                for (int i = 0; i < 3; ++i) loc.push_back(vdof[T.v[i]]);
                for (int le = 0; le < 3; ++le) {
                    int e = mesh.triangle_edges(t)[le];
                    int a = T.v[(le + 1) % 3], b = T.v[(le + 2) % 3];
                    bool forward = a < b;  // global order runs lower -> higher id
                    for (int i = 1; i < k; ++i) {
                        int pos = forward ? i - 1 : k - 1 - i;
                        loc.push_back(edof[e] < 0 ? -1 : edof[e] + pos);
                    }
                }
                for (int i = 0; i < n_int; ++i) {
                    loc.push_back(next++);
                    dm.dof_entity.push_back(2);
                }
            }
            dm.n_global = next;
            break;
        }
        case Family::BrokenLagrange: {
            int nloc = detail::lagrange_size(k);
            dm.element_dofs.assign(nT, {});
            int next = 0;
            for (int t = 0; t < nT; ++t) {
                for (int c = 0; c < d.components; ++c)
                    for (int i = 0; i < nloc; ++i) {
                        dm.element_dofs[t].push_back(next++);
                        dm.dof_entity.push_back(2);
                    }
            }
            dm.n_global = next;
            break;
        }
        case Family::SkeletonPk: {
            dm.n_global = (k + 1) * nE;
            dm.dof_entity.assign(dm.n_global, 1);
            dm.element_dofs.assign(nT, {});
            for (int t = 0; t < nT; ++t)
                for (int le = 0; le < 3; ++le) {
                    int e = mesh.triangle_edges(t)[le];
                    for (int i = 0; i <= k; ++i) dm.element_dofs[t].push_back(e * (k + 1) + i);
                }
            break;
        }
        case Family::TraceSkeleton: {
            std::vector<int> vdof(nV, -1), edof(nE, -1);
            int next = 0;
            for (int v = 0; v < nV; ++v)
                if (!mesh.vertex_on_boundary(v)) {
                    vdof[v] = next++;
                    dm.dof_entity.push_back(0);
                }
            for (int e = 0; e < nE; ++e)
                if (!mesh.edges()[e].boundary && k > 1) {
                    edof[e] = next;
                    next += k - 1;
                    for (int i = 0; i < k - 1; ++i) dm.dof_entity.push_back(1);
                }
            dm.element_dofs.assign(nT, {});
            for (int t = 0; t < nT; ++t) {
                auto& loc = dm.element_dofs[t];
                const auto& T = mesh.triangles()[t];
                for (int i = 0; i < 3; ++i) loc.push_back(vdof[T.v[i]]);
                for (int le = 0; le < 3; ++le) {
                    int e = mesh.triangle_edges(t)[le];
                    for (int i = 0; i < k - 1; ++i)
                        loc.push_back(edof[e] < 0 ? -1 : edof[e] + i);
                }
            }
            dm.n_global = next;
            break;
        }
        case Family::BrokenRT0: {
            dm.n_global = 3 * nT;
            dm.dof_entity.assign(dm.n_global, 2);
            dm.element_dofs.assign(nT, {});
            for (int t = 0; t < nT; ++t)
                for (int i = 0; i < 3; ++i) dm.element_dofs[t].push_back(3 * t + i);
            break;
        }
        case Family::CrouzeixRaviartZeroBC: {
            std::vector<int> edof(nE, -1);
            int next = 0;
            for (int e = 0; e < nE; ++e)
                if (!mesh.edges()[e].boundary) {
                    edof[e] = next++;
                    dm.dof_entity.push_back(1);
                }
            dm.element_dofs.assign(nT, {});
            for (int t = 0; t < nT; ++t)
                for (int le = 0; le < 3; ++le)
                    dm.element_dofs[t].push_back(edof[mesh.triangle_edges(t)[le]]);
            dm.n_global = next;
            break;
        }
    }
    return dm;
}

inline int dof_count(const SpaceDescriptor& d, const Mesh& mesh) {
    return build_dof_map(d, mesh).n_global;
}

/// Affine map data of a physical triangle.
struct ElementMap {
    Eigen::Matrix2d J;     // reference -> physical Jacobian
    Eigen::Matrix2d Jinv;  // inverse
    double detJ = 0;       // = 2 |T|
    Eigen::Vector2d origin;

    static ElementMap from(const Mesh& mesh, int t) {
        const auto& T = mesh.triangles()[t];
        const Vertex &a = mesh.vertices()[T.v[0]], &b = mesh.vertices()[T.v[1]],
                     &c = mesh.vertices()[T.v[2]];
        ElementMap em;
        em.origin = {a.x, a.y};
        em.J << b.x - a.x, c.x - a.x, b.y - a.y, c.y - a.y;
        em.detJ = em.J.determinant();
        em.Jinv = em.J.inverse();
        return em;
    }

    Eigen::Vector2d to_physical(double x, double y) const {
        return origin + J * Eigen::Vector2d(x, y);
    }
    Eigen::Vector2d to_reference(double px, double py) const {
        return Jinv * (Eigen::Vector2d(px, py) - origin);
    }
};

struct FEFunction {
    const DofMap* map = nullptr;
    Eigen::VectorXd coeffs;

    FEFunction() = default;
    explicit FEFunction(const DofMap& m) : map(&m), coeffs(Eigen::VectorXd::Zero(m.n_global)) {}
};

namespace detail {

inline std::array<double, 3> barycentric(const Mesh& mesh, int t, double px, double py) {
    ElementMap em = ElementMap::from(mesh, t);
    Eigen::Vector2d r = em.to_reference(px, py);
    return {1 - r[0] - r[1], r[0], r[1]};
}

}  // namespace detail

struct PointLocation {
    int triangle = -1;
    double xref = 0, yref = 0;
};

/// Point location by walking across edge neighbors from a seed triangle,
/// falling back to a full scan in nonconvex corners. The slit sides are
/// disambiguated by nudging points on the cut toward side_hint.
inline PointLocation locate_point(const Mesh& mesh, double px, double py, int seed = 0,
                                  int side_hint = +1) {
    if (mesh.domain() == DomainSpec::Slit && std::abs(py) < 1e-13 && px > 1e-13 && px < 1.0 + 1e-13)
        py = side_hint >= 0 ? 1e-10 : -1e-10;  // must exceed the walk tolerance below
    const double tol = 1e-11;
    int t = (seed >= 0 && seed < mesh.n_triangles()) ? seed : 0;
    int steps = 0, limit = 2 * mesh.n_triangles() + 8;
    while (steps++ < limit) {
        auto l = detail::barycentric(mesh, t, px, py);
        int worst = 0;
        for (int i = 1; i < 3; ++i)
            if (l[i] < l[worst]) worst = i;
        if (l[worst] >= -tol) return {t, l[1], l[2]};
        int nb = mesh.neighbor(t, worst);
        if (nb < 0) break;  // hit the boundary: fall through to the scan
        t = nb;
    }
    int best = -1;
    double best_l = -1e300;
    for (int tt = 0; tt < mesh.n_triangles(); ++tt) {
        auto l = detail::barycentric(mesh, tt, px, py);
        double m = std::min({l[0], l[1], l[2]});
        if (m > best_l) {
            best_l = m;
            best = tt;
        }
    }
    if (best_l < -1e-9) throw std::out_of_range("locate_point: point outside the domain");
    auto l = detail::barycentric(mesh, best, px, py);
    return {best, l[1], l[2]};
}

namespace detail {

inline Eigen::VectorXd local_coeffs(const FEFunction& f, int t) {
    const auto& dofs = f.map->element_dofs[t];
    Eigen::VectorXd c(dofs.size());
    for (std::size_t i = 0; i < dofs.size(); ++i) c[i] = dofs[i] < 0 ? 0.0 : f.coeffs[dofs[i]];
    return c;
}

}  // namespace detail

/// Value of a volumetric FE function at a physical point (scalar families
/// return one entry, vector families two).
inline Eigen::VectorXd evaluate(const FEFunction& f, double px, double py, int seed = 0,
                                int side_hint = +1) {
    const DofMap& dm = *f.map;
    PointLocation loc = locate_point(*dm.mesh, px, py, seed, side_hint);
    Eigen::VectorXd c = detail::local_coeffs(f, loc.triangle);
    switch (dm.desc.family) {
        case Family::ContinuousLagrangeZeroBC: {
            Eigen::VectorXd v = lagrange_values(dm.desc.order, loc.xref, loc.yref);
            return Eigen::VectorXd::Constant(1, v.dot(c));
        }
        case Family::BrokenLagrange: {
            Eigen::VectorXd v = lagrange_values(dm.desc.order, loc.xref, loc.yref);
            int n = v.size();
            Eigen::VectorXd out(dm.desc.components);
            for (int comp = 0; comp < dm.desc.components; ++comp)
                out[comp] = v.dot(c.segment(comp * n, n));
            return out;
        }
        case Family::CrouzeixRaviartZeroBC: {
            Eigen::VectorXd v = cr_values(loc.xref, loc.yref);
            return Eigen::VectorXd::Constant(1, v.dot(c));
        }
        default:
            throw std::invalid_argument("evaluate: family has no volumetric point values");
    }
}

/// Broken gradient of a scalar FE function at a physical point.
inline Eigen::Vector2d evaluate_gradient(const FEFunction& f, double px, double py, int seed = 0,
                                         int side_hint = +1) {
    const DofMap& dm = *f.map;
    PointLocation loc = locate_point(*dm.mesh, px, py, seed, side_hint);
    ElementMap em = ElementMap::from(*dm.mesh, loc.triangle);
    Eigen::VectorXd c = detail::local_coeffs(f, loc.triangle);
    Eigen::MatrixXd gref;
    switch (dm.desc.family) {
        case Family::ContinuousLagrangeZeroBC:
        case Family::BrokenLagrange:
            gref = lagrange_gradients(dm.desc.order, loc.xref, loc.yref);
            break;
        case Family::CrouzeixRaviartZeroBC:
            gref = cr_gradients();
            break;
        default:
            throw std::invalid_argument("evaluate_gradient: unsupported family");
    }
    if (dm.desc.components != 1 && dm.desc.family == Family::BrokenLagrange)
        throw std::invalid_argument("evaluate_gradient: scalar functions only");
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (int i = 0; i < gref.rows(); ++i)
        g += c[i] * (em.Jinv.transpose() * gref.row(i).transpose());
    return g;
}

/// Nodal interpolation of a callable (x,y) -> double for the nodal scalar
/// families; used by tests and reference constructions.
template <typename F>
inline FEFunction interpolate(const DofMap& dm, F&& f) {
    FEFunction out(dm);
    const Mesh& mesh = *dm.mesh;
    const int k = dm.desc.order;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        ElementMap em = ElementMap::from(mesh, t);
        const auto& dofs = dm.element_dofs[t];
        switch (dm.desc.family) {
            case Family::ContinuousLagrangeZeroBC:
            case Family::BrokenLagrange: {
                auto nodes = detail::lagrange_nodes(k);
                int nloc = int(nodes.size());
                for (int i = 0; i < nloc; ++i) {
                    Eigen::Vector2d p = em.to_physical(nodes[i][0], nodes[i][1]);
                    if (dofs[i] >= 0) out.coeffs[dofs[i]] = f(p[0], p[1]);
                }
                break;
            }
            case Family::CrouzeixRaviartZeroBC: {
                const std::array<std::array<double, 2>, 3> mid = {
                    {{0.5, 0.5}, {0.0, 0.5}, {0.5, 0.0}}};
                for (int i = 0; i < 3; ++i) {
                    Eigen::Vector2d p = em.to_physical(mid[i][0], mid[i][1]);
                    if (dofs[i] >= 0) out.coeffs[dofs[i]] = f(p[0], p[1]);
                }
                break;
            }
            default:
                throw std::invalid_argument("interpolate: unsupported family");
        }
    }
    return out;
}

}  // namespace dpg
