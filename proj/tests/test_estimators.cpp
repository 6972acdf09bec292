#include <catch2/catch_amalgamated.hpp>

#include "dpg/estimators.hpp"
#include "oracles.hpp"

using namespace dpg;

namespace {

// Convenience: a solved eigenpair plus its residual on a given mesh.
struct Solved {
    AssembledPencil pencil;
    EigenPair pair;
    ResidualField residual;
};

Solved solve_on(const Mesh& mesh, const Formulation& f) {
    Solved s;
    s.pencil = condense_and_assemble(mesh, f);
    SolverConfig cfg;
    s.pair = smallest_eigenpairs(s.pencil, cfg)[0];
    s.residual = recover_residual(s.pencil, s.pair.y, s.pair.lambda);
    return s;
}

// Residual whose scalar component is linear per element with the prescribed
// gradients; the primal k=1 test space is P2, so the coefficients are nodal
// values of the linear functions.
ResidualField linear_residual(const Mesh& mesh, const std::vector<Eigen::Vector2d>& grads) {
    ResidualField res;
    auto nodes = dpg::detail::lagrange_nodes(2);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        ElementMap em = ElementMap::from(mesh, t);
        Eigen::VectorXd c(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            Eigen::Vector2d p = em.to_physical(nodes[i][0], nodes[i][1]);
            c[int(i)] = grads[t].dot(p);
        }
        res.element_coeffs.push_back(c);
    }
    return res;
}

}  // namespace

TEST_CASE("zero residual gives a zero indicator field") {
    Mesh m = refine_uniform(build_domain(DomainSpec::UnitSquare));
    AssembledPencil pencil = condense_and_assemble(m, Formulation::primal(1));
    ResidualField res = recover_residual(pencil, Eigen::VectorXd::Zero(pencil.n_trial), 1.0);
    IndicatorField ind = eta_natural(res, pencil);
    CHECK(ind.global == 0.0);
    for (double e : ind.eta_t) CHECK(e == 0.0);
}

TEST_CASE("constant residual: eta_T squared equals c^2 |T|") {
    Mesh m = refine_uniform(build_domain(DomainSpec::LShape));
    AssembledPencil pencil = condense_and_assemble(m, Formulation::primal(1));
    const double c = 0.75;
    ResidualField res;
    for (int t = 0; t < m.n_triangles(); ++t)
        res.element_coeffs.push_back(Eigen::VectorXd::Constant(dpg::detail::lagrange_size(2), c));
    IndicatorField ind = eta_natural(res, pencil);
    for (int t = 0; t < m.n_triangles(); ++t)
        CHECK(ind.eta_t[t] * ind.eta_t[t] == Catch::Approx(c * c * m.area(t)).epsilon(1e-12));
}

TEST_CASE("global eta equals the V-norm by direct fine quadrature") {
    Mesh m = refine_uniform(build_domain(DomainSpec::UnitSquare));
    AssembledPencil pencil = condense_and_assemble(m, Formulation::primal(1));
    oracle::Rng rng(2024);
    ResidualField res;
    for (int t = 0; t < m.n_triangles(); ++t) {
        Eigen::VectorXd c(dpg::detail::lagrange_size(2));
        for (int i = 0; i < c.size(); ++i) c[i] = rng();
        res.element_coeffs.push_back(c);
    }
    IndicatorField ind = eta_natural(res, pencil);
    // Oracle: integrate eps^2 + |grad eps|^2 with an independent high rule.
    QuadratureRule qr = quadrature(10);
    double acc = 0;
    for (int t = 0; t < m.n_triangles(); ++t) {
        ElementMap em = ElementMap::from(m, t);
        const Eigen::VectorXd& c = res.element_coeffs[t];
        for (std::size_t q = 0; q < qr.size(); ++q) {
            Eigen::VectorXd v = lagrange_values(2, qr.x(q), qr.y(q));
            Eigen::MatrixXd g = lagrange_gradients(2, qr.x(q), qr.y(q));
            double val = v.dot(c);
            Eigen::Vector2d grad = Eigen::Vector2d::Zero();
            for (int i = 0; i < g.rows(); ++i)
                grad += c[i] * (em.Jinv.transpose() * g.row(i).transpose());
            acc += qr.weights[q] * 2 * m.area(t) * (val * val + grad.squaredNorm());
        }
    }
    CHECK(ind.global == Catch::Approx(std::sqrt(acc)).epsilon(1e-12));
    // localization consistency: global^2 = sum of eta_T^2
    double s = 0;
    for (double e : ind.eta_t) s += e * e;
    CHECK(ind.global * ind.global == Catch::Approx(s).epsilon(1e-12));
}

TEST_CASE("eta_bar is restricted to the lowest-order primal formulation") {
    Mesh m = refine_uniform(build_domain(DomainSpec::UnitSquare));
    {
        AssembledPencil pencil = condense_and_assemble(m, Formulation::primal(2));
        ResidualField res = recover_residual(pencil, Eigen::VectorXd::Zero(pencil.n_trial), 1.0);
        CHECK_THROWS_AS(eta_bar(res, pencil), std::invalid_argument);
    }
    {
        AssembledPencil pencil = condense_and_assemble(m, Formulation::ultraweak(0));
        ResidualField res = recover_residual(pencil, Eigen::VectorXd::Zero(pencil.n_trial), 1.0);
        CHECK_THROWS_AS(eta_bar(res, pencil), std::invalid_argument);
        CHECK_THROWS_AS(eta_tilde(res, pencil), std::invalid_argument);
    }
}

TEST_CASE("eta_bar on the two-element square with prescribed gradients") {
    Mesh m = build_domain(DomainSpec::UnitSquare);
    AssembledPencil pencil = condense_and_assemble(m, Formulation::primal(1));
    Eigen::Vector2d g1(1.0, -0.5), g2(0.25, 2.0);

    // equal gradients: only the boundary edges contribute
    {
        ResidualField res = linear_residual(m, {g1, g1});
        IndicatorField ind = eta_bar(res, pencil);
        for (int t = 0; t < 2; ++t) {
            double want = std::sqrt(m.area(t)) * 2.0 * g1.squaredNorm();  // two unit edges
            CHECK(ind.eta_t[t] * ind.eta_t[t] == Catch::Approx(want).epsilon(1e-12));
        }
    }

    // distinct gradients: the shared diagonal of length sqrt(2) adds the
    // jump term |g1 - g2|^2 to both elements
    {
        ResidualField res = linear_residual(m, {g1, g2});
        IndicatorField ind = eta_bar(res, pencil);
        double L = std::sqrt(2.0);
        std::array<Eigen::Vector2d, 2> g = {g1, g2};
        for (int t = 0; t < 2; ++t) {
            double want = std::sqrt(m.area(t)) *
                          (L * (g1 - g2).squaredNorm() + 2.0 * g[t].squaredNorm());
            CHECK(ind.eta_t[t] * ind.eta_t[t] == Catch::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("eta_bar on an L-shape solve matches an independent edge quadrature") {
    Mesh m = refine_uniform(refine_uniform(build_domain(DomainSpec::LShape)));
    Solved s = solve_on(m, Formulation::primal(1));
    IndicatorField ind = eta_bar(s.residual, s.pencil);

    // Oracle: per-edge Simpson integration of the squared gradient jump of
    // the P2 residual (integrand degree 2, Simpson is exact).
    std::vector<double> J(m.n_edges(), 0.0);
    auto grad_at = [&](int t, const Eigen::Vector2d& phys) {
        ElementMap em = ElementMap::from(m, t);
        Eigen::Vector2d r = em.to_reference(phys[0], phys[1]);
        Eigen::MatrixXd g = lagrange_gradients(2, r[0], r[1]);
        Eigen::Vector2d out = Eigen::Vector2d::Zero();
        for (int i = 0; i < g.rows(); ++i)
            out += s.residual.element_coeffs[t][i] * (em.Jinv.transpose() * g.row(i).transpose());
        return out;
    };
    for (int e = 0; e < m.n_edges(); ++e) {
        const Edge& E = m.edges()[e];
        const Vertex &a = m.vertices()[E.v[0]], &b = m.vertices()[E.v[1]];
        J[e] = E.length * oracle::simpson_01([&](double t01) {
            Eigen::Vector2d phys(a.x + t01 * (b.x - a.x), a.y + t01 * (b.y - a.y));
            Eigen::Vector2d jump = grad_at(E.tri[0], phys);
            if (E.tri[1] >= 0) jump -= grad_at(E.tri[1], phys);
            return jump.squaredNorm();
        });
    }
    for (int t = 0; t < m.n_triangles(); ++t) {
        double want = 0;
        for (int e : m.triangle_edges(t)) want += J[e];
        want *= std::sqrt(m.area(t));
        CHECK(ind.eta_t[t] * ind.eta_t[t] == Catch::Approx(want).epsilon(1e-10).margin(1e-14));
    }
}

TEST_CASE("eta_tilde: both jump forms agree at a converged eigenpair") {
    for (DomainSpec d : {DomainSpec::LShape, DomainSpec::Slit}) {
        Mesh m = build_domain(d);
        for (int s = 0; s < 3; ++s) m = refine_uniform(m);
        Solved s = solve_on(m, Formulation::ultraweak_lowest_rt());
        EtaTildeResult r = eta_tilde(s.residual, s.pencil);
        CHECK(r.indicator.global > 0);
        CHECK(std::abs(r.indicator.global - r.tau_form_global) <= 1e-8 * r.indicator.global);
    }
}

TEST_CASE("eta_tilde vanishes for a zero residual") {
    Mesh m = refine_uniform(build_domain(DomainSpec::LShape));
    AssembledPencil pencil = condense_and_assemble(m, Formulation::ultraweak_lowest_rt());
    ResidualField res = recover_residual(pencil, Eigen::VectorXd::Zero(pencil.n_trial), 1.0);
    EtaTildeResult r = eta_tilde(res, pencil);
    CHECK(r.indicator.global == 0.0);
    CHECK(r.tau_form_global == 0.0);
}

TEST_CASE("energy error of a pair against itself is zero") {
    Mesh m = build_domain(DomainSpec::UnitSquare);
    for (int s = 0; s < 4; ++s) m = refine_uniform(m);
    for (Formulation f : {Formulation::primal(1), Formulation::ultraweak(0)}) {
        Solved s = solve_on(m, f);
        ReferenceSolution ref;
        ref.pencil = &s.pencil;
        ref.pair = s.pair;
        ref.lambda_ref = s.pair.lambda;
        // the norm of the difference of two identical functions is pure
        // round-off under the square root, hence the sqrt(eps)-level bound
        CHECK(energy_error(s.pencil, s.pair, ref) <= 1e-6);
        CHECK(higher_order_term(s.pencil, s.pair, ref) <= 1e-6 * s.pair.lambda);
    }
}

TEST_CASE("energy error of the zero function is the reference energy norm") {
    Mesh m = build_domain(DomainSpec::UnitSquare);
    for (int s = 0; s < 4; ++s) m = refine_uniform(m);
    Solved s = solve_on(m, Formulation::primal(1));
    ReferenceSolution ref;
    ref.pencil = &s.pencil;
    ref.pair = s.pair;
    ref.lambda_ref = s.pair.lambda;
    EigenPair zero = s.pair;
    zero.y.setZero();
    // Oracle: broken H1 norm of u_ref by direct quadrature.
    FEFunction u = extract_u0(s.pencil, s.pair.y);
    QuadratureRule qr = quadrature(6);
    double acc = 0;
    for (int t = 0; t < m.n_triangles(); ++t) {
        ElementMap em = ElementMap::from(m, t);
        const auto& dofs = u.map->element_dofs[t];
        for (std::size_t q = 0; q < qr.size(); ++q) {
            Eigen::VectorXd v = lagrange_values(1, qr.x(q), qr.y(q));
            Eigen::MatrixXd g = lagrange_gradients(1, qr.x(q), qr.y(q));
            double val = 0;
            Eigen::Vector2d grad = Eigen::Vector2d::Zero();
            for (std::size_t i = 0; i < dofs.size(); ++i) {
                if (dofs[i] < 0) continue;
                val += u.coeffs[dofs[i]] * v[int(i)];
                grad += u.coeffs[dofs[i]] * (em.Jinv.transpose() * g.row(int(i)).transpose());
            }
            acc += qr.weights[q] * 2 * m.area(t) * (val * val + grad.squaredNorm());
        }
    }
    CHECK(energy_error(s.pencil, zero, ref) == Catch::Approx(std::sqrt(acc)).epsilon(1e-10));
}

TEST_CASE("higher-order term reduces to the eigenvalue shift for equal functions") {
    Mesh m = build_domain(DomainSpec::UnitSquare);
    for (int s = 0; s < 4; ++s) m = refine_uniform(m);
    Solved s = solve_on(m, Formulation::primal(1));
    ReferenceSolution ref;
    ref.pencil = &s.pencil;
    ref.pair = s.pair;
    ref.pair.lambda = s.pair.lambda + 0.125;
    ref.lambda_ref = ref.pair.lambda;
    // same eigenfunction with unit L2 norm: the term is exactly |delta|
    CHECK(higher_order_term(s.pencil, s.pair, ref) == Catch::Approx(0.125).epsilon(1e-8));
}

TEST_CASE("efficiency ratio contracts") {
    CHECK(efficiency_ratio(2.0, 1.0) == Catch::Approx(2.0));
    CHECK(efficiency_ratio(0.0, 0.0) == 0.0);
    CHECK_THROWS_AS(efficiency_ratio(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("jump and natural estimators stay equivalent on a solve") {
    Mesh m = build_domain(DomainSpec::LShape);
    for (int s = 0; s < 3; ++s) m = refine_uniform(m);
    {
        Solved s = solve_on(m, Formulation::primal(1));
        IndicatorField eta = eta_natural(s.residual, s.pencil);
        IndicatorField bar = eta_bar(s.residual, s.pencil);
        double ratio = bar.global / eta.global;
        CHECK(ratio >= 0.1);
        CHECK(ratio <= 10.0);
    }
    {
        Solved s = solve_on(m, Formulation::ultraweak_lowest_rt());
        IndicatorField eta = eta_natural(s.residual, s.pencil);
        EtaTildeResult tld = eta_tilde(s.residual, s.pencil);
        double ratio = tld.indicator.global / eta.global;
        CHECK(ratio >= 0.1);
        CHECK(ratio <= 10.0);
    }
}

TEST_CASE("Crouzeix-Raviart jump equivalence for gradient-orthogonal functions") {
    Mesh m = refine_uniform(refine_uniform(build_domain(DomainSpec::LShape)));
    DofMap cr = build_dof_map(SpaceDescriptor::crouzeix_raviart(), m);
    DofMap s1 = build_dof_map(SpaceDescriptor::continuous_lagrange(1), m);
    REQUIRE(cr.n_global > 0);
    REQUIRE(s1.n_global > 0);

    // Broken-gradient inner product matrices (gradients are constant per
    // element for both spaces).
    auto grad_of = [&](const DofMap& dm, int t, const Eigen::VectorXd& coeffs) {
        ElementMap em = ElementMap::from(m, t);
        Eigen::MatrixXd g = dm.desc.family == Family::CrouzeixRaviartZeroBC
                                ? Eigen::MatrixXd(cr_gradients())
                                : lagrange_gradients(1, 1.0 / 3, 1.0 / 3);
        Eigen::Vector2d out = Eigen::Vector2d::Zero();
        const auto& dofs = dm.element_dofs[t];
        for (std::size_t i = 0; i < dofs.size(); ++i)
            if (dofs[i] >= 0)
                out += coeffs[dofs[i]] * (em.Jinv.transpose() * g.row(int(i)).transpose());
        return out;
    };
    Eigen::MatrixXd Ass = Eigen::MatrixXd::Zero(s1.n_global, s1.n_global);
    Eigen::MatrixXd Acs = Eigen::MatrixXd::Zero(cr.n_global, s1.n_global);
    for (int t = 0; t < m.n_triangles(); ++t) {
        ElementMap em = ElementMap::from(m, t);
        Eigen::MatrixXd gs = lagrange_gradients(1, 1.0 / 3, 1.0 / 3);
        Eigen::MatrixXd gc = cr_gradients();
        double w = m.area(t);
        const auto& ds = s1.element_dofs[t];
        const auto& dc = cr.element_dofs[t];
        for (int i = 0; i < 3; ++i) {
            if (ds[i] < 0) continue;
            Eigen::Vector2d gi = em.Jinv.transpose() * gs.row(i).transpose();
            for (int j = 0; j < 3; ++j) {
                if (ds[j] >= 0) {
                    Eigen::Vector2d gj = em.Jinv.transpose() * gs.row(j).transpose();
                    Ass(ds[i], ds[j]) += w * gi.dot(gj);
                }
            }
        }
        for (int i = 0; i < 3; ++i) {
            if (dc[i] < 0) continue;
            Eigen::Vector2d gi = em.Jinv.transpose() * gc.row(i).transpose();
            for (int j = 0; j < 3; ++j) {
                if (ds[j] >= 0) {
                    Eigen::Vector2d gj = em.Jinv.transpose() * gs.row(j).transpose();
                    Acs(dc[i], ds[j]) += w * gi.dot(gj);
                }
            }
        }
    }
    Eigen::LLT<Eigen::MatrixXd> ass_llt(Ass);

    // Embedding of S^1_0 into CR coefficients: CR dof = edge midpoint value =
    // mean of the endpoint vertex values.
    auto embed = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(cr.n_global);
        std::vector<int> vdof(m.n_vertices(), -1);
        int next = 0;
        for (int v = 0; v < m.n_vertices(); ++v)
            if (!m.vertex_on_boundary(v)) vdof[v] = next++;
        int edof = 0;
        for (int e = 0; e < m.n_edges(); ++e) {
            if (m.edges()[e].boundary) continue;
            double a = vdof[m.edges()[e].v[0]] >= 0 ? z[vdof[m.edges()[e].v[0]]] : 0.0;
            double b = vdof[m.edges()[e].v[1]] >= 0 ? z[vdof[m.edges()[e].v[1]]] : 0.0;
            w[edof++] = 0.5 * (a + b);
        }
        return w;
    };

    oracle::Rng rng(4242);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd wc(cr.n_global);
        for (int i = 0; i < wc.size(); ++i) wc[i] = rng();
        // project out the gradient-conforming part
        Eigen::VectorXd z = ass_llt.solve(Acs.transpose() * wc);
        wc -= embed(z);

        // verify orthogonality held
        CHECK((Acs.transpose() * wc).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, wc.norm()));

        FEFunction w(cr);
        w.coeffs = wc;
        double seminorm2 = 0;
        for (int t = 0; t < m.n_triangles(); ++t)
            seminorm2 += m.area(t) * grad_of(cr, t, wc).squaredNorm();

        // normal and tangential jump sums, boundary edges one-sided
        double jn = 0, jt = 0;
        std::vector<double> Jn(m.n_edges(), 0.0), Jt(m.n_edges(), 0.0);
        for (int e = 0; e < m.n_edges(); ++e) {
            const Edge& E = m.edges()[e];
            Eigen::Vector2d jump = grad_of(cr, E.tri[0], wc);
            if (E.tri[1] >= 0) jump -= grad_of(cr, E.tri[1], wc);
            double n = jump[0] * E.nx + jump[1] * E.ny;
            double tg = jump[0] * E.tx + jump[1] * E.ty;
            Jn[e] = E.length * n * n;
            Jt[e] = E.length * tg * tg;
        }
        for (int t = 0; t < m.n_triangles(); ++t) {
            double sn = 0, st = 0;
            for (int e : m.triangle_edges(t)) sn += Jn[e], st += Jt[e];
            jn += std::sqrt(m.area(t)) * sn;
            jt += std::sqrt(m.area(t)) * st;
        }
        for (double a : {seminorm2 / jn, seminorm2 / jt, jn / jt}) {
            CHECK(a <= 50.0);
            CHECK(a >= 1.0 / 50.0);
        }
    }
}
