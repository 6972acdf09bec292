// Adaptive eigenvalue loop: solve -> estimate -> mark -> refine, with
// convergence records and log-log rate fitting.
#pragma once

#include <functional>
#include <numeric>

#include "dpg/estimators.hpp"

namespace dpg {

enum class EstimatorChoice { Natural, Jump };

struct AfemConfig {
    DomainSpec domain = DomainSpec::UnitSquare;
    Formulation form = Formulation::primal(1);
    EstimatorChoice estimator = EstimatorChoice::Natural;
    double theta = 0.5;       // Doerfler parameter in (0,1]; 1 marks everything
    int track = 1;            // 1-based index of the eigenvalue driving the loop
    long dof_budget = 10000;  // stop once the trial space reaches this size
    int initial_uniform = 0;  // uniform sweeps before the adaptive loop
    SolverConfig solver;
    std::vector<double> lambda_ref;  // known eigenvalues, per tracked index; may be empty
    bool compute_jump = false;       // record the jump estimator even when not driving with it
};

struct ConvergenceRecord {
    int iteration = 0;
    long dof = 0;
    int n_triangles = 0;
    double h_max = 0;
    std::vector<double> lambdas;  // the first `track` eigenvalues
    double lambda = 0;            // tracked eigenvalue
    double abs_error = std::numeric_limits<double>::quiet_NaN();
    double eta = std::numeric_limits<double>::quiet_NaN();
    double eta_jump = std::numeric_limits<double>::quiet_NaN();
    double energy_err = std::numeric_limits<double>::quiet_NaN();
    double hot = std::numeric_limits<double>::quiet_NaN();
    int n_marked = 0;
};

struct MarkResult {
    std::vector<int> marked;
    bool stagnated = false;  // all indicators were zero
};

/// Minimal-cardinality Doerfler marking on squared indicators: greedy by
/// descending eta_T, ties broken by ascending element id.
inline MarkResult dorfler_mark(const IndicatorField& ind, double theta) {
    if (!(theta > 0.0) || theta > 1.0)
        throw std::invalid_argument("dorfler_mark: theta must lie in (0, 1]");
    const int n = int(ind.eta_t.size());
    double total2 = 0;
    for (double e : ind.eta_t) total2 += e * e;
    MarkResult out;
    if (total2 == 0.0) {
        out.stagnated = true;
        return out;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (ind.eta_t[a] != ind.eta_t[b]) return ind.eta_t[a] > ind.eta_t[b];
        return a < b;
    });
    double acc = 0;
    for (int id : order) {
        out.marked.push_back(id);
        acc += ind.eta_t[id] * ind.eta_t[id];
        if (acc >= theta * total2) break;
    }
    std::sort(out.marked.begin(), out.marked.end());
    return out;
}

struct AfemResult {
    std::vector<ConvergenceRecord> records;
    Mesh mesh;  // final mesh
    bool stagnated = false;
};

namespace detail {

inline bool jump_estimator_available(const Formulation& f) {
    return (f.kind == FormulationKind::Primal && f.k == 1) ||
           f.kind == FormulationKind::UltraweakLowestRT;
}

}  // namespace detail

/// Runs the adaptive loop until the trial-space dimension reaches the
/// budget. Every iteration (including the last) appends one record.
inline AfemResult run_afem(const AfemConfig& cfg, const ReferenceSolution* ref = nullptr,
                           const std::function<void(const ConvergenceRecord&)>& on_record = {}) {
    if (cfg.track < 1) throw std::invalid_argument("run_afem: track must be >= 1");
    bool want_jump = cfg.estimator == EstimatorChoice::Jump || cfg.compute_jump;
    if (cfg.estimator == EstimatorChoice::Jump && !detail::jump_estimator_available(cfg.form))
        throw std::invalid_argument("run_afem: no jump estimator for this formulation");

    SolverConfig scfg = cfg.solver;
    scfg.m = cfg.track;
    const int p_eff = scfg.p > 0 ? scfg.p : scfg.m + 2;

    AfemResult result;
    result.mesh = build_domain(cfg.domain);
    Mesh& mesh = result.mesh;
    for (int i = 0; i < cfg.initial_uniform; ++i) mesh = refine_uniform(mesh);

    for (int iter = 0;; ++iter) {
        AssembledPencil pencil = condense_and_assemble(mesh, cfg.form);
        // N = B^T G^-1 M has rank at most the number of volumetric u dofs, so
        // the subspace needs that many finite directions, not just n_trial.
        while (pencil.layout.u0_map().n_global < p_eff) {
            mesh = refine_uniform(mesh);
            pencil = condense_and_assemble(mesh, cfg.form);
        }
        std::vector<EigenPair> pairs;
        for (int attempt = 0;; ++attempt) {
            try {
                pairs = smallest_eigenpairs(pencil, scfg);
                break;
            } catch (const SolverError&) {
                // Very coarse meshes can lack real finite eigenvalues
                // entirely; refine and retry while nothing has been solved.
                if (!result.records.empty() || attempt >= 8) throw;
                mesh = refine_uniform(mesh);
                pencil = condense_and_assemble(mesh, cfg.form);
            }
        }
        const EigenPair& pair = pairs[cfg.track - 1];
        ResidualField residual = recover_residual(pencil, pair.y, pair.lambda);
        IndicatorField natural = eta_natural(residual, pencil);
        IndicatorField jump;
        if (want_jump && detail::jump_estimator_available(cfg.form)) {
            jump = cfg.form.kind == FormulationKind::Primal
                       ? eta_bar(residual, pencil)
                       : eta_tilde(residual, pencil).indicator;
        }

        ConvergenceRecord rec;
        rec.iteration = iter;
        rec.dof = pencil.n_trial;
        rec.n_triangles = mesh.n_triangles();
        rec.h_max = mesh.h_max();
        for (const auto& p : pairs) rec.lambdas.push_back(p.lambda);
        rec.lambda = pair.lambda;
        if (int(cfg.lambda_ref.size()) >= cfg.track)
            rec.abs_error = std::abs(pair.lambda - cfg.lambda_ref[cfg.track - 1]);
        rec.eta = natural.global;
        if (!jump.eta_t.empty()) rec.eta_jump = jump.global;
        if (ref) {
            rec.energy_err = energy_error(pencil, pair, *ref);
            rec.hot = higher_order_term(pencil, pair, *ref);
        }

        const IndicatorField& driver =
            cfg.estimator == EstimatorChoice::Jump ? jump : natural;
        MarkResult mark = dorfler_mark(driver, cfg.theta);
        rec.n_marked = int(mark.marked.size());
        result.records.push_back(rec);
        if (on_record) on_record(rec);

        if (pencil.n_trial >= cfg.dof_budget) break;
        if (mark.stagnated) {
            result.stagnated = true;
            break;
        }
        mesh = refine_adaptive(mesh, mark.marked);
    }
    return result;
}

/// Least-squares slope of log(y) against log(x) over the trailing
/// max(3, n/2) samples. All y must be positive.
inline double estimate_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("estimate_rate: size mismatch");
    const int n = int(xs.size());
    if (n < 3) throw std::invalid_argument("estimate_rate: need at least 3 samples");
    const int w = std::max(3, n / 2);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = n - w; i < n; ++i) {
        if (!(xs[i] > 0) || !(ys[i] > 0))
            throw std::invalid_argument("estimate_rate: samples must be positive");
        double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double denom = w * sxx - sx * sx;
    if (denom == 0) throw std::invalid_argument("estimate_rate: degenerate abscissae");
    return (w * sxy - sx * sy) / denom;
}

}  // namespace dpg
