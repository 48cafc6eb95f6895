"""The verification suite: one margin report per inequality family.

Every check evaluates its inequality over a sample grid (fields x nodes x
parameters), records per-sample (lhs, rhs, margin = rhs - lhs), and gates
on the minimum margin against an (absolute, relative) tolerance.  Margins
of multiplicative inequalities (Harnack, kernel bounds, Sobolev norms) are
normalized per sample; additive pointwise margins carry a recorded scale.

Saturation witnesses are first-class: where an inequality is sharp the
check also verifies the margin is close to zero, not merely nonnegative.
"""
from __future__ import annotations

import numpy as np

from .fields import (
    CDParameters,
    DiscretizedModel,
    NotApplicableError,
    ScalarField,
    VerticalForm,
    carre_du_champ,
    deep_interior,
    gamma2,
    gamma2_z,
    gamma_z,
    interior_for_time,
    require_vertical,
)
from .metric import (
    BallTable,
    DistanceField,
    ball_table,
    distance_field,
    dual_distance,
    graph_distance,
    volume_growth_exponent,
)
from .models import GeometryOracle
from .reports import MarginReport, Tolerance
from .semigroup import (
    SpectralData,
    apply_semigroup,
    heat_kernel_block,
    spectral_decompose,
)
from .suites import NamedField, eps_shift


def _report(check_id, model_id, samples, tolerance, scale=1.0, metadata=None):
    min_margin = min((s["margin"] for s in samples), default=np.inf)
    return MarginReport(
        check_id=check_id,
        model_id=model_id,
        samples=samples,
        min_margin=float(min_margin),
        tolerance=tolerance,
        scale=float(scale),
        metadata=metadata or {},
    )


def _mask_indices(model, mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NotApplicableError("interior mask is empty; model too coarse")
    return idx


def _norm_margin(lhs, rhs):
    return (rhs - lhs) / max(abs(lhs), abs(rhs), 1e-300)


# ---------------------------------------------------------------------------
# curvature-dimension


def cd_margin_field(model, f: ScalarField, rho: float, n: float) -> np.ndarray:
    """Pointwise Gamma2(f) - (Lf)^2/n - rho Gamma(f)."""
    fv = model.check_field(f)
    lf = model.L @ fv
    return gamma2(model, f).values - lf**2 / n - rho * carre_du_champ(model, f).values


def generalized_cd_margin_field(model, vform, f: ScalarField,
                                params: CDParameters, nu: float) -> np.ndarray:
    fv = model.check_field(f)
    lf = model.L @ fv
    lhs = gamma2(model, f).values + nu * gamma2_z(model, vform, f).values
    rhs = (lf**2 / params.n
           + (params.rho1 - params.kappa / nu) * carre_du_champ(model, f).values
           + params.rho2 * gamma_z(model, vform, f).values)
    return lhs - rhs


def check_cd(model: DiscretizedModel, oracle: GeometryOracle,
             suite: list[NamedField], vform: VerticalForm | None = None,
             params: CDParameters | None = None, nu_grid=(0.5, 1.0, 2.0, 4.0),
             mode: str = "riemannian", interior=None,
             tolerance: Tolerance | None = None,
             include_gamma_lemma: bool = True,
             equality_fields=()) -> MarginReport:
    """Pointwise curvature-dimension margins over suite x interior (x nu).

    Modes: ``riemannian`` uses (rho, n) from the oracle; ``generalized``
    needs a vertical form and CD parameters; ``scan`` returns the largest
    rho1 compatible with the sample for the given (rho2, kappa, n).
    """
    if mode not in ("riemannian", "generalized", "scan"):
        raise ValueError(f"unknown cd mode {mode!r}")
    if interior is None:
        interior = deep_interior(model, hops=2)
    idx = _mask_indices(model, interior)
    samples = []
    scale = 0.0
    meta: dict = {"mode": mode, "interior_nodes": int(idx.size)}

    if mode == "riemannian":
        rho, n = oracle.ricci_lower, float(oracle.dim)
        tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
        meta.update(rho=rho, n=n)
        for nf in suite:
            marg = cd_margin_field(model, nf.field, rho, n)[idx]
            fv = nf.field.values
            sc = float(np.max(np.abs(gamma2(model, nf.field).values[idx]))
                       + np.max((model.L @ fv)[idx] ** 2) / n)
            scale = max(scale, sc)
            k = int(np.argmin(marg))
            samples.append({"field": nf.name, "node": int(idx[k]),
                            "lhs": float(-marg[k]), "rhs": 0.0,
                            "margin": float(marg[k]),
                            "mean_margin": float(marg.mean())})
            if nf.name in equality_fields:
                # sharpness witness: the margin must vanish, not just stay
                # nonnegative
                worst = float(np.max(np.abs(marg)))
                allowed = tolerance.slack(sc)
                samples.append({"field": f"{nf.name}|equality", "lhs": worst,
                                "rhs": allowed, "margin": allowed - worst})
            if include_gamma_lemma:
                g = carre_du_champ(model, nf.field).values
                g2 = gamma2(model, nf.field).values
                gg = carre_du_champ(model, model.field(g)).values
                lem = (4 * g * (g2 - rho * g) - gg)[idx]
                lsc = float(np.max(np.abs(4 * g * g2)) + 1e-300)
                k = int(np.argmin(lem))
                samples.append({"field": f"{nf.name}|gradient-of-gamma",
                                "node": int(idx[k]), "lhs": float(gg[idx][k]),
                                "rhs": float((4 * g * (g2 - rho * g))[idx][k]),
                                "margin": float(lem[k] / lsc * scale if scale else lem[k]),
                                "normalized_by": lsc})
        return _report("cd", model.model_id, samples, tolerance, scale, meta)

    vform = require_vertical(model, vform)
    if params is None:
        params = oracle.cd_params
    if params is None:
        raise NotApplicableError("no CD parameters available for this model")
    meta.update(rho1=params.rho1, rho2=params.rho2, kappa=params.kappa,
                n=params.n, nu_grid=list(nu_grid))

    if mode == "generalized":
        # second-order composition errors carry curvature^2-sized constants
        # on sub-Riemannian lattices; the slack reflects measured behaviour
        tolerance = tolerance or Tolerance(1e-12, 0.10, mesh_order=2)
        for nf in suite:
            for nu in nu_grid:
                marg = generalized_cd_margin_field(model, vform, nf.field, params, nu)[idx]
                fv = nf.field.values
                sc = float(np.max(np.abs(gamma2(model, nf.field).values[idx]))
                           + np.max((model.L @ fv)[idx] ** 2) / params.n)
                scale = max(scale, sc)
                k = int(np.argmin(marg))
                samples.append({"field": nf.name, "nu": float(nu),
                                "node": int(idx[k]), "lhs": float(-marg[k]),
                                "rhs": 0.0, "margin": float(marg[k])})
        return _report("cd-generalized", model.model_id, samples, tolerance, scale, meta)

    if mode == "scan":
        # largest rho1 keeping min margin >= -slack; per node the binding
        # value is min over nu of
        #   [Gamma2 + nu Gamma2Z + (kappa/nu) Gamma - (Lf)^2/n
        #    - rho2 GammaZ + slack] / Gamma,
        # where slack is this check's tolerance at the field's margin scale
        # (nodes with vanishing Gamma are then automatically unbinding).
        tolerance = tolerance or Tolerance(1e-12, 0.10, mesh_order=2)
        rho1_best = np.inf
        gamma_floor = 1e-8
        for nf in suite:
            fv = nf.field.values
            g = carre_du_champ(model, nf.field).values[idx]
            g2 = gamma2(model, nf.field).values[idx]
            gz = gamma_z(model, vform, nf.field).values[idx]
            g2z = gamma2_z(model, vform, nf.field).values[idx]
            lf2 = (model.L @ fv)[idx] ** 2
            ok = g > gamma_floor * max(float(g.max()), 1e-300)
            if not np.any(ok):
                continue
            scale_f = float(np.max(np.abs(g2)) + np.max(lf2) / params.n)
            slack = tolerance.slack(scale_f)
            num_best = np.full(idx.size, np.inf)
            for nu in nu_grid:
                num = g2 + nu * g2z + (params.kappa / nu) * g - lf2 / params.n - params.rho2 * gz
                num_best = np.minimum(num_best, num)
            vals = (num_best[ok] + slack) / g[ok]
            k = int(np.argmin(vals))
            rho1_f = float(vals[k])
            rho1_best = min(rho1_best, rho1_f)
            samples.append({"field": nf.name, "node": int(idx[np.flatnonzero(ok)[k]]),
                            "lhs": 0.0, "rhs": rho1_f, "margin": rho1_f,
                            "slack": slack})
        meta["rho1_scan"] = float(rho1_best)
        return _report("cd-scan", model.model_id, samples, tolerance,
                       scale=1.0, metadata=meta)

    raise ValueError(f"unknown cd mode {mode!r}")


def check_vertical_commutation(model, vform: VerticalForm, suite,
                               interior=None,
                               tolerance: Tolerance | None = None) -> MarginReport:
    """Residual of the mixed-form symmetry Gamma(f, Gamma^Z f) = Gamma^Z(f, Gamma f).

    Residuals are normalized by the Cauchy-Schwarz majorant of either side,
    sqrt(Gamma(f) Gamma(Gamma^Z f)) + sqrt(Gamma^Z(f) Gamma^Z(Gamma f)), the
    honest size of the bilinear quantities whose cancellation is tested.
    """
    vform = require_vertical(model, vform)
    if interior is None:
        interior = deep_interior(model, hops=2)
    idx = _mask_indices(model, interior)
    tolerance = tolerance or Tolerance(1e-12, 0.08, mesh_order=2)
    samples, scale = [], 1.0
    for nf in suite:
        gz = gamma_z(model, vform, nf.field)
        g = carre_du_champ(model, nf.field)
        a = carre_du_champ(model, nf.field, model.field(gz.values)).values[idx]
        b = gamma_z(model, vform, nf.field, model.field(g.values)).values[idx]
        g_gz = carre_du_champ(model, model.field(gz.values)).values[idx]
        gz_g = gamma_z(model, vform, model.field(g.values)).values[idx]
        major = float(np.max(np.sqrt(np.maximum(g.values[idx] * g_gz, 0.0))
                             + np.sqrt(np.maximum(gz.values[idx] * gz_g, 0.0))))
        resid = float(np.max(np.abs(a - b)))
        rel = resid / max(major, 1e-300)
        samples.append({"field": nf.name, "lhs": resid, "rhs": 0.0,
                        "margin": -rel, "majorant": major})
    return _report("vertical-commutation", model.model_id, samples, tolerance,
                   scale, {"interior_nodes": int(idx.size)})


# ---------------------------------------------------------------------------
# semigroup-based pointwise bounds


def check_gradient_bound(model, oracle, engine, suite, t_grid,
                         interior=None, tolerance: Tolerance | None = None) -> MarginReport:
    """sqrt(Gamma(P_t f)) <= exp(-rho t) P_t sqrt(Gamma(f)) pointwise."""
    rho = oracle.ricci_lower
    tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
    samples, scale = [], 0.0
    for t in t_grid:
        mask = interior if interior is not None else interior_for_time(model, t)
        idx = _mask_indices(model, mask)
        for nf in suite:
            sg = model.field(np.sqrt(carre_du_champ(model, nf.field).values))
            rhs = np.exp(-rho * t) * apply_semigroup(model, engine, sg, t).values
            ptf = apply_semigroup(model, engine, nf.field, t)
            lhs = np.sqrt(carre_du_champ(model, ptf).values)
            marg = (rhs - lhs)[idx]
            scale = max(scale, float(np.max(np.abs(rhs[idx]))))
            k = int(np.argmin(marg))
            samples.append({"field": nf.name, "t": float(t), "node": int(idx[k]),
                            "lhs": float(lhs[idx][k]), "rhs": float(rhs[idx][k]),
                            "margin": float(marg[k])})
    return _report("gradient-bound", model.model_id, samples, tolerance, scale,
                   {"rho": rho})


def check_completeness(model, engine, t_grid,
                       tolerance: Tolerance = Tolerance(1e-10)) -> MarginReport:
    """Mass conservation: sup |P_t 1 - 1| per time (exact on reflecting closures)."""
    samples = []
    one = model.constant(1.0)
    for t in t_grid:
        pt = apply_semigroup(model, engine, one, t)
        resid = float(np.max(np.abs(pt.values - 1.0)))
        samples.append({"t": float(t), "lhs": resid, "rhs": 0.0, "margin": -resid})
    return _report("completeness", model.model_id, samples, tolerance, 1.0, {})


# ---------------------------------------------------------------------------
# spectral gap / Poincare / log-Sobolev


def poincare_margin(model, f: ScalarField, const: float, absolute: bool = False) -> float:
    """const * int Gamma(f) + (int f)^2 / mu(M) - int f^2  (>= 0 wanted)."""
    fv = np.abs(f.values) if absolute else f.values
    dirichlet = -model.inner(f, model.apply_L(f))      # = int Gamma(f) dmu
    mean_sq = model.integrate(model.field(fv)) ** 2 / model.total_measure
    return const * dirichlet + mean_sq - model.inner(f, f)


def check_spectral_gap(model, oracle, spectral: SpectralData,
                       n_random: int = 100, seed: int = 0,
                       tolerance: Tolerance | None = None) -> MarginReport:
    """Spectral gap against the sharp positive-curvature bound n rho/(n-1)."""
    rho, n = oracle.ricci_lower, float(oracle.dim)
    if rho <= 0:
        raise NotApplicableError("spectral-gap bound needs rho > 0")
    bound = n * rho / (n - 1)
    tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
    lam1 = float(spectral.eigenvalues[1])
    samples = [{"quantity": "gap", "lhs": bound, "rhs": lam1,
                "margin": lam1 - bound}]
    rng = np.random.default_rng(seed)
    const = 1.0 / bound
    worst = np.inf
    for _ in range(n_random):
        f = model.field(rng.standard_normal(model.n_nodes))
        m = poincare_margin(model, f, const) / model.inner(f, f)
        worst = min(worst, m)
    samples.append({"quantity": "poincare-random", "lhs": -worst, "rhs": 0.0,
                    "margin": float(worst) * bound})
    phi1 = model.field(spectral.eigenfields[:, 1])
    sat = poincare_margin(model, phi1, const) / model.inner(phi1, phi1)
    samples.append({"quantity": "poincare-extremal-saturation",
                    "lhs": abs(float(sat)), "rhs": 0.0,
                    "margin": float(-abs(sat) + tolerance.rel * bound) })
    return _report("spectral-gap", model.model_id, samples, tolerance,
                   scale=bound, metadata={"rho": rho, "n": n, "lambda1": lam1,
                                          "bound": bound, "n_random": n_random})


def _entropy(model, g: np.ndarray) -> float:
    """int g ln g dmu^ - (int g) ln(int g) with the normalized measure."""
    mu = model.mu / model.total_measure
    gm = float(mu @ g)
    with np.errstate(divide="ignore", invalid="ignore"):
        glg = np.where(g > 0, g * np.log(np.maximum(g, 1e-300)), 0.0)
    return float(mu @ glg - gm * np.log(gm))


def check_log_sobolev(model, oracle, engine, suite, t_grid=None,
                      tolerance: Tolerance | None = None,
                      slope_slack: float = 0.05, seed: int = 0) -> MarginReport:
    """Entropy inequality with constant 2/rho, plus the entropy-decay rate.

    The decay mode fits the slope of log Ent(P_t f) and requires it at most
    -2 rho + slack.
    """
    rho = oracle.ricci_lower
    if rho <= 0:
        raise NotApplicableError("log-Sobolev constant needs rho > 0")
    tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
    mu_hat = model.mu / model.total_measure
    samples, scale = [], 0.0
    eps_used = {}
    for nf in suite:
        f, eps = eps_shift(model, nf.field)
        if np.min(f.values) <= 0:
            raise ValueError(f"suite field {nf.name} not positive after shift")
        eps_used[nf.name] = eps
        for fac, tag in ((1.0, ""), (0.1, "|eps/10")):
            fe = model.field(nf.field.values + eps * fac)
            ent = _entropy(model, fe.values**2)
            dirichlet = -float(mu_hat @ (fe.values * (model.L @ fe.values)))
            rhs = (2.0 / rho) * dirichlet
            scale = max(scale, abs(rhs), abs(ent))
            samples.append({"field": nf.name + tag, "lhs": ent, "rhs": rhs,
                            "margin": rhs - ent})
    meta = {"rho": rho, "constant": 2.0 / rho, "eps": eps_used}
    if t_grid is not None:
        f = suite[0].field
        for nf in suite:
            if nf.field.values.min() > 0 and np.ptp(nf.field.values) > 1e-6:
                f = nf.field
                break
        ents = []
        for t in t_grid:
            pt = apply_semigroup(model, engine, f, t)
            ents.append(_entropy(model, np.maximum(pt.values, 1e-300)))
        ents = np.array(ents)
        if np.all(ents > 0):
            slope = float(np.polyfit(np.asarray(t_grid, float), np.log(ents), 1)[0])
            meta["entropy_slope"] = slope
            meta["entropy_series"] = [[float(t), float(np.log(e))]
                                      for t, e in zip(t_grid, ents)]
            samples.append({"quantity": "entropy-decay-slope",
                            "lhs": slope, "rhs": -2 * rho + slope_slack,
                            "margin": (-2 * rho + slope_slack - slope) * scale /
                                      max(abs(slope), 1.0)})
    return _report("log-sobolev", model.model_id, samples, tolerance, scale, meta)


# ---------------------------------------------------------------------------
# Li-Yau family


def harnack_dimension(alpha: float, kappa: float, rho2: float, n: float) -> float:
    """Effective Harnack exponent of the sub-Riemannian gradient estimate."""
    if alpha <= 2:
        raise ValueError("needs alpha > 2")
    return n * (alpha - 1) ** 2 * (1 + alpha * kappa / ((alpha - 1) * rho2)) / (4 * (alpha - 2))


def _li_yau_rhs(mode, t, rho, n, lu_over_u, alpha=None, schedule=None):
    if mode == "rho0":
        return lu_over_u + n / (2 * t)
    if mode == "general-alpha":
        a = alpha if alpha is not None else 1.0
        coef = 1 - 2 * rho * t / (2 * a + 1)
        const = 0.5 * n * (a**2 / ((2 * a - 1) * t) + rho**2 * t / (2 * a + 1) - rho)
        return coef * lu_over_u + const
    if mode == "v-schedule":
        i2, i2p = schedule
        coef = 1 - 2 * rho * i2
        const = 0.5 * n * (i2p + rho**2 * i2 - rho)
        return coef * lu_over_u + const
    if mode == "exponential":
        e = np.exp(-2 * rho * t / 3)
        return e * lu_over_u + (n * rho / 3) * e**2 / (1 - e)
    raise ValueError(f"unknown mode {mode!r}")


def check_li_yau(model, oracle, engine, suite, t_grid, mode: str = "rho0",
                 alpha: float | None = None, vform=None,
                 params: CDParameters | None = None,
                 schedules=None, interior=None,
                 tolerance: Tolerance | None = None,
                 saturation_fields=(), saturation_rtol: float | None = None) -> MarginReport:
    """Gradient-of-logarithm estimates for positive solutions.

    Modes: ``rho0`` (sharp flat-space form), ``general-alpha``,
    ``v-schedule`` (per-time integral pairs of the weight V and its rate),
    ``exponential``, ``bakry-qian`` (needs rho > 0 and t >= 2/rho), and
    ``sub-riemannian`` (needs the vertical form, alpha > 2).
    Fields named in ``saturation_fields`` must additionally come within the
    saturation tolerance of equality somewhere on the interior.
    """
    rho, n = oracle.ricci_lower, float(oracle.dim)
    tolerance = tolerance or Tolerance(1e-12, 0.03, mesh_order=2)
    if mode == "bakry-qian" and rho <= 0:
        raise NotApplicableError("bakry-qian mode needs rho > 0")
    if mode == "sub-riemannian":
        vform = require_vertical(model, vform)
        params = params or oracle.cd_params
        if params is None:
            raise NotApplicableError("sub-riemannian mode needs CD parameters")
        if alpha is None or alpha <= 2:
            raise ValueError("sub-riemannian mode needs alpha > 2")
    samples, scale = [], 0.0
    sat_worst = {}
    meta = {"mode": mode, "alpha": alpha, "rho": rho, "n": n}
    series = []
    for ti, t in enumerate(t_grid):
        if mode == "bakry-qian" and t < 2 / rho - 1e-12:
            raise ValueError(f"bakry-qian needs t >= 2/rho = {2 / rho:g}")
        mask = interior if interior is not None else interior_for_time(model, t)
        idx = _mask_indices(model, mask)
        for nf in suite:
            f, eps = eps_shift(model, nf.field) if np.min(nf.field.values) < 0 \
                else (nf.field, 0.0)
            u = apply_semigroup(model, engine, f, t)
            uv = u.values
            if np.min(uv[idx]) <= 0:
                raise ValueError(f"P_t {nf.name} not positive on the interior")
            lu_over_u = (model.L @ uv) / uv
            if mode == "bakry-qian":
                lhs = lu_over_u[idx]
                rhs = np.full(idx.size, n * rho / 4)
            else:
                log_u = model.field(np.log(np.maximum(uv, 1e-300)))
                lhs = carre_du_champ(model, log_u).values[idx]
                if mode == "sub-riemannian":
                    c = 1 + alpha * params.kappa / ((alpha - 1) * params.rho2)
                    lhs = lhs + (2 * params.rho2 / alpha) * t * \
                        gamma_z(model, vform, log_u).values[idx]
                    rhs = ((c - 2 * params.rho1 * t / alpha) * lu_over_u[idx]
                           + params.n * params.rho1**2 * t / (2 * alpha)
                           - params.rho1 * params.n * c / 2
                           + params.n * (alpha - 1) ** 2 * c**2 / (8 * (alpha - 2) * t))
                else:
                    sched = schedules[ti] if schedules is not None else None
                    rhs = _li_yau_rhs(mode, t, rho, n, lu_over_u[idx],
                                      alpha=alpha, schedule=sched)
            marg = rhs - lhs
            scale = max(scale, float(np.max(np.abs(rhs))))
            k = int(np.argmin(marg))
            samples.append({"field": nf.name, "t": float(t), "node": int(idx[k]),
                            "lhs": float(lhs[k]), "rhs": float(rhs[k]),
                            "margin": float(marg[k]), "eps": eps})
            series.append([float(t), int(idx[k]), float(lhs[k]), float(rhs[k]),
                           float(marg[k])])
            if nf.name in saturation_fields:
                close = float(np.min(np.abs(marg)))
                sat_worst[nf.name] = max(sat_worst.get(nf.name, 0.0), close)
    if saturation_fields:
        rtol = saturation_rtol if saturation_rtol is not None else tolerance.rel
        for name, gap in sat_worst.items():
            samples.append({"field": f"{name}|saturation", "lhs": gap,
                            "rhs": rtol * scale, "margin": rtol * scale - gap})
        meta["saturation_rtol"] = rtol
    meta["series_columns"] = ["t", "node", "lhs", "rhs", "margin"]
    meta["series"] = series
    return _report(f"li-yau-{mode}", model.model_id, samples, tolerance, scale, meta)


# ---------------------------------------------------------------------------
# Harnack


def check_harnack(model, oracle, engine, suite, pair_sample,
                  mode: str = "riemannian", alpha: float = 3.0,
                  params: CDParameters | None = None,
                  dist_method: str = "auto",
                  tolerance: Tolerance | None = None,
                  kernel_spectral: SpectralData | None = None) -> MarginReport:
    """Two-point Harnack comparisons of positive solutions (or kernels).

    ``pair_sample`` is a list of (x, s, y, t) with s < t.  The Riemannian
    form uses K = max(0, -rho); the sub-Riemannian form uses the effective
    exponent from (alpha, kappa, rho2, n) and requires rho1 >= 0.
    Normalized margins: (rhs - lhs) / max(lhs, rhs).
    """
    rho, n = oracle.ricci_lower, float(oracle.dim)
    K = max(0.0, -rho)
    tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
    if mode == "sub-riemannian":
        params = params or oracle.cd_params
        if params is None or params.rho1 < 0:
            raise NotApplicableError("sub-riemannian Harnack needs rho1 >= 0")
        dim_exp = harnack_dimension(alpha, params.kappa, params.rho2, params.n)
        gauss = dim_exp / params.n
    else:
        dim_exp, gauss = n, 1.0
    meta = {"mode": mode, "K": K, "exponent": dim_exp, "gauss_factor": gauss,
            "distance": dist_method}

    dcache: dict[int, DistanceField] = {}

    def dist(x, y):
        if x == y:
            return 0.0
        if y not in dcache:
            dcache[y] = distance_field(model, oracle, y, method=dist_method)
        return float(dcache[y].values[x])

    samples, worst_pairs = [], []
    for nf in suite:
        f, eps = eps_shift(model, nf.field) if np.min(nf.field.values) < 0 \
            else (nf.field, 0.0)
        cache = {}

        def u(node, t):
            if t not in cache:
                cache[t] = apply_semigroup(model, engine, f, t).values
            return float(cache[t][node])

        for (x, s, y, t) in pair_sample:
            if not s < t:
                raise ValueError("harnack pairs need s < t")
            d = dist(x, y)
            lhs = u(x, s)
            rhs = (u(y, t) * (t / s) ** (dim_exp / 2)
                   * np.exp(gauss * d**2 / (4 * (t - s))
                            + K * d**2 / 6 + n * K * (t - s) / 4))
            m = _norm_margin(lhs, rhs)
            samples.append({"field": nf.name, "x": int(x), "s": float(s),
                            "y": int(y), "t": float(t), "d": d,
                            "lhs": lhs, "rhs": rhs, "margin": float(m)})
    if kernel_spectral is not None:
        # kernel form: p(x, y, s) <= p(x, z, t) (t/s)^{n/2} exp(...)
        for (x, s, y, t) in pair_sample:
            z = y
            for target in (y, x):
                d = dist(target, z) if target != z else 0.0
                ps = heat_kernel_block(kernel_spectral, s, [x], [target])[0, 0]
                pt = heat_kernel_block(kernel_spectral, t, [x], [z])[0, 0]
                rhs = (pt * (t / s) ** (dim_exp / 2)
                       * np.exp(gauss * d**2 / (4 * (t - s))
                                + K * d**2 / 6 + n * K * (t - s) / 4))
                samples.append({"field": "kernel", "x": int(x), "s": float(s),
                                "y": int(target), "z": int(z), "t": float(t),
                                "lhs": float(ps), "rhs": float(rhs),
                                "margin": float(_norm_margin(ps, rhs))})
    return _report(f"harnack-{mode}", model.model_id, samples, tolerance,
                   scale=1.0, metadata=meta)


def sample_harnack_pairs(model, n_pairs, s_grid, gap_grid, seed=0, t_max=None,
                         interior=None):
    """(x, s, y, t) tuples with s < t, nodes drawn from a safe interior."""
    rng = np.random.default_rng(seed)
    tmax = t_max or max(s + g for s in s_grid for g in gap_grid)
    if interior is None:
        interior = interior_for_time(model, tmax)
    idx = _mask_indices(model, interior)
    pairs = []
    for _ in range(n_pairs):
        x, y = rng.choice(idx, size=2, replace=True)
        s = float(rng.choice(np.asarray(s_grid, dtype=float)))
        t = s + float(rng.choice(np.asarray(gap_grid, dtype=float)))
        pairs.append((int(x), s, int(y), t))
    return pairs


# ---------------------------------------------------------------------------
# kernel bounds: lower (comparison), on-diagonal, two-sided, ball mass


def check_kernel_bounds(model, oracle, spectral, engine=None,
                        t_grid=(0.05, 0.1), pair_sample=None,
                        centers=None, radii=None, eps: float = 0.5,
                        ball_dist_method: str = "auto", A_grid=(0.25, 0.5, 1.0),
                        tolerance: Tolerance | None = None,
                        equality_expected: bool = False,
                        saturation_rtol: float = 0.05,
                        ondiag_constancy_rtol: float = 0.05) -> MarginReport:
    """Kernel comparisons against distance/volume data.

    (a) comparison lower bound p >= (4 pi t)^{-n/2} exp(-d^2/4t - K d^2/6
        - n K t/4), an equality in flat space (gated when
        ``equality_expected``);
    (b) on-diagonal sandwich: the products p(x,x,2r^2) mu(B(x,r)) and
        p(x,x,r^2) mu(B(x,r)) must be finite, ordered, and (in flat space)
        constant in r;
    (c) two-sided bound: fit the smallest constant C(eps) making the
        volume-normalized Gaussian sandwich hold over the sample;
    (d) ball mass: scan A for the largest uniform K with
        P_{A r^2} 1_{B(x,r)}(x) >= K.
    """
    rho, n = oracle.ricci_lower, float(oracle.dim)
    K = max(0.0, -rho)
    tolerance = tolerance or Tolerance(1e-12, 0.05, mesh_order=2)
    samples = []
    meta = {"n": n, "K": K, "eps": eps}

    dcache = {}

    def dfield(x):
        if x not in dcache:
            dcache[x] = distance_field(model, oracle, x, method=ball_dist_method)
        return dcache[x]

    # (a) comparison lower bound
    if pair_sample:
        worst_sat = 0.0
        for (x, y, t) in pair_sample:
            d = float(dfield(x).values[y])
            p = heat_kernel_block(spectral, t, [x], [y])[0, 0]
            low = ((4 * np.pi * t) ** (-n / 2)
                   * np.exp(-d**2 / (4 * t) - K * d**2 / 6 - n * K * t / 4))
            m = _norm_margin(low, p)
            samples.append({"part": "comparison-lower", "x": int(x), "y": int(y),
                            "t": float(t), "lhs": float(low), "rhs": float(p),
                            "margin": float(m)})
            worst_sat = max(worst_sat, abs(m))
        if equality_expected:
            samples.append({"part": "comparison-saturation", "lhs": worst_sat,
                            "rhs": saturation_rtol,
                            "margin": saturation_rtol - worst_sat})
            meta["saturation_rtol"] = saturation_rtol

    # (b) on-diagonal sandwich over (x, r)
    if centers is not None and radii is not None:
        q_hi, q_lo = [], []
        for x in centers:
            df = dfield(x)
            bt = ball_table(model, df, radii)
            for r, vol in zip(radii, bt.volumes):
                exact_vol = (oracle.exact_ball_volume(model.nodes[x], r)
                             if oracle.exact_ball_volume else vol)
                p_r = heat_kernel_block(spectral, r**2, [x], [x])[0, 0]
                p_2r = heat_kernel_block(spectral, 2 * r**2, [x], [x])[0, 0]
                q_hi.append(p_r * exact_vol)
                q_lo.append(p_2r * exact_vol)
                samples.append({"part": "ondiag", "x": int(x), "r": float(r),
                                "lhs": float(p_2r * exact_vol),
                                "rhs": float(p_r * exact_vol),
                                "margin": float(p_r * exact_vol - p_2r * exact_vol),
                                "volume_empirical": float(vol)})
        k_star, c_n = float(np.min(q_lo)), float(np.max(q_hi))
        meta["ondiag_lower_K"] = k_star
        meta["ondiag_upper_C"] = c_n
        samples.append({"part": "ondiag-ordered", "lhs": k_star, "rhs": c_n,
                        "margin": float(c_n - k_star) if k_star > 0 else -1.0})
        spread = (np.max(q_hi) - np.min(q_hi)) / np.mean(q_hi)
        meta["ondiag_product_spread"] = float(spread)
        if equality_expected:
            samples.append({"part": "ondiag-constancy", "lhs": float(spread),
                            "rhs": ondiag_constancy_rtol,
                            "margin": float(ondiag_constancy_rtol - spread)})
            meta["ondiag_expected_product"] = float((4 * np.pi) ** (-n / 2)
                                                    * _unit_ball_volume(n))

    # (c) two-sided Gaussian fit
    if pair_sample and centers is not None and radii is not None:
        c_fit = 0.0
        for (x, y, t) in pair_sample:
            d = float(dfield(x).values[y])
            p = heat_kernel_block(spectral, t, [x], [y])[0, 0]
            vol = (oracle.exact_ball_volume(model.nodes[x], np.sqrt(t))
                   if oracle.exact_ball_volume else
                   float(model.mu[dfield(x).values <= np.sqrt(t)].sum()))
            if p <= 0 or vol <= 0:
                continue
            up = p * vol / np.exp(-d**2 / ((4 + eps) * t))
            dn = np.exp(-d**2 / ((4 - eps) * t)) / (p * vol)
            c_fit = max(c_fit, up, dn)
        meta["two_sided_C"] = float(c_fit)
        samples.append({"part": "two-sided-finite", "lhs": 0.0, "rhs": c_fit,
                        "margin": float(c_fit > 0) - 0.5})

    # (d) ball-mass scan
    if centers is not None and radii is not None and engine is not None:
        best = (None, -np.inf)
        for A in A_grid:
            k_min = np.inf
            for x in centers:
                df = dfield(x)
                for r in radii:
                    ind = model.field((df.values <= r).astype(float))
                    val = apply_semigroup(model, engine, ind, A * r**2).values[x]
                    k_min = min(k_min, float(val))
            if k_min > best[1]:
                best = (float(A), k_min)
        meta["ball_mass_A"] = best[0]
        meta["ball_mass_K"] = best[1]
        samples.append({"part": "ball-mass", "A": best[0], "lhs": 0.0,
                        "rhs": best[1], "margin": best[1]})
    return _report("kernel-bounds", model.model_id, samples, tolerance, 1.0, meta)


def _unit_ball_volume(n):
    return {1.0: 2.0, 2.0: np.pi, 3.0: 4 * np.pi / 3}[float(n)]


# ---------------------------------------------------------------------------
# volume regularity


def check_volume_regularity(model, oracle, centers, radii,
                            dist_method: str = "auto",
                            expected_small_ratio: float | None = None,
                            ratio_window: tuple | None = None,
                            exponent_rtol: float = 0.10,
                            monotone_upper: float | None = None,
                            tolerance: Tolerance | None = None) -> MarginReport:
    """Doubling ratios mu(B(x, 2r))/mu(B(x, r)) and the growth exponent.

    The doubling constant is the sample sup of the ratio; the reverse
    growth exponent is fitted from log volume against log radius and must
    match log2 of the doubling constant within ``exponent_rtol``.
    """
    radii = np.asarray(radii, dtype=float)
    tolerance = tolerance or Tolerance(1e-12, 0.0)
    all_r = np.unique(np.concatenate([radii, 2 * radii]))
    ratios, samples = [], []
    slope_tables = []
    for x in centers:
        df = distance_field(model, oracle, x, method=dist_method)
        safe = float(model.metric_distance_to_boundary()[x])
        if np.isfinite(safe) and 2 * radii.max() > safe:
            raise ValueError(
                f"radii reach the truncation boundary (safe range {safe:g})"
            )
        bt = ball_table(model, df, all_r)
        vol = dict(zip(all_r, bt.volumes))
        slope_tables.append(bt)
        for r in radii:
            ratio = vol[2 * r] / vol[r]
            ratios.append(ratio)
            samples.append({"part": "doubling", "x": int(x), "r": float(r),
                            "lhs": float(vol[2 * r]), "rhs": float(vol[r]),
                            "margin": 0.0, "ratio": float(ratio)})
    ratios = np.array(ratios)
    c_doub = float(ratios.max())
    meta = {"doubling_constant": c_doub, "Q_from_doubling": float(np.log2(c_doub)),
            "ratio_min": float(ratios.min())}
    if oracle.exact_ball_volume is not None:
        r0 = float(radii[0])
        exact_ratio = (oracle.exact_ball_volume(model.nodes[centers[0]], 2 * r0)
                       / oracle.exact_ball_volume(model.nodes[centers[0]], r0))
        meta["oracle_small_ratio"] = float(exact_ratio)

    slopes = [volume_growth_exponent(bt) for bt in slope_tables]
    q_fit = float(np.mean(slopes))
    meta["growth_exponent_fit"] = q_fit
    gap = abs(q_fit - np.log2(c_doub)) / np.log2(c_doub)
    samples.append({"part": "reverse-exponent", "lhs": float(gap),
                    "rhs": exponent_rtol, "margin": float(exponent_rtol - gap)})

    if ratio_window is not None:
        lo, hi = ratio_window
        worst = min(float(ratios.min() - lo), float(hi - ratios.max()))
        samples.append({"part": "ratio-window", "lhs": lo, "rhs": hi,
                        "margin": worst})
    if expected_small_ratio is not None:
        small = float(np.mean(ratios[: max(1, len(radii) // 3)]))
        meta["small_r_ratio"] = small
    if monotone_upper is not None:
        worst = float(monotone_upper - ratios.max()) + tolerance.rel * monotone_upper
        samples.append({"part": "ratio-upper", "lhs": float(ratios.max()),
                        "rhs": monotone_upper, "margin": worst})
        if oracle.exact_ball_volume is not None:
            ex = [oracle.exact_ball_volume(model.nodes[centers[0]], 2 * r)
                  / oracle.exact_ball_volume(model.nodes[centers[0]], r)
                  for r in radii]
            samples.append({"part": "ratio-upper-oracle",
                            "lhs": float(np.max(ex)), "rhs": monotone_upper,
                            "margin": float(monotone_upper - np.max(ex))})
    meta["series_columns"] = ["r", "ratio"]
    meta["series"] = [[float(s["r"]), s["ratio"]] for s in samples
                      if s.get("part") == "doubling"]
    return _report("volume-doubling", model.model_id, samples, tolerance, 1.0, meta)


# ---------------------------------------------------------------------------
# Neumann Poincare on domains


def check_neumann_poincare(submodel, diameter: float, constant: float,
                           expected_product: float | None = None,
                           product_rtol: float = 0.01, k: int = 4,
                           seed: int = 0,
                           tolerance: Tolerance | None = None) -> MarginReport:
    """lambda_1(Neumann) >= constant / diam^2 on a restricted domain.

    The relative slack also covers the sharp case, where the discrete gap
    converges to the optimal constant from below.
    """
    tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
    sd = spectral_decompose(submodel, k=min(k, submodel.n_nodes), seed=seed)
    lam1 = float(sd.eigenvalues[1])
    product = lam1 * diameter**2
    samples = [{"quantity": "gap-vs-diameter", "lhs": constant, "rhs": product,
                "margin": product - constant}]
    meta = {"lambda1": lam1, "diameter": diameter, "constant": constant,
            "product": product}
    if expected_product is not None:
        gap = abs(product / expected_product - 1.0)
        samples.append({"quantity": "sharp-product", "lhs": float(gap),
                        "rhs": product_rtol, "margin": float(product_rtol - gap)})
        meta["expected_product"] = expected_product
    return _report("neumann-poincare", submodel.model_id, samples, tolerance,
                   scale=max(1.0, product), metadata=meta)


# ---------------------------------------------------------------------------
# Sobolev family


def lp_norm(model, values, p):
    mu_hat = model.mu / model.total_measure
    return float((mu_hat @ np.abs(values) ** p) ** (1.0 / p))


def dirichlet_normalized(model, values):
    mu_hat = model.mu / model.total_measure
    return -float(mu_hat @ (values * (model.L @ values)))


def sharp_sobolev_sides(model, oracle, values, p):
    """(lhs, rhs) of the sharp positive-curvature Sobolev family at index p.

    p = 1 is the sharp Poincare form, p = 2 the sharp log-Sobolev form,
    p > 2 the Lebesgue-norm form; the measure is normalized internally.
    """
    rho, n = oracle.ricci_lower, float(oracle.dim)
    coef = n * rho / (n - 1)
    dir_ = dirichlet_normalized(model, values)
    if p == 1:
        lhs = coef * (lp_norm(model, values, 2) ** 2 - lp_norm(model, values, 1) ** 2)
    elif p == 2:
        lhs = coef / 2 * _entropy(model, values**2)
    else:
        lhs = coef / (p - 2) * (lp_norm(model, values, p) ** 2
                                - lp_norm(model, values, 2) ** 2)
    return lhs, dir_


def check_sobolev_sharp(model, oracle, suite, p_list=(1.0, 2.0, 40.0),
                        extremal_suite=None, extremal_rtol: float = 0.05,
                        tolerance: Tolerance | None = None) -> MarginReport:
    """Sharp Sobolev family on a positive-curvature model (normalized measure)."""
    rho = oracle.ricci_lower
    if rho <= 0:
        raise NotApplicableError("sharp Sobolev family needs rho > 0")
    tolerance = tolerance or Tolerance(1e-12, 0.02, mesh_order=2)
    samples, scale = [], 0.0
    for p in p_list:
        for nf in suite:
            v = nf.field.values / max(np.max(np.abs(nf.field.values)), 1e-300)
            lhs, rhs = sharp_sobolev_sides(model, oracle, v, p)
            scale = max(scale, abs(rhs), abs(lhs))
            samples.append({"p": float(p), "field": nf.name, "lhs": lhs,
                            "rhs": rhs, "margin": rhs - lhs})
    meta = {"p_list": list(map(float, p_list))}
    if extremal_suite:
        p = max(p_list)
        worst = 0.0
        for nf in extremal_suite:
            v = nf.field.values
            lhs, rhs = sharp_sobolev_sides(model, oracle, v, p)
            ratio = lhs / rhs if rhs > 0 else 0.0
            worst = max(worst, abs(1 - ratio))
            samples.append({"p": float(p), "field": nf.name, "lhs": lhs,
                            "rhs": rhs, "margin": rhs - lhs,
                            "equality_ratio": float(ratio)})
        samples.append({"quantity": "extremal-proximity", "lhs": worst,
                        "rhs": extremal_rtol,
                        "margin": (extremal_rtol - worst) * scale})
        meta["extremal_worst_gap"] = worst
    return _report("sobolev-sharp", model.model_id, samples, tolerance, scale, meta)


def check_sobolev_embedding(model, oracle, suite,
                            tolerance: Tolerance | None = None) -> MarginReport:
    """Polynomial-decay Sobolev embedding ||f||_{2n/(n-2)} <= C ||sqrt(Gamma f)||_2.

    The constant comes from the flat on-diagonal kernel bound
    p(t) <= (4 pi t)^{-n/2}; it is not sharp, so the margin has genuine slack.
    Needs n > 2 and compactly supported (bump-like) fields.
    """
    n = float(oracle.dim)
    if n <= 2:
        raise NotApplicableError("embedding form needs n > 2")
    c_kernel = (4 * np.pi) ** (-n / 2)
    const = 2 ** (1 - 1 / n) * 2 * n * c_kernel ** (1 / n) / ((n - 2) * np.sqrt(np.pi))
    tolerance = tolerance or Tolerance(1e-12, 0.01)
    p_crit = 2 * n / (n - 2)
    samples = []
    for nf in suite:
        v = nf.field.values
        lhs = float((model.mu @ np.abs(v) ** p_crit) ** (1 / p_crit))
        grad = float(np.sqrt(model.mu @ carre_du_champ(model, nf.field).values))
        rhs = const * grad
        samples.append({"field": nf.name, "lhs": lhs, "rhs": rhs,
                        "margin": _norm_margin(lhs, rhs)})
    return _report("sobolev-embedding", model.model_id, samples, tolerance, 1.0,
                   {"constant": const, "p": p_crit, "kernel_C": c_kernel})


def check_isoperimetric_balls(model, oracle, centers, radii,
                              expected_ratio: float | None = None,
                              constancy_rtol: float = 0.12,
                              value_rtol: float = 0.06,
                              dist_method: str = "auto",
                              tolerance: Tolerance | None = None) -> MarginReport:
    """mu(B)^((n-1)/n) <= C P(B) on metric balls, with the fitted C.

    Ball perimeters use the coarea rate dV/dr, which matches the perimeter
    of smooth metric balls (the cut-edge perimeter measures the anisotropic
    projected boundary and is reported alongside).  Volumes and perimeters
    are averaged over centers before fitting to wash out staircase noise.
    """
    n = float(oracle.dim)
    radii = np.asarray(radii, dtype=float)
    tolerance = tolerance or Tolerance(1e-12, 0.0)
    vols = np.zeros_like(radii)
    cper = np.zeros_like(radii)
    xper = np.zeros_like(radii)
    for x in centers:
        df = distance_field(model, oracle, x, method=dist_method)
        bt = ball_table(model, df, radii)
        vols += bt.volumes
        cper += bt.coarea_perimeters
        xper += bt.perimeters
    vols /= len(centers)
    cper /= len(centers)
    xper /= len(centers)
    ratio = vols ** ((n - 1) / n) / cper
    samples = []
    for r, v, pmt, rat in zip(radii, vols, cper, ratio):
        samples.append({"r": float(r), "lhs": float(v ** ((n - 1) / n)),
                        "rhs": float(pmt), "margin": 0.0, "ratio": float(rat)})
    spread = float((ratio.max() - ratio.min()) / ratio.mean())
    samples.append({"quantity": "ratio-constancy", "lhs": spread,
                    "rhs": constancy_rtol, "margin": constancy_rtol - spread})
    meta = {"fitted_C3": float(ratio.max()), "ratio_mean": float(ratio.mean()),
            "spread": spread,
            "cut_perimeters": [float(p) for p in xper]}
    if expected_ratio is not None:
        gap = float(abs(ratio.mean() / expected_ratio - 1.0))
        samples.append({"quantity": "ratio-value", "lhs": gap,
                        "rhs": value_rtol, "margin": value_rtol - gap})
        meta["expected_ratio"] = expected_ratio
    return _report("isoperimetric-balls", model.model_id, samples, tolerance,
                   1.0, meta)


def diameter_bound(p: float, A: float) -> float:
    """Compactness bound pi sqrt(2 p A) / (p - 2) from the p-norm inequality.

    Scale-invariance reduction: rescaling the metric by c maps the
    inequality constant A to A/c^2, so the bound must be pi at the
    normalized constant 4/(n_p (n_p - 2)) with n_p = 2p/(p-2); solving
    gives the stated expression (also the form the sharp positive-curvature
    family saturates on round spheres).
    """
    if p <= 2:
        raise ValueError("needs p > 2")
    return np.pi * np.sqrt(2 * p * A) / (p - 2)


def check_diameter(model, oracle, p: float = 40.0,
                   tolerance: Tolerance | None = None,
                   myers_rtol: float = 0.05) -> MarginReport:
    """Diameter corollary of the verified sharp Sobolev constant."""
    rho, n = oracle.ricci_lower, float(oracle.dim)
    if rho <= 0:
        raise NotApplicableError("diameter bound needs rho > 0")
    tolerance = tolerance or Tolerance(1e-12, 0.0)
    A = (n - 1) * (p - 2) / (n * rho)
    bound = diameter_bound(p, A)
    diam = oracle.diameter
    samples = [{"quantity": "bound-dominates", "lhs": float(diam),
                "rhs": float(bound), "margin": float(bound - diam)}]
    gap = abs(bound / diam - 1.0)
    samples.append({"quantity": "myers-equality", "lhs": float(gap),
                    "rhs": myers_rtol, "margin": float(myers_rtol - gap)})
    return _report("diameter-bound", model.model_id, samples, tolerance, 1.0,
                   {"p": p, "A": A, "bound": float(bound), "diameter": float(diam)})


# ---------------------------------------------------------------------------
# kernel laws and spectra (structural semigroup checks)


def check_kernel_laws(model, oracle, spectral: SpectralData, engine2=None,
                      t_pairs=((0.3, 0.7), (0.5, 0.5)), n_probe: int = 64,
                      cross_t: float = 0.1, seed: int = 0,
                      tolerance: Tolerance = Tolerance(1e-8),
                      cross_tol: float = 1e-4) -> MarginReport:
    """Symmetry, Chapman-Kolmogorov, and cross-engine agreement.

    The composition law is checked on a probe subset: integrating the
    kernel block against itself with the mu weights must reproduce the
    kernel at the summed time.  ``engine2`` (a stepper) provides the
    independent route to P_t for the cross-oracle comparison.
    """
    rng = np.random.default_rng(seed)
    probe = np.sort(rng.choice(model.n_nodes, size=min(n_probe, model.n_nodes),
                               replace=False))
    samples = []
    full = np.arange(model.n_nodes)
    for (t, s) in t_pairs:
        Kt = heat_kernel_block(spectral, t, probe, full)
        Ks = heat_kernel_block(spectral, s, full, probe)
        Kts = heat_kernel_block(spectral, t + s, probe, probe)
        comp = Kt @ (model.mu[:, None] * Ks)
        ck = float(np.max(np.abs(comp - Kts)))
        sym = float(np.max(np.abs(Kts - Kts.T)))
        neg = float(min(0.0, Kts.min()))
        samples.append({"law": "chapman-kolmogorov", "t": float(t), "s": float(s),
                        "lhs": ck, "rhs": 0.0, "margin": -ck})
        samples.append({"law": "symmetry", "t": float(t + s), "lhs": sym,
                        "rhs": 0.0, "margin": -sym})
        samples.append({"law": "positivity", "t": float(t + s), "lhs": -neg,
                        "rhs": 0.0, "margin": neg})
    meta = {}
    if engine2 is not None:
        f = model.field(rng.standard_normal(model.n_nodes))
        a = apply_semigroup(model, spectral, f, cross_t).values
        b = apply_semigroup(model, engine2, f, cross_t).values
        gap = float(np.max(np.abs(a - b)))
        samples.append({"law": "cross-engine", "t": float(cross_t), "lhs": gap,
                        "rhs": cross_tol, "margin": cross_tol - gap})
        meta["cross_engine_sup_diff"] = gap
    return _report("kernel-laws", model.model_id, samples, tolerance, 1.0, meta)


def check_spectrum(model, oracle, spectral: SpectralData, count: int,
                   rtol: float = 0.02,
                   tolerance: Tolerance | None = None) -> MarginReport:
    """Retained eigenvalues against the oracle's closed-form spectrum."""
    if oracle.exact_eigenvalues is None:
        raise NotApplicableError("oracle has no closed-form spectrum")
    tolerance = tolerance or Tolerance(1e-12, 0.0)
    lam = spectral.eigenvalues[:count]
    ref = np.asarray(oracle.exact_eigenvalues(count), dtype=float)
    samples = []
    for k, (a, b) in enumerate(zip(lam, ref)):
        gap = abs(a - b) / max(abs(b), 1.0)
        samples.append({"k": k, "lhs": float(gap), "rhs": rtol,
                        "margin": float(rtol - gap), "discrete": float(a),
                        "exact": float(b)})
    return _report("spectrum", model.model_id, samples, tolerance, 1.0,
                   {"rtol": rtol, "count": count})


# ---------------------------------------------------------------------------
# distances


def check_distance_sandwich(model, oracle, n_pairs: int = 50, seed: int = 0,
                            budget: int = 30,
                            tolerance: Tolerance | None = None) -> MarginReport:
    """Certified dual lower bounds never exceed graph distances (plus slack)."""
    h = float(model.meta.get("h", 0.0) or 0.0)
    tolerance = tolerance or Tolerance(2 * h, 0.02, mesh_order=1)
    rng = np.random.default_rng(seed)
    samples = []
    scale = 0.0
    for _ in range(n_pairs):
        x, y = rng.integers(0, model.n_nodes, size=2)
        if x == y:
            continue
        g = float(graph_distance(model, int(y)).values[x])
        dc = dual_distance(model, int(x), int(y), budget=budget)
        scale = max(scale, g)
        s = {"x": int(x), "y": int(y), "lhs": dc.value, "rhs": g,
             "margin": g - dc.value, "feasibility": dc.feasibility}
        if oracle.exact_distance is not None:
            s["oracle"] = float(oracle.exact_distance(model.nodes[x], model.nodes[y]))
        samples.append(s)
    return _report("distance-sandwich", model.model_id, samples, tolerance,
                   scale, {"n_pairs": n_pairs})
