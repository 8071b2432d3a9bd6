"""Dense trust-region SQP solver for small smooth NLPs.

Solves
    min f(z)   s.t.  c_eq(z) = 0,  c_ineq(z) >= 0,  lb <= z <= ub

Each iteration minimizes an l1 exact-penalty model inside a trust region:
the equality and general-inequality linearizations are relaxed with
penalized slacks, which keeps every subproblem feasible (the same device
SNOPT calls elastic mode).  Subproblems are solved with a Mehrotra
predictor-corrector interior-point method whose slack blocks are
eliminated analytically, so the factored system stays at
(n + n_eq) x (n + n_eq).  Curvature comes from damped BFGS on the
Lagrangian.

Everything is dense and deterministic; intended for problems up to a few
hundred variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


# ---------------------------------------------------------------------------
# Generic convex QP:  min 1/2 p'Hp + g'p   s.t.  Ap = b,  Cp >= d
# ---------------------------------------------------------------------------

@dataclass
class QPResult:
    p: np.ndarray
    y: np.ndarray          # equality multipliers
    z: np.ndarray          # inequality multipliers (>= 0)
    converged: bool
    iterations: int


def solve_qp(H, g, A=None, b=None, C=None, d=None, max_iter: int = 60,
             tol: float = 1e-9) -> QPResult:
    """Mehrotra predictor-corrector interior point for a convex QP."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = len(g)
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    C = np.zeros((0, n)) if C is None else np.asarray(C, dtype=float)
    d = np.zeros(0) if d is None else np.asarray(d, dtype=float)
    mE, mI = len(b), len(d)

    if mI == 0:
        K = np.zeros((n + mE, n + mE))
        K[:n, :n] = H
        K[:n, n:] = -A.T
        K[n:, :n] = A
        try:
            sol = np.linalg.solve(K, np.concatenate([-g, b]))
        except np.linalg.LinAlgError:
            return QPResult(np.zeros(n), np.zeros(mE), np.zeros(0), False, 0)
        return QPResult(sol[:n], sol[n:], np.zeros(0), True, 1)

    p = np.zeros(n)
    y = np.zeros(mE)
    s_raw = C @ p - d
    s = s_raw + max(0.1, -1.5 * min(s_raw.min(), 0.0))
    zi = np.ones(mI)

    scale = 1.0 + max(np.abs(g).max(initial=0.0), np.abs(b).max(initial=0.0),
                      np.abs(d).max(initial=0.0))
    reg = 1e-9 * (1.0 + np.abs(H).max())
    best = (np.inf, p.copy(), y.copy(), zi.copy())

    for it in range(max_iter):
        rd = H @ p + g - A.T @ y - C.T @ zi
        rp = A @ p - b
        rc = C @ p - s - d
        mu = s @ zi / mI
        err = max(np.abs(rd).max(initial=0.0), np.abs(rp).max(initial=0.0),
                  np.abs(rc).max(initial=0.0), mu)
        if err < best[0]:
            best = (err, p.copy(), y.copy(), zi.copy())
        if err <= tol * scale:
            return QPResult(p, y, zi, True, it)
        if err > 1e4 * best[0] + 1e3 * scale:
            break   # late-stage blowup; fall back to the best iterate

        w = np.clip(zi / s, 1e-10, 1e10)
        K = np.zeros((n + mE, n + mE))
        K[:n, :n] = H + (C.T * w) @ C
        K[:n, :n].flat[:: n + mE + 1] += reg
        K[:n, n:] = -A.T
        K[n:, :n] = A
        K[n:, n:] = -reg * np.eye(mE)
        try:
            lu, piv = _lu_factor(K)
        except np.linalg.LinAlgError:
            break

        def kkt_solve(rs_vec):
            rhs = np.concatenate([-(rd + C.T @ ((rs_vec + zi * rc) / s)), -rp])
            sol = _lu_solve(lu, piv, rhs)
            dp, dy = sol[:n], sol[n:]
            ds = C @ dp + rc
            dz = -(rs_vec + zi * ds) / s
            return dp, dy, ds, dz

        dp_a, dy_a, ds_a, dz_a = kkt_solve(s * zi)
        a_p = _max_step(s, ds_a)
        a_d = _max_step(zi, dz_a)
        mu_aff = (s + a_p * ds_a) @ (zi + a_d * dz_a) / mI
        sigma = np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-4, 0.99)

        dp, dy, ds, dz = kkt_solve(s * zi + ds_a * dz_a - sigma * mu)
        a_p = min(1.0, 0.995 * _max_step(s, ds))
        a_d = min(1.0, 0.995 * _max_step(zi, dz))
        p = p + a_p * dp
        s = s + a_p * ds
        y = y + a_d * dy
        zi = zi + a_d * dz

    _, p, y, zi = best
    return QPResult(p, y, zi, best[0] <= 1e-6 * scale, max_iter)


def _max_step(v, dv):
    mask = dv < 0.0
    if not np.any(mask):
        return 1.0
    return min(1.0, float(np.min(-v[mask] / dv[mask])))


def _lu_factor(K):
    from scipy.linalg import lu_factor
    return lu_factor(K, check_finite=False)


def _lu_solve(lu, piv, rhs):
    from scipy.linalg import lu_solve
    return lu_solve((lu, piv), rhs, check_finite=False)


# ---------------------------------------------------------------------------
# l1-penalty (elastic) QP subproblem
#
#   min  g'p + 1/2 p'Hp + mu*sum(vp + vm + w) + eps/2 (|vp|^2+|vm|^2+|w|^2)
#   s.t. JE p + cE = vp - vm,   JI p + cI + w >= 0,
#        vp, vm, w >= 0,        lb <= p <= ub
#
# Always feasible; the slack blocks are diagonal and eliminated before
# factorization.
# ---------------------------------------------------------------------------

@dataclass
class L1QPResult:
    p: np.ndarray
    y: np.ndarray           # equality multipliers (|y| <= mu + eps*v)
    z_ineq: np.ndarray      # general-inequality multipliers
    z_lo: np.ndarray        # active lower-bound multipliers
    z_hi: np.ndarray        # active upper-bound multipliers
    converged: bool
    iterations: int


def solve_l1_qp(H, g, JE, cE, JI, cI, lb, ub, mu: float, eps: float = 1e-8,
                max_iter: int = 60, tol: float = 1e-9) -> L1QPResult:
    H = np.asarray(H, float)
    g = np.asarray(g, float)
    n = len(g)
    JE = np.zeros((0, n)) if JE is None else np.asarray(JE, float)
    cE = np.zeros(0) if cE is None else np.asarray(cE, float)
    JI = np.zeros((0, n)) if JI is None else np.asarray(JI, float)
    cI = np.zeros(0) if cI is None else np.asarray(cI, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    mE, mI = len(cE), len(cI)

    d0 = 0.1
    p = np.zeros(n)
    y = np.zeros(mE)
    vp = np.maximum(cE, 0.0) + d0
    vm = np.maximum(-cE, 0.0) + d0
    w = np.maximum(-cI, 0.0) + d0
    sI = np.maximum(cI + w, d0)
    slo = np.maximum(-lb, d0)
    shi = np.maximum(ub, d0)
    # Duals chosen so every complementarity product starts at mu0: a
    # perfectly centered (if infeasible) starting point.
    mu0 = 1.0
    zI = mu0 / sI
    zw = mu0 / w
    zvp = mu0 / vp
    zvm = mu0 / vm
    zlo = mu0 / slo
    zhi = mu0 / shi

    n_pairs = mI * 2 + mE * 2 + n * 2
    scale = 1.0 + max(np.abs(g).max(initial=0.0), np.abs(cE).max(initial=0.0),
                      np.abs(cI).max(initial=0.0), mu)
    reg = 1e-11 * (1.0 + np.abs(H).max())
    best = None
    stagnant = 0

    for it in range(max_iter):
        r_p = H @ p + g - JE.T @ y - JI.T @ zI - zlo + zhi
        r_vp = mu + eps * vp + y - zvp
        r_vm = mu + eps * vm - y - zvm
        r_w = mu + eps * w - zI - zw
        r_y = JE @ p + cE - vp + vm
        r_sI = JI @ p + cI + w - sI
        r_lo = p - lb - slo
        r_hi = ub - p - shi

        gap = (sI @ zI + w @ zw + vp @ zvp + vm @ zvm + slo @ zlo + shi @ zhi)
        mu_c = gap / n_pairs
        err = max(np.abs(r_p).max(initial=0.0), np.abs(r_vp).max(initial=0.0),
                  np.abs(r_vm).max(initial=0.0), np.abs(r_w).max(initial=0.0),
                  np.abs(r_y).max(initial=0.0), np.abs(r_sI).max(initial=0.0),
                  np.abs(r_lo).max(initial=0.0), np.abs(r_hi).max(initial=0.0),
                  mu_c)
        state = (np.clip(p, lb, ub), y.copy(), zI.copy(), zlo.copy(), zhi.copy())
        if best is None or err < best[0]:
            best = (err, state)
            stagnant = 0
        else:
            stagnant += 1
        if err <= tol * scale:
            return L1QPResult(*state, True, it)
        if err > 1e4 * best[0] + 1e3 * scale:
            break   # late-stage numerical blowup; keep the best iterate
        if stagnant >= 8:
            break   # grinding at the round-off floor

        Wlo = np.clip(zlo / slo, 1e-12, 1e12)
        Whi = np.clip(zhi / shi, 1e-12, 1e12)
        WI = np.clip(zI / sI, 1e-12, 1e12)
        Ww = np.clip(zw / w, 1e-12, 1e12)
        Wvp = np.clip(zvp / vp, 1e-12, 1e12)
        Wvm = np.clip(zvm / vm, 1e-12, 1e12)
        Dw = eps + WI + Ww
        Dvp = eps + Wvp
        Dvm = eps + Wvm
        Dy = 1.0 / Dvp + 1.0 / Dvm

        wI_eff = WI - WI * WI / Dw
        P = H + (JI.T * wI_eff) @ JI if mI else H.copy()
        P = P + np.diag(Wlo + Whi)
        P.flat[:: n + 1] += reg

        K = np.zeros((n + mE, n + mE))
        K[:n, :n] = P
        if mE:
            K[:n, n:] = -JE.T
            K[n:, :n] = JE
            K[n:, n:] = np.diag(Dy)
        try:
            lu, piv = _lu_factor(K)
        except np.linalg.LinAlgError:
            break

        def newton(r_cI, r_cw, r_cvp, r_cvm, r_clo, r_chi):
            aI = -(r_cI + zI * r_sI) / sI
            aw = -r_cw / w
            avp = -r_cvp / vp
            avm = -r_cvm / vm
            alo = -(r_clo + zlo * r_lo) / slo
            ahi = -(r_chi + zhi * r_hi) / shi
            bw = -r_w + aI + aw
            bvp = -r_vp + avp
            bvm = -r_vm + avm
            bp = -r_p + JI.T @ aI + alo - ahi - JI.T @ ((WI / Dw) * bw) \
                if mI else -r_p + alo - ahi
            by = -r_y + bvp / Dvp - bvm / Dvm
            sol = _lu_solve(lu, piv, np.concatenate([bp, by]))
            dp, dy = sol[:n], sol[n:]
            dw = (bw - WI * (JI @ dp)) / Dw if mI else np.zeros(0)
            dvp = (bvp - dy) / Dvp
            dvm = (bvm + dy) / Dvm
            dsI = JI @ dp + dw + r_sI if mI else np.zeros(0)
            dslo = dp + r_lo
            dshi = -dp + r_hi
            dzI = -(r_cI + zI * dsI) / sI
            dzw = aw - Ww * dw
            dzvp = avp - Wvp * dvp
            dzvm = avm - Wvm * dvm
            dzlo = -(r_clo + zlo * dslo) / slo
            dzhi = -(r_chi + zhi * dshi) / shi
            return (dp, dy, dvp, dvm, dw, dsI, dslo, dshi,
                    dzI, dzw, dzvp, dzvm, dzlo, dzhi)

        def common_alpha(d):
            (dp, dy, dvp, dvm, dw, dsI, dslo, dshi,
             dzI, dzw, dzvp, dzvm, dzlo, dzhi) = d
            a = min(_max_step(sI, dsI), _max_step(w, dw), _max_step(vp, dvp),
                    _max_step(vm, dvm), _max_step(slo, dslo),
                    _max_step(shi, dshi), _max_step(zI, dzI),
                    _max_step(zw, dzw), _max_step(zvp, dzvp),
                    _max_step(zvm, dzvm), _max_step(zlo, dzlo),
                    _max_step(zhi, dzhi))
            return min(1.0, 0.995 * a)

        def gap_after(d, a):
            (dp, dy, dvp, dvm, dw, dsI, dslo, dshi,
             dzI, dzw, dzvp, dzvm, dzlo, dzhi) = d
            return ((sI + a * dsI) @ (zI + a * dzI)
                    + (w + a * dw) @ (zw + a * dzw)
                    + (vp + a * dvp) @ (zvp + a * dzvp)
                    + (vm + a * dvm) @ (zvm + a * dzvm)
                    + (slo + a * dslo) @ (zlo + a * dzlo)
                    + (shi + a * dshi) @ (zhi + a * dzhi)) / n_pairs

        # Predictor, then a corrector whose centering is escalated until
        # the complementarity gap is guaranteed not to grow.
        d_aff = newton(sI * zI, w * zw, vp * zvp, vm * zvm,
                       slo * zlo, shi * zhi)
        a_aff = common_alpha(d_aff)
        sigma = np.clip((max(gap_after(d_aff, a_aff), 0.0) / mu_c) ** 3,
                        1e-4, 0.99)
        dsI_a, dzI_a = d_aff[5], d_aff[8]
        dw_a, dzw_a = d_aff[4], d_aff[9]
        dvp_a, dzvp_a = d_aff[2], d_aff[10]
        dvm_a, dzvm_a = d_aff[3], d_aff[11]
        dslo_a, dzlo_a = d_aff[6], d_aff[12]
        dshi_a, dzhi_a = d_aff[7], d_aff[13]

        for attempt in range(3):
            t = sigma * mu_c
            if attempt == 2:
                # Pure centering step, no predictor correction.
                d = newton(sI * zI - t, w * zw - t, vp * zvp - t,
                           vm * zvm - t, slo * zlo - t, shi * zhi - t)
            else:
                d = newton(sI * zI + dsI_a * dzI_a - t,
                           w * zw + dw_a * dzw_a - t,
                           vp * zvp + dvp_a * dzvp_a - t,
                           vm * zvm + dvm_a * dzvm_a - t,
                           slo * zlo + dslo_a * dzlo_a - t,
                           shi * zhi + dshi_a * dzhi_a - t)
            a = common_alpha(d)
            if gap_after(d, a) <= max(1.0 - 0.01 * a, sigma) * mu_c:
                break
            sigma = min(0.99, max(10.0 * sigma, 0.5))

        (dp, dy, dvp, dvm, dw, dsI, dslo, dshi,
         dzI, dzw, dzvp, dzvm, dzlo, dzhi) = d
        p += a * dp
        vp += a * dvp
        vm += a * dvm
        w += a * dw
        sI += a * dsI
        slo += a * dslo
        shi += a * dshi
        y += a * dy
        zI += a * dzI
        zw += a * dzw
        zvp += a * dzvp
        zvm += a * dzvm
        zlo += a * dzlo
        zhi += a * dzhi

    err, state = best
    return L1QPResult(*state, bool(err <= 1e-6 * scale), max_iter)


# ---------------------------------------------------------------------------
# NLP definition and the trust-region SQP driver
# ---------------------------------------------------------------------------

@dataclass
class NLP:
    n: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    eq: Callable[[np.ndarray], np.ndarray] | None = None
    eq_jac: Callable[[np.ndarray], np.ndarray] | None = None
    ineq: Callable[[np.ndarray], np.ndarray] | None = None
    ineq_jac: Callable[[np.ndarray], np.ndarray] | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None


@dataclass
class SQPOptions:
    max_iter: int = 400
    tol_feas: float = 1e-8
    tol_stat: float = 1e-6
    tol_step: float = 1e-9
    penalty0: float = 10.0
    max_penalty: float = 1e9
    tr0: float = 5.0
    tr_max: float = 50.0
    tr_min: float = 1e-10


@dataclass
class SQPResult:
    z: np.ndarray
    f: float
    max_viol: float
    iterations: int
    status: str            # converged | max_iter | infeasible | stalled
    eq_mult: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_mult: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _violation_l1(cE, cI):
    return float(np.abs(cE).sum() + np.maximum(0.0, -cI).sum())


def _violation_inf(cE, cI):
    return max(np.abs(cE).max(initial=0.0),
               np.maximum(0.0, -cI).max(initial=0.0))


def solve_sqp(nlp: NLP, z0, options: SQPOptions | None = None) -> SQPResult:
    opt = options or SQPOptions()
    n = nlp.n
    lb = np.full(n, -np.inf) if nlp.lb is None else np.asarray(nlp.lb, float)
    ub = np.full(n, np.inf) if nlp.ub is None else np.asarray(nlp.ub, float)
    z = np.clip(np.asarray(z0, dtype=float).copy(), lb, ub)

    def eval_vals(zz):
        cE = nlp.eq(zz) if nlp.eq is not None else np.zeros(0)
        cI = nlp.ineq(zz) if nlp.ineq is not None else np.zeros(0)
        return nlp.objective(zz), cE, cI

    def eval_jacs(zz):
        JE = nlp.eq_jac(zz) if nlp.eq_jac is not None else np.zeros((0, n))
        JI = nlp.ineq_jac(zz) if nlp.ineq_jac is not None else np.zeros((0, n))
        return nlp.gradient(zz), JE, JI

    f, cE, cI = eval_vals(z)
    grad, JE, JI = eval_jacs(z)
    mE, mI = len(cE), len(cI)

    H = np.eye(n)
    mu_pen = opt.penalty0
    tr = opt.tr0
    best = (z.copy(), f, _violation_inf(cE, cI))
    y_eq = np.zeros(mE)
    y_iq = np.zeros(mI)
    no_progress = 0

    for it in range(opt.max_iter):
        viol = _violation_inf(cE, cI)
        viol_l1 = _violation_l1(cE, cI)
        if viol < best[2] - 1e-16 or (viol <= best[2] and f < best[1]):
            best = (z.copy(), f, viol)

        step_lb = np.maximum(lb - z, -tr)
        step_ub = np.minimum(ub - z, tr)
        qp = solve_l1_qp(H, grad, JE if mE else None, cE if mE else None,
                         JI if mI else None, cI if mI else None,
                         step_lb, step_ub, mu_pen)
        p = qp.p
        y_eq = qp.y
        y_iq = qp.z_ineq

        # Stationarity of the true Lagrangian with the QP multipliers.
        # Bound multipliers only count where the true variable bound (not
        # the trust region) is the binding side of the step box.
        genuine_lo = (lb - z) >= -tr
        genuine_hi = (ub - z) <= tr
        stat = grad - (JE.T @ y_eq if mE else 0.0) - (JI.T @ y_iq if mI else 0.0) \
            - np.where(genuine_lo, qp.z_lo, 0.0) \
            + np.where(genuine_hi, qp.z_hi, 0.0)
        stat_norm = np.abs(np.asarray(stat)).max(initial=0.0)
        tr_interior = np.abs(p).max(initial=0.0) < 0.9 * tr
        grad_scale = 1.0 + np.abs(grad).max(initial=0.0)
        if viol <= opt.tol_feas and (
                stat_norm <= opt.tol_stat * grad_scale
                or (tr_interior and np.abs(p).max(initial=0.0) <= opt.tol_step)):
            return SQPResult(z, f, viol, it, "converged", y_eq, y_iq)

        lin_after = _violation_l1(cE + JE @ p if mE else cE,
                                  cI + JI @ p if mI else cI)
        pred = -(grad @ p + 0.5 * p @ H @ p) + mu_pen * (viol_l1 - lin_after)

        if pred <= 1e-14 * (1.0 + abs(f)):
            if viol <= opt.tol_feas:
                return SQPResult(z, f, viol, it, "converged", y_eq, y_iq)
            if mu_pen < opt.max_penalty:
                mu_pen = min(mu_pen * 10.0, opt.max_penalty)
                continue
            return SQPResult(best[0], best[1], best[2], it, "infeasible",
                             y_eq, y_iq)

        z_try = np.clip(z + p, lb, ub)
        f_try, cE_try, cI_try = eval_vals(z_try)
        phi0 = f + mu_pen * viol_l1
        phi_try = f_try + mu_pen * _violation_l1(cE_try, cI_try)
        ratio = (phi0 - phi_try) / pred

        if ratio < 0.1 and mE:
            # Second-order correction against the Maratos effect.
            p_soc = _soc_step(JE, cE_try)
            if p_soc is not None:
                z_soc = np.clip(z + p + p_soc, lb, ub)
                f_soc, cE_soc, cI_soc = eval_vals(z_soc)
                phi_soc = f_soc + mu_pen * _violation_l1(cE_soc, cI_soc)
                if (phi0 - phi_soc) / pred >= 0.1:
                    z_try, f_try, cE_try, cI_try = z_soc, f_soc, cE_soc, cI_soc
                    phi_try = phi_soc
                    ratio = (phi0 - phi_try) / pred

        if ratio < 0.1:
            tr = max(opt.tr_min, min(tr, np.abs(p).max(initial=0.0)) / 4.0)
            no_progress += 1
            if lin_after > max(opt.tol_feas, 0.5 * viol_l1) \
                    and mu_pen < opt.max_penalty:
                mu_pen = min(mu_pen * 10.0, opt.max_penalty)
            if no_progress >= 30:
                status = "stalled" if best[2] <= opt.tol_feas else "infeasible"
                return SQPResult(best[0], best[1], best[2], it, status,
                                 y_eq, y_iq)
            continue

        no_progress = 0
        if ratio >= 0.75 and np.abs(p).max(initial=0.0) >= 0.9 * tr:
            tr = min(tr * 2.0, opt.tr_max)

        # Raise the penalty when the subproblem could not nearly restore
        # linearized feasibility (trust region or mu too small).
        if lin_after > max(opt.tol_feas, 0.1 * viol_l1) \
                and mu_pen < opt.max_penalty:
            mu_pen = min(mu_pen * 10.0, opt.max_penalty)

        grad_try, JE_try, JI_try = eval_jacs(z_try)
        step = z_try - z
        gL_old = grad - (JE.T @ y_eq if mE else 0.0) \
            - (JI.T @ y_iq if mI else 0.0)
        gL_new = grad_try - (JE_try.T @ y_eq if mE else 0.0) \
            - (JI_try.T @ y_iq if mI else 0.0)
        dg = np.asarray(gL_new - gL_old)

        Hs = H @ step
        sHs = float(step @ Hs)
        sy = float(step @ dg)
        if sHs > 1e-14:
            if sy < 0.2 * sHs:      # Powell damping keeps H positive definite
                theta = 0.8 * sHs / (sHs - sy)
                dg = theta * dg + (1.0 - theta) * Hs
                sy = float(step @ dg)
            if sy > 1e-14:
                H = H - np.outer(Hs, Hs) / sHs + np.outer(dg, dg) / sy

        z, f, cE, cI = z_try, f_try, cE_try, cI_try
        grad, JE, JI = grad_try, JE_try, JI_try

    viol = _violation_inf(cE, cI)
    if viol < best[2]:
        best = (z.copy(), f, viol)
    status = "max_iter" if best[2] <= opt.tol_feas * 100 else "infeasible"
    return SQPResult(best[0], best[1], best[2], opt.max_iter, status,
                     y_eq, y_iq)


def _soc_step(JE, cE_trial):
    """Minimum-norm correction canceling the post-step equality residual."""
    try:
        return -JE.T @ np.linalg.solve(
            JE @ JE.T + 1e-12 * np.eye(len(cE_trial)), cE_trial)
    except np.linalg.LinAlgError:
        return None
