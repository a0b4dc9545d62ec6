"""
Dense semidefinite programming
Primal-dual interior-point solver (HKM direction, Mehrotra predictor-corrector)
for small complex Hermitian SDPs, and rank-one extraction
"""

import numpy as np
import scipy.linalg as sla

from src.exceptions import ConfigError, DegenerateVectorError, NotHermitianError
from src.models import SdpSolution
from src.numerics import hermitize, is_hermitian, leading_eigpair

STEP_FRACTION = 0.98
DIVERGENCE = 1e12


def embed(A):
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix"""
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def unembed(X, d):
    """Hermitian matrix recovered from a real 2d x 2d PSD matrix"""
    X11, X12 = X[:d, :d], X[:d, d:]
    X21, X22 = X[d:, :d], X[d:, d:]
    return hermitize(0.5 * (X11 + X22) + 0.5j * (X21 - X12))


def _max_step_psd(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        # iterate sits on the cone boundary
        return 0.0
    half = sla.solve_triangular(L, dX, lower=True)
    S = sla.solve_triangular(L, half.T, lower=True)
    lam = sla.eigvalsh(0.5 * (S + S.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class _StandardForm:
    """min <C, X> + c_l . x  s.t.  <A_i, X> + A_l[i] . x = b_i,  X psd, x >= 0"""

    def __init__(self, C, mats, lp, rhs, lp_cost):
        self.C = C
        self.mats = mats
        self.lp = lp
        self.rhs = rhs
        self.lp_cost = lp_cost


def _presolve(problem):
    """
    Drop linearly dependent equalities (after checking consistency) and
    inequalities implied by the equalities. Returns (eq, ineq, infeasible).
    """
    eqs = list(problem.equalities)
    ineqs = list(problem.inequalities)
    if not eqs:
        return eqs, ineqs, False
    rows = np.array([embed(A).ravel() for A, _ in eqs])
    rhs = np.array([float(b) for _, b in eqs])
    _, R, piv = sla.qr(rows.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(diag[0], 1e-300))) if diag.size else 0
    keep = np.sort(piv[:rank])
    basis = rows[keep].T

    for j in sorted(set(range(len(eqs))) - set(keep.tolist())):
        coef = np.linalg.lstsq(basis, rows[j], rcond=None)[0]
        if abs(coef @ rhs[keep] - rhs[j]) > 1e-8 * max(1.0, abs(rhs[j])):
            return eqs, ineqs, True

    kept_ineqs = []
    for C, d in ineqs:
        vec = embed(C).ravel()
        coef = np.linalg.lstsq(basis, vec, rcond=None)[0]
        resid = np.linalg.norm(basis @ coef - vec)
        if resid <= 1e-10 * max(np.linalg.norm(vec), 1e-300):
            if coef @ rhs[keep] > d + 1e-9 * max(1.0, abs(d)):
                return eqs, ineqs, True
            continue
        kept_ineqs.append((C, d))
    return [eqs[i] for i in keep], kept_ineqs, False


def _standard_form(problem, eqs, ineqs):
    n_ineq = len(ineqs)
    mats, lp, rhs = [], [], []
    for A, b in eqs:
        mats.append(0.5 * embed(A))
        lp.append(np.zeros(n_ineq))
        rhs.append(float(b))
    for j, (C, d) in enumerate(ineqs):
        mats.append(0.5 * embed(C))
        row = np.zeros(n_ineq)
        row[j] = 1.0
        lp.append(row)
        rhs.append(float(d))
    mats = np.array(mats)
    lp = np.array(lp).reshape(len(rhs), n_ineq)
    rhs = np.array(rhs)
    # row normalization makes the iterates invariant to constraint scaling
    norms = np.sqrt(np.sum(mats ** 2, axis=(1, 2)) + np.sum(lp ** 2, axis=1))
    norms = np.where(norms > 0, norms, 1.0)
    mats /= norms[:, None, None]
    lp /= norms[:, None]
    rhs /= norms
    C = -0.5 * embed(problem.objective)
    omega = max(1.0, float(np.linalg.norm(C)))
    return _StandardForm(C / omega, mats, lp, rhs, np.zeros(n_ineq)), omega


def _interior_point(sf, tol, max_iter):
    C, A, Al, b, cl = sf.C, sf.mats, sf.lp, sf.rhs, sf.lp_cost
    n = C.shape[0]
    m, k = Al.shape
    eye = np.eye(n)
    norm_a = np.sqrt(np.sum(A ** 2, axis=(1, 2)))
    xi_p = max(10.0, np.sqrt(n), n * float(np.max((1.0 + np.abs(b)) / (1.0 + norm_a))))
    xi_d = max(10.0, np.sqrt(n), float(np.linalg.norm(C)), float(norm_a.max()))
    X, x = xi_p * eye, xi_p * np.ones(k)
    Z, z = xi_d * eye, xi_d * np.ones(k)
    y = np.zeros(m)
    norm_b = np.linalg.norm(b)
    norm_c = np.linalg.norm(C) + np.linalg.norm(cl)

    trace = []
    status = "max_iter"
    best = None
    stalls = 0
    for it in range(1, max_iter + 1):
        rp = b - np.einsum("iab,ab->i", A, X) - Al @ x
        Rd = C - Z - np.einsum("i,iab->ab", y, A)
        rdl = cl - z - Al.T @ y
        pobj = float(np.sum(C * X) + cl @ x)
        dobj = float(b @ y)
        mu = (float(np.sum(X * Z)) + float(x @ z)) / (n + k)
        pres = float(np.linalg.norm(rp) / (1.0 + norm_b))
        dres = float(np.sqrt(np.sum(Rd ** 2) + rdl @ rdl) / (1.0 + norm_c))
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        trace.append({'iter': it, 'gap': gap, 'primal_res': pres, 'dual_res': dres})
        merit = max(pres, dres, gap)
        if best is None or merit < best[0]:
            best = (merit, X.copy(), x.copy(), y.copy(), pobj, dobj, pres, dres, gap)
        if merit < tol:
            status = "optimal"
            break
        if np.linalg.norm(X) > DIVERGENCE or np.linalg.norm(y) > DIVERGENCE:
            status = "infeasible"
            break

        Zinv = np.linalg.inv(Z)
        Zinv = 0.5 * (Zinv + Zinv.T)
        AX = A @ X
        AZ = A @ Zinv
        schur = np.einsum("iab,jba->ij", AX, AZ) + (Al * (x / z)) @ Al.T
        schur = 0.5 * (schur + schur.T)
        try:
            factor = sla.cho_factor(schur)
            solve = lambda r: sla.cho_solve(factor, r)
        except np.linalg.LinAlgError:
            solve = lambda r: np.linalg.lstsq(schur, r, rcond=None)[0]
        XRZ = X @ Rd @ Zinv
        a_xrz = np.einsum("iab,ba->i", A, XRZ)
        lp_rd = Al @ ((x / z) * rdl)

        def direction(K, Kl):
            KZ = K @ Zinv
            rhs = b - np.einsum("iab,ba->i", A, KZ) + a_xrz - Al @ (Kl / z) + lp_rd
            dy = solve(rhs)
            dZ = Rd - np.einsum("i,iab->ab", dy, A)
            dz = rdl - Al.T @ dy
            raw = KZ - X @ dZ @ Zinv
            dX = 0.5 * (raw + raw.T) - X
            dx = Kl / z - x - (x / z) * dz
            return dX, dx, dy, dZ, dz

        # predictor
        dX, dx, dy, dZ, dz = direction(np.zeros_like(X), np.zeros(k))
        ap = min(1.0, _max_step_psd(X, dX), _max_step_lp(x, dx))
        ad = min(1.0, _max_step_psd(Z, dZ), _max_step_lp(z, dz))
        mu_aff = (float(np.sum((X + ap * dX) * (Z + ad * dZ)))
                  + float((x + ap * dx) @ (z + ad * dz))) / (n + k)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        dX, dx, dy, dZ, dz = direction(sigma * mu * eye - dX @ dZ, sigma * mu - dx * dz)
        ap = min(1.0, STEP_FRACTION * min(_max_step_psd(X, dX), _max_step_lp(x, dx)))
        ad = min(1.0, STEP_FRACTION * min(_max_step_psd(Z, dZ), _max_step_lp(z, dz)))
        X = X + ap * dX
        X = 0.5 * (X + X.T)
        x = x + ap * dx
        y = y + ad * dy
        Z = Z + ad * dZ
        Z = 0.5 * (Z + Z.T)
        z = z + ad * dz
        stalls = stalls + 1 if max(ap, ad) < 1e-10 else 0
        if stalls >= 5:
            break

    if status == "optimal":
        return X, status, trace, (pobj, dobj, pres, dres, gap)
    if status == "infeasible":
        return X, status, trace, (pobj, dobj, pres, dres, gap)
    _, X, x, y, pobj, dobj, pres, dres, gap = best
    return X, status, trace, (pobj, dobj, pres, dres, gap)


def solve_sdp(problem):
    """
    maximize tr(A0 X) subject to the problem's trace equalities and
    inequalities over Hermitian PSD X.
    """
    d = problem.dim
    for mat in [problem.objective] + [A for A, _ in problem.equalities] + [C for C, _ in problem.inequalities]:
        if not is_hermitian(mat, tol=1e-12):
            raise NotHermitianError("SDP data matrices must be Hermitian")
    if not problem.equalities and not problem.inequalities:
        raise ConfigError("SDP needs at least one constraint")

    eqs, ineqs, infeasible = _presolve(problem)
    if infeasible:
        return SdpSolution(X=np.zeros((d, d), dtype=complex), value=float("nan"),
                           dual_value=float("nan"), gap=float("nan"), status="infeasible",
                           iterations=0, primal_res=float("inf"), dual_res=float("inf"))

    sf, omega = _standard_form(problem, eqs, ineqs)
    Xr, status, trace, (pobj, dobj, _, dres, _) = _interior_point(sf, problem.tolerance, problem.max_iter)
    X = unembed(Xr, d)
    value = float(np.real(np.trace(problem.objective @ X)))
    dual_value = -omega * dobj
    residuals = [abs(np.real(np.trace(A @ X)) - b) for A, b in problem.equalities]
    residuals += [max(0.0, np.real(np.trace(C @ X)) - e) for C, e in problem.inequalities]
    return SdpSolution(
        X=X,
        value=value,
        dual_value=float(dual_value),
        gap=float(dual_value - value),
        status=status,
        iterations=len(trace),
        primal_res=float(max(residuals)),
        dual_res=float(dres),
        trace=trace,
    )


def rank1_extract(X, keep, anchor=None):
    """
    First `keep` entries of sqrt(lambda_1) v_1 and the leaked fraction
    1 - lambda_1 / tr(X). The phase is fixed by the anchor entry when given,
    else by the largest-magnitude entry, which is made real and positive.
    """
    X = np.asarray(X)
    total = float(np.real(np.trace(X)))
    if total <= 1e-300:
        raise DegenerateVectorError("cannot extract a rank-one factor from a zero matrix")
    lam, v = leading_eigpair(X)
    vec = np.sqrt(max(lam, 0.0)) * v
    ref = anchor if anchor is not None and abs(vec[anchor]) > 1e-12 * np.linalg.norm(vec) \
        else int(np.argmax(np.abs(vec)))
    vec = vec * (np.conj(vec[ref]) / abs(vec[ref]))
    return vec[:keep], float(max(0.0, 1.0 - lam / total))
