"""Acceptance suite: ten end-to-end criteria, one pass/fail line each.

Run with pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ball_points, random_factored  # noqa: E402

from w2approx.cli import bench_rows  # noqa: E402
from w2approx.exact import certify, dense_round, dense_sinkhorn, entropy, exact_ot  # noqa: E402
from w2approx.factored import FactoredMatrix  # noqa: E402
from w2approx.geometry import cost_decomposition, normalize, pairwise_sq_dists  # noqa: E402
from w2approx.kernel_features import (gaussian_kernel_dense, kernel_anchor,  # noqa: E402
                                      taylor_error_bound, taylor_gkm)
from w2approx.rounding import round_to_polytope  # noqa: E402
from w2approx.sinkhorn import SinkhornConfig, sinkhorn_scale  # noqa: E402
from w2approx.solver import (ENGINEERING, SOLVER_RADIUS, THEORY, approx_w2,  # noqa: E402
                             coupling_cost, select_params, taylor_premise_holds)

RESULTS = {}


def criterion(num, title):
    """Record PASS/FAIL for the wrapped check; the check returns a detail string."""

    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            try:
                detail = fn()
            except BaseException as exc:
                line = f"criterion {num:2d} FAIL  {title}: {type(exc).__name__}: {exc}"
                RESULTS[num] = line.splitlines()[0]
                print(RESULTS[num])
                raise
            RESULTS[num] = (f"criterion {num:2d} PASS  {title}: {detail} "
                            f"[{time.perf_counter() - t0:.1f}s]")
            print(RESULTS[num])
        return run

    return wrap


def oracle(points, p, q):
    """Exact normalized-units optimum with its duality certificate."""
    unit, _ = normalize(points, SOLVER_RADIUS)
    C = pairwise_sq_dists(unit.points)
    sol = exact_ot(C, p, q)
    cert = certify(sol.plan, C, p, q, sol.f, sol.g)
    assert cert.holds(sol.cost), f"oracle certificate failed: {cert}"
    return sol.cost


def min_order(eta):
    M = 1
    while not taylor_premise_holds(eta, M):
        M += 1
    return M


@criterion(1, "additive guarantee, theory mode")
def test_c01_theory_mode_guarantee():
    rng = np.random.default_rng(101)
    worst_hi, worst_lo = -np.inf, np.inf
    for k in range(50):
        n = int(rng.integers(4, 17))
        eps = (0.7, 0.9)[k % 2]
        pts = rng.uniform(-3, 3, (n, 1))
        p, q = rng.dirichlet(np.ones(n), 2)
        res = approx_w2(pts, p, q, eps, THEORY)
        gap = res.w_hat_normalized - oracle(pts, p, q)
        assert -1e-8 <= gap <= eps, f"instance {k}: n={n} eps={eps} gap={gap}"
        worst_hi, worst_lo = max(worst_hi, gap / eps), min(worst_lo, gap)
    return f"50 instances, min gap {worst_lo:.2e}, max gap/eps {worst_hi:.3f}"


@criterion(2, "additive guarantee and eta monotonicity, engineering mode")
def test_c02_engineering_mode():
    rng = np.random.default_rng(202)
    eps = 0.01
    worst = -np.inf
    for k in range(100):
        n = int(rng.integers(8, 65))
        d = 1 + k % 2
        pts = ball_points(rng, n, d) * rng.uniform(0.5, 5)
        p, q = rng.dirichlet(np.ones(n), 2)
        res = approx_w2(pts, p, q, eps, ENGINEERING, eta=5.0, M=45)
        gap = res.w_hat_normalized - oracle(pts, p, q)
        assert -1e-8 <= gap <= 1.0, f"instance {k}: gap {gap}"
        worst = max(worst, gap)

    etas = (3.0, 5.0, 8.0, 12.0)
    for k in range(10):
        n = int(rng.integers(8, 65))
        d = 1 + k % 2
        pts = ball_points(rng, n, d)
        p, q = rng.dirichlet(np.ones(n), 2)
        w = [approx_w2(pts, p, q, eps, ENGINEERING, eta=e, M=max(45, min_order(e))).w_hat_normalized
             for e in etas]
        assert all(b <= a + 1e-6 for a, b in zip(w, w[1:])), f"instance {k}: {w}"
    return f"100 instances, max gap {worst:.3f} <= 1.0; 10 instances monotone in eta {etas}"


@criterion(3, "Taylor kernel bound")
def test_c03_kernel_bound():
    rng = np.random.default_rng(303)
    worst = 0.0
    for k in range(100):
        n, d = int(rng.integers(1, 25)), int(rng.integers(1, 5))
        sigma, M = float(rng.uniform(0.3, 2.0)), int(rng.integers(2, 13))
        pts = ball_points(rng, n, d)
        err = np.abs(gaussian_kernel_dense(pts, sigma) - taylor_gkm(pts, sigma, M).gram()).max()
        bound = taylor_error_bound(sigma, M)
        assert err <= bound + 1e-12, f"config {k}: err {err} > bound {bound}"
        if bound > 1e-10:  # below that the error is plain roundoff
            worst = max(worst, err / bound)
    return f"100 configurations, max err/bound {worst:.3f} (bounds above 1e-10)"


@criterion(4, "kernel floor and log-kernel cost accuracy")
def test_c04_kernel_floor_and_cost():
    rng = np.random.default_rng(404)
    worst = 0.0
    checks = 0
    for n in (4, 8, 16, 32, 64):
        for eps in (0.5, 0.7, 0.9):
            pts = rng.uniform(-1, 1, (n, 1)) * rng.uniform(0.1, 10)
            unit, _ = normalize(pts, SOLVER_RADIUS)
            prm = select_params(n, eps, THEORY)
            x = unit.points - kernel_anchor(unit.points)
            Kt = taylor_gkm(x, prm.sigma, prm.M).gram()
            assert Kt.min() >= prm.kernel_floor, f"n={n} eps={eps}: min K {Kt.min()}"
            C = pairwise_sq_dists(unit.points)
            dev = np.abs(C + np.log(Kt) / prm.eta).max()
            assert dev <= eps / 10, f"n={n} eps={eps}: |C - C~| = {dev}"
            worst = max(worst, dev / (eps / 10))
            checks += 1
    return f"{checks} dense checks, max |C - C~| / (eps/10) = {worst:.2e}"


@criterion(5, "Sinkhorn marginal contract and dense agreement")
def test_c05_sinkhorn():
    rng = np.random.default_rng(505)
    converged = 0
    worst = 0.0
    for k in range(100):
        n, r = int(rng.integers(1, 65)), int(rng.integers(1, 9))
        K = random_factored(rng, n, r, 0, positive=True)
        p, q = rng.dirichlet(np.ones(n) * rng.uniform(0.2, 2), 2)
        delta = float(rng.uniform(0.001, 0.2))
        cap = 100_000 if k % 4 else int(rng.integers(1, 30))
        a = sinkhorn_scale(K, p, q, SinkhornConfig(delta, cap))
        b = dense_sinkhorn(K.to_dense(), p, q, delta, cap)
        if a.converged:
            converged += 1
            P = a.scaled(K).to_dense()
            err = np.abs(P.sum(1) - p).sum() + np.abs(P.sum(0) - q).sum()
            assert err <= delta, f"case {k}: error {err} > delta {delta}"
        dev = max(np.abs(a.left_scale / b.left_scale - 1).max(),
                  np.abs(a.right_scale / b.right_scale - 1).max())
        assert a.iterations == b.iterations and dev <= 1e-9, f"case {k}: scaling deviation {dev}"
        worst = max(worst, dev)
    return f"100 kernels ({converged} converged within delta), max scaling deviation {worst:.1e}"


@criterion(6, "rounding feasibility and l1 bound")
def test_c06_rounding():
    F = FactoredMatrix.gram(np.eye(2)).scale_rows([0.5, 0.5])
    G, rep = round_to_polytope(F, [0.75, 0.25], [0.5, 0.5])
    F2 = FactoredMatrix(G.V, G.left_scale, G.right_scale).to_dense()
    u, w = G.rank_one_terms[0]
    assert F2.tolist() == [[0.5, 0.0], [0.0, 0.25]]
    assert (u * 0.25).tolist() == [0.25, 0.0] and w.tolist() == [0.0, 0.25]
    assert G.to_dense().tolist() == [[0.5, 0.25], [0.0, 0.25]]
    assert np.abs(G.to_dense() - F.to_dense()).sum() == 0.5 == rep.l1_moved

    rng = np.random.default_rng(606)
    for k in range(200):
        n = int(rng.integers(1, 65))
        F = random_factored(rng, n, int(rng.integers(1, 8)), int(rng.integers(0, 3)), positive=True)
        F = F.scale_rows(np.full(n, 1.0 / F.total_mass()))
        p, q = rng.dirichlet(np.ones(n) * rng.uniform(0.2, 2), 2)
        G, _ = round_to_polytope(F, p, q)
        D, Gd = F.to_dense(), G.to_dense()
        feas = np.abs(Gd.sum(1) - p).sum() + np.abs(Gd.sum(0) - q).sum()
        assert feas <= 1e-10, f"case {k}: infeasible by {feas}"
        bound = np.abs(D.sum(1) - p).sum() + np.abs(D.sum(0) - q).sum()
        moved = np.abs(Gd - D).sum()
        assert moved <= bound + 1e-10, f"case {k}: moved {moved} > bound {bound}"
        assert np.abs(Gd - dense_round(D, p, q)).max() <= 1e-10
    return "worked 2x2 example exact; 200 random couplings feasible within the l1 bound"


@criterion(7, "factored cost evaluation")
def test_c07_cost():
    rng = np.random.default_rng(707)
    worst = 0.0
    for k in range(100):
        n, d = int(rng.integers(1, 65)), int(rng.integers(1, 5))
        pts = ball_points(rng, n, d)
        P = random_factored(rng, n, int(rng.integers(1, 9)), int(rng.integers(0, 3)), positive=True)
        dense = float((P.to_dense() * pairwise_sq_dists(pts)).sum())
        got = coupling_cost(P, cost_decomposition(pts))
        if dense == 0.0:  # single point: nothing to compare relatively
            assert abs(got) <= 1e-14, f"case {k}: cost {got} for a zero-cost coupling"
            continue
        dev = abs(got - dense) / abs(dense)
        assert dev <= 1e-10, f"case {k}: rel dev {dev}"
        worst = max(worst, dev)
    return f"100 couplings, max relative deviation {worst:.1e}"


@pytest.mark.slow
@criterion(8, "near-linear runtime scaling")
def test_c08_runtime_scaling():
    sizes = [10_000, 20_000, 40_000, 80_000]
    rows = bench_rows(sizes, d=1, epsilon=0.01, mode=ENGINEERING, eta=5.0, M=45, reps=3, seed=0)
    totals = [r["total"] for r in rows]
    ratios = [b / a for a, b in zip(totals, totals[1:])]
    detail = "total-time ratios " + ", ".join(f"{x:.2f}" for x in ratios) + " (limit 2.5)"
    assert max(ratios) <= 2.5, detail
    return detail


@criterion(9, "entropy of the rounded coupling")
def test_c09_entropy():
    rng = np.random.default_rng(909)
    solves = 0
    for k in range(60):
        if k % 2:
            n = int(rng.integers(4, 17))
            pts = rng.uniform(-1, 1, (n, 1))
            kwargs = dict(epsilon=0.9, mode=THEORY)
        else:
            n = int(rng.integers(8, 65))
            pts = ball_points(rng, n, 1 + k % 4 // 2)
            kwargs = dict(epsilon=0.01, mode=ENGINEERING, eta=5.0, M=45)
        p, q = rng.dirichlet(np.ones(n), 2)
        P = approx_w2(pts, p, q, **kwargs).coupling.to_dense()
        assert P.min() >= 0.0 and abs(P.sum() - 1.0) <= 1e-12
        H = entropy(P / P.sum())
        assert -1e-9 <= H <= 2 * math.log(n) + 1e-9, f"solve {k}: H={H}, n={n}"
        solves += 1
    return f"{solves} solves with H in [0, 2 ln n]"


@criterion(10, "factored algebra matches dense materialization")
def test_c10_factored_oracle():
    rng = np.random.default_rng(1010)

    def rel(a, b):
        return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)

    worst = 0.0
    for k in range(200):
        n, r, t = int(rng.integers(1, 65)), int(rng.integers(1, 9)), int(rng.integers(0, 4))
        A = random_factored(rng, n, r, t)
        D = A.to_dense()
        z = rng.standard_normal(n)
        s = rng.uniform(0.1, 3, n)
        u, w = rng.standard_normal((2, n))
        i, j = (int(v) for v in rng.integers(0, n, 2))
        devs = [
            rel(A.matvec(z), D @ z), rel(A.matvec_transpose(z), D.T @ z),
            rel(A.row_sums(), D.sum(1)), rel(A.col_sums(), D.sum(0)),
            rel(A.scale_rows(s).to_dense(), s[:, None] * D), rel(A.scale_cols(s).to_dense(), D * s),
            rel(A.add_rank_one(u, w).to_dense(), D + np.outer(u, w)),
            rel(np.array([A.entry(i, j)]), np.array([D[i, j]])) if D[i, j] != 0 else 0.0,
        ]
        assert max(devs) <= 1e-10, f"case {k}: deviations {devs}"
        worst = max(worst, max(devs))
    return f"200 factorizations, max relative deviation {worst:.1e}"


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except Exception:
                failed += 1
    sys.exit(1 if failed else 0)
