import numpy as np
import pytest

from spp.data import Dataset


def random_dataset(rng, n, alphabet, kind, task, max_size=None):
    """Random itemset/sequence dataset; classification always has both classes."""
    structs = []
    for _ in range(n):
        if kind == "itemset":
            size = int(rng.integers(1, (max_size or alphabet) + 1))
            s = tuple(sorted(rng.choice(alphabet, size=min(size, alphabet), replace=False).tolist()))
        else:
            s = tuple(rng.integers(0, alphabet, size=int(rng.integers(1, (max_size or 6) + 1))).tolist())
        structs.append(s)
    if task == "regression":
        y = rng.normal(size=n)
    else:
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        y[0], y[1] = 1.0, -1.0
    return Dataset(tuple(structs), y, kind, task, alphabet)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny():
    # S1={a}(y=1), S2={a,b}(y=-1), S3={b}(y=0) with a=0, b=1
    return Dataset(((0,), (0, 1), (1,)), np.array([1.0, -1.0, 0.0]), "itemset", "regression", 2)


def oracle_compare(dataset, loss, solution, lam, kappa, max_len, fit_eps, oracle=None, tol=1e-3):
    """Compare a fitted solution with the dense-oracle optimum.

    Returns ``(status, detail, oracle_fit)`` where status is ``"match"``,
    ``"nonunique"`` (the optimum is not unique and the solution is an
    equally good minimizer with the same margins) or ``"violation"``.
    Uniqueness: patterns outside the safe equicorrelation set built from the
    oracle optimum are zero in every minimizer; if the intercept column plus
    the distinct remaining columns are linearly independent the minimizer is
    unique up to splitting weight among identical columns.
    """
    from spp.oracle import dense_fit, dense_objectives, dense_problem

    pr = dense_problem(dataset, lam, kappa, max_len, loss.kind)
    f = oracle if oracle is not None else dense_fit(pr, epsilon=1e-11)
    idx = {p: j for j, p in enumerate(pr.patterns)}
    b = np.zeros(len(pr.patterns))
    for p, v in solution.beta.items():
        b[idx[p.items]] = v
    diff = float(np.abs(b - f.beta).max(initial=0.0))
    d0 = abs(f.beta0 - solution.beta0)
    if diff <= tol and d0 <= tol:
        return "match", (diff, d0), f
    zp, zo = pr.X @ b + solution.beta0, pr.X @ f.beta + f.beta0
    zdiff = float(np.abs(zp - zo).max())
    P, _, _ = dense_objectives(pr, b, solution.beta0)
    if kappa > 0.0:
        return "violation", (diff, d0), f
    r = np.sqrt(2.0 * loss.gamma * max(f.gap, 0.0))
    Xc = pr.X - pr.X.mean(axis=0)
    u = np.abs(pr.X.T @ f.alpha) + r * np.linalg.norm(Xc, axis=0)
    # round-off slack keeps boundary patterns in E; a larger E only weakens the uniqueness claim
    E = np.flatnonzero(u >= lam * (1.0 - 1e-9))
    groups = {}
    for j in E:
        groups.setdefault(pr.X[:, j].tobytes(), []).append(j)
    A = np.column_stack([np.ones(dataset.n)] + [pr.X[:, g[0]] for g in groups.values()])
    if np.linalg.matrix_rank(A) == A.shape[1]:
        gd = max((abs(b[g].sum() - f.beta[g].sum()) for g in groups.values()), default=0.0)
        ok = gd <= tol and d0 <= tol and P - f.primal <= fit_eps
        return ("nonunique" if ok else "violation"), (diff, d0, gd), f
    ok = zdiff <= tol and P - f.primal <= fit_eps
    return ("nonunique" if ok else "violation"), (diff, d0, zdiff), f
