"""Joint fuzzy clustering, soft matching and per-cluster affine estimation.

The objective over matched points ``k`` and clusters ``i`` is

    Q = sum_i sum_k u_ik^m * ( |x_k - v_i|^2
                               + sum_j alpha_kj^P * W_kj * |y_kj - H_i x_k|^2 )

where ``y_kj`` is the position of the j-th descriptor neighbour of ``x_k``.
The pair weight ``W_kj`` is either 1 (``pair_weight="uniform"``, the default)
or the squared descriptor distance (``pair_weight="descriptor"``). The latter
gives exact copies, whose descriptors nearly coincide, almost no say in the
transform fit, which is why it is not the default. Every update below is the exact
minimiser of Q in its own block with the others held fixed, so with pruning
off the cost never increases.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .affine import AffineTransform
from .features import DescriptorSet
from .matching import MatchSet

log = logging.getLogger(__name__)


PAIR_WEIGHTS = ("uniform", "descriptor")


@dataclass
class OptimizerConfig:
    C: int = 5
    K: int = 3
    P: float = 2.0
    m: float = 2.0
    iter_max: int = 500
    T_max: float = 2000.0
    T_min: float = 0.1
    theta: float = 0.001
    tau: float = 0.12
    fcm_iters: int = 100
    prune: bool = True
    pair_weight: str = "uniform"  # or "descriptor"
    dd_floor: float = 1e-9
    max_cond: float = 1e12
    early_stop_tol: float = 1e-10
    early_stop_patience: int = 20  # 0 disables early stopping

    def __post_init__(self):
        if self.m <= 1:
            raise ValueError("fuzzification exponent m must be > 1")
        if self.P <= 1:
            raise ValueError("matching exponent P must be > 1")
        if not self.T_max > self.T_min > 0:
            raise ValueError("need T_max > T_min > 0")
        if self.iter_max < 1:
            raise ValueError("iter_max must be >= 1")
        if self.C < 1 or self.K < 1:
            raise ValueError("C and K must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.pair_weight not in PAIR_WEIGHTS:
            raise ValueError(f"pair_weight must be one of {PAIR_WEIGHTS}")


@dataclass
class MatchGeometry:
    """Fixed numeric inputs derived from a MatchSet and its keypoints."""

    x: np.ndarray  # Np x 3 homogeneous matched points
    y: np.ndarray  # Np x K x 2 neighbour positions (0 in padded slots)
    dd: np.ndarray  # Np x K pair weights W (0 in padded slots)
    valid: np.ndarray  # Np x K

    @property
    def n_points(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.y.shape[1]

    @classmethod
    def from_arrays(cls, x, y, dd, valid=None, dd_floor: float = 1e-9,
                    pair_weight: str = "descriptor") -> "MatchGeometry":
        """``dd`` holds squared descriptor distances; with ``pair_weight="uniform"`` they are ignored."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2 and x.shape[1] == 2:
            x = np.hstack([x, np.ones((len(x), 1))])
        y = np.asarray(y, dtype=np.float64)
        dd = np.asarray(dd, dtype=np.float64)
        valid = np.ones(dd.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        y = np.where(valid[..., None], y, 0.0)
        if pair_weight == "uniform":
            dd = valid.astype(np.float64)
        elif pair_weight == "descriptor":
            dd = np.where(valid, np.maximum(dd, dd_floor), 0.0)
        else:
            raise ValueError(f"unknown pair_weight {pair_weight!r}")
        return cls(x, y, dd, valid)

    @classmethod
    def from_matches(cls, matches: MatchSet, ds: DescriptorSet, dd_floor: float = 1e-9,
                     pair_weight: str = "uniform") -> "MatchGeometry":
        pos = ds.positions
        x = pos[matches.matched_indices]
        valid = matches.valid
        y = pos[np.where(valid, matches.neighbors, 0)]
        return cls.from_arrays(x, y, matches.dd, valid, dd_floor, pair_weight)


@dataclass
class ClusterState:
    U: np.ndarray  # C x Np memberships
    V: np.ndarray  # C x 3 centres, last column 1
    H: np.ndarray  # C x 3 x 3 affines
    alpha: np.ndarray  # Np x K matching weights
    active: np.ndarray  # Np bool
    empty: np.ndarray = None  # C bool, zero membership mass
    degenerate: np.ndarray = None  # C bool, last transform solve rejected
    all_pruned: bool = False
    iterations: int = 0

    def __post_init__(self):
        c = self.U.shape[0]
        if self.empty is None:
            self.empty = np.zeros(c, dtype=bool)
        if self.degenerate is None:
            self.degenerate = np.zeros(c, dtype=bool)

    @property
    def n_clusters(self) -> int:
        return self.U.shape[0]

    @property
    def transforms(self) -> list:
        return [AffineTransform.from_matrix(h) for h in self.H]

    def copy(self) -> "ClusterState":
        return replace(self, U=self.U.copy(), V=self.V.copy(), H=self.H.copy(),
                       alpha=self.alpha.copy(), active=self.active.copy(),
                       empty=self.empty.copy(), degenerate=self.degenerate.copy())

    def owners(self) -> np.ndarray:
        """Index of the maximum-membership cluster per point (lowest index on ties)."""
        return np.argmax(self.U, axis=0)

    def cluster_sizes(self) -> np.ndarray:
        """Active points whose dominant membership is in each cluster."""
        return np.bincount(self.owners()[self.active], minlength=self.n_clusters)


# ----------------------------------------------------------------- primitives

def transform_error(h: AffineTransform, src, dst) -> float:
    """Squared geometric error ``|dst - H src|^2`` for one pair of points."""
    sx, sy = (src.x, src.y) if hasattr(src, "x") else src
    dx, dy = (dst.x, dst.y) if hasattr(dst, "x") else dst
    px, py = h.apply((sx, sy))
    return float((dx - px) ** 2 + (dy - py) ** 2)


def residuals(H: np.ndarray, geom: MatchGeometry) -> np.ndarray:
    """``C x Np x K`` squared errors ``|y_kj - H_i x_k|^2``."""
    pred = np.einsum("cij,nj->cni", H[:, :2, :], geom.x)
    diff = geom.y[None, :, :, :] - pred[:, :, None, :]
    return np.einsum("cnkd,cnkd->cnk", diff, diff)


def _weighted_alpha(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> np.ndarray:
    return np.where(geom.valid, state.alpha, 0.0) ** cfg.P * geom.dd


def spatial_distances(state: ClusterState, geom: MatchGeometry) -> np.ndarray:
    """``C x Np`` squared distances of points to centres (all three coordinates)."""
    diff = geom.x[None, :, :] - state.V[:, None, :]
    return np.einsum("cnd,cnd->cn", diff, diff)


def transform_terms(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig,
                    err: np.ndarray | None = None) -> np.ndarray:
    """``C x Np``: ``sum_j alpha^P W |y - H_i x|^2``."""
    if err is None:
        err = residuals(state.H, geom)
    return np.einsum("nk,cnk->cn", _weighted_alpha(state, geom, cfg), err)


def cost(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> float:
    if geom.n_points == 0 or not state.active.any():
        return 0.0
    dist = spatial_distances(state, geom) + transform_terms(state, geom, cfg)
    w = state.U ** cfg.m * state.active[None, :]
    return float(np.sum(w * dist))


def _fuzzy_partition(dist: np.ndarray, exponent: float) -> np.ndarray:
    """Normalised ``dist**(-exponent)`` along axis 0, columns summing to 1.

    Columns containing zeros give all mass to the zero entries, split equally.
    """
    dmin = dist.min(axis=0, keepdims=True)
    zero = dist <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(zero, 0.0, (dmin / dist) ** exponent)
    r = np.where(dmin > 0.0, r, zero.astype(float))
    return r / r.sum(axis=0, keepdims=True)


# ------------------------------------------------------------ initialisation

def init_memberships_fcm(points, C: int, m: float = 2.0, iters: int = 100, seed: int = 0) -> np.ndarray:
    """Fuzzy c-means on spatial coordinates, seeded with k-means++ centres.

    Returns a ``C' x Np`` membership matrix where ``C' = min(C, Np)``.
    """
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    n = len(pts)
    if n == 0:
        return np.zeros((C, 0))
    if n < C:
        warnings.warn(f"only {n} matched points for {C} clusters; using C={n}", stacklevel=2)
        C = n
    if C == 1:
        return np.ones((1, n))
    rng = np.random.default_rng(seed)
    centers = [pts[rng.integers(n)]]
    for _ in range(1, C):
        d2 = np.min(((pts[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total > 0:
            centers.append(pts[rng.choice(n, p=d2 / total)])
        else:
            centers.append(pts[rng.integers(n)])
    centers = np.array(centers)
    U = None
    for _ in range(max(iters, 1)):
        d2 = ((pts[None, :, :] - centers[:, None, :]) ** 2).sum(-1)
        U_new = _fuzzy_partition(d2, 1.0 / (m - 1.0))
        w = U_new ** m
        centers = (w @ pts) / w.sum(axis=1, keepdims=True)
        if U is not None and np.max(np.abs(U_new - U)) < 1e-12:
            U = U_new
            break
        U = U_new
    return U


def initial_state(geom: MatchGeometry, cfg: OptimizerConfig, seed: int = 0,
                  alpha: np.ndarray | None = None) -> ClusterState:
    U = init_memberships_fcm(geom.x, cfg.C, cfg.m, cfg.fcm_iters, seed)
    c = U.shape[0]
    if alpha is None:
        alpha = np.zeros(geom.dd.shape)
        if alpha.size:
            alpha[:, 0] = 1.0
    V = np.zeros((c, 3))
    V[:, 2] = 1.0
    H = np.tile(np.eye(3), (c, 1, 1))
    state = ClusterState(U=U, V=V, H=H, alpha=np.array(alpha, dtype=np.float64),
                         active=np.ones(geom.n_points, dtype=bool))
    return state


# ------------------------------------------------------------- block updates

def update_centers(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> ClusterState:
    w = state.U ** cfg.m * state.active[None, :]
    mass = w.sum(axis=1)
    empty = mass <= 0.0
    V = state.V.copy()
    ok = ~empty
    V[ok] = (w[ok] @ geom.x) / mass[ok, None]
    V[:, 2] = 1.0
    return replace(state, V=V, empty=empty)


def normal_equations(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig):
    """Per-cluster ``M_i`` (C x 3 x 3) and right-hand sides ``b_i`` (C x 2 x 3).

    Row ``p`` of ``H_i`` solves ``M_i h_p = b_ip``.
    """
    wa = _weighted_alpha(state, geom, cfg)  # Np x K
    u = state.U ** cfg.m * state.active[None, :]  # C x Np
    w = u[:, :, None] * wa[None, :, :]  # C x Np x K
    M = np.einsum("cn,na,nb->cab", w.sum(axis=2), geom.x, geom.x)
    b = np.einsum("cnk,nkp,na->cpa", w, geom.y, geom.x)
    return M, b


def update_transforms(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> ClusterState:
    M, b = normal_equations(state, geom, cfg)
    H = state.H.copy()
    degenerate = np.zeros(state.n_clusters, dtype=bool)
    for i in range(state.n_clusters):
        if not np.all(np.isfinite(M[i])) or not np.any(M[i]):
            degenerate[i] = True
            continue
        if np.linalg.cond(M[i]) > cfg.max_cond:
            degenerate[i] = True
            continue
        rows = np.linalg.solve(M[i], b[i].T).T  # 2 x 3
        H[i, :2, :] = rows
        H[i, 2, :] = (0.0, 0.0, 1.0)
    return replace(state, H=H, degenerate=degenerate)


def alpha_errors(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig,
                 err: np.ndarray | None = None) -> np.ndarray:
    """``Np x K``: ``sum_i u_ik^m W_kj |y_kj - H_i x_k|^2``."""
    if err is None:
        err = residuals(state.H, geom)
    return np.einsum("cn,nk,cnk->nk", state.U ** cfg.m, geom.dd, err)


def update_alpha(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> ClusterState:
    E = alpha_errors(state, geom, cfg)
    E = np.where(geom.valid, E, np.inf)
    alpha = state.alpha.copy()
    rows = state.active & geom.valid.any(axis=1)
    if rows.any():
        # transpose so the partition runs over each point's neighbours
        new = _fuzzy_partition(E[rows].T, 1.0 / (cfg.P - 1.0)).T
        alpha[rows] = np.where(geom.valid[rows], new, 0.0)
    return replace(state, alpha=alpha)


def membership_distances(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> np.ndarray:
    return spatial_distances(state, geom) + transform_terms(state, geom, cfg)


def update_memberships(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> ClusterState:
    U = state.U.copy()
    act = state.active
    if act.any():
        D = membership_distances(state, geom, cfg)
        U[:, act] = _fuzzy_partition(D[:, act], 1.0 / (cfg.m - 1.0))
    return replace(state, U=U)


# ---------------------------------------------------------- outlier pruning

def threshold_schedule(iteration: int, cfg: OptimizerConfig) -> float:
    """Decreasing logistic pruning threshold.

    ``T_min + (T_max - T_min) * (1 - sigmoid((iteration / iter_max - theta) / tau))``.
    It starts near ``(T_max + T_min) / 2`` and approaches ``T_min`` without
    reaching it; with the defaults ``T(iter_max)`` is about 0.58.
    """
    s = expit((iteration / cfg.iter_max - cfg.theta) / cfg.tau)
    return float(cfg.T_min + (cfg.T_max - cfg.T_min) * (1.0 - s))


def point_errors(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig) -> np.ndarray:
    """Weighted transform error of each point under its dominant cluster."""
    terms = transform_terms(state, geom, cfg)
    return terms[state.owners(), np.arange(geom.n_points)]


def prune_outliers(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig, T: float) -> ClusterState:
    if geom.n_points == 0:
        return state
    errors = point_errors(state, geom, cfg)
    active = state.active & (errors <= T)
    all_pruned = bool(state.active.any() and not active.any())
    if all_pruned:
        warnings.warn("all matched points were pruned", RuntimeWarning, stacklevel=2)
    return replace(state, active=active, all_pruned=state.all_pruned or all_pruned)


# ---------------------------------------------------------------- main loops

def _trace_line(trace, phase, it, state, geom, cfg, T=None):
    if trace is None:
        return
    rec = {
        "phase": phase,
        "iter": it,
        "cost": cost(state, geom, cfg),
        "active": int(state.active.sum()),
        "T": T,
        "H": [[float(v) for v in h[:2].ravel()] for h in state.H],
    }
    trace.write(json.dumps(rec) + "\n")


class _EarlyStop:
    def __init__(self, cfg: OptimizerConfig):
        self.tol = cfg.early_stop_tol
        self.patience = cfg.early_stop_patience
        self.prev = None
        self.calm = 0

    def __call__(self, q: float) -> bool:
        if self.patience <= 0:
            return False
        if self.prev is not None:
            change = abs(self.prev - q) / max(abs(self.prev), 1e-300)
            self.calm = self.calm + 1 if change < self.tol else 0
        self.prev = q
        return self.calm >= self.patience


def run_phase1(geom: MatchGeometry, cfg: OptimizerConfig, seed: int = 0,
               state: ClusterState | None = None, trace=None, callback=None) -> ClusterState:
    """Alternate centres, transforms, alpha and memberships with scheduled pruning.

    ``callback(iteration, state)``, if given, sees the state after every round.
    """
    if geom.n_points == 0:
        raise ValueError("no matched points to optimise")
    if state is None:
        state = initial_state(geom, cfg, seed)
    stop = _EarlyStop(cfg)
    for it in range(1, cfg.iter_max + 1):
        state = update_centers(state, geom, cfg)
        state = update_transforms(state, geom, cfg)
        state = update_alpha(state, geom, cfg)
        state = update_memberships(state, geom, cfg)
        T = threshold_schedule(it, cfg)
        if cfg.prune:
            state = prune_outliers(state, geom, cfg, T)
        state.iterations = it
        _trace_line(trace, 1, it, state, geom, cfg, T)
        if callback is not None:
            callback(it, state)
        if state.all_pruned:
            log.warning("phase 1 stopped at iteration %d: every point pruned", it)
            break
        converged = stop(cost(state, geom, cfg))
        # stopping is only safe once the schedule can prune nothing further
        if converged and (not cfg.prune or point_errors(state, geom, cfg)[state.active].max()
                          <= threshold_schedule(cfg.iter_max, cfg)):
            break
    return state


def harden_alpha(alpha: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """One-hot rows at the argmax (lowest slot wins ties)."""
    a = np.asarray(alpha, dtype=np.float64)
    if a.size == 0:
        return a.copy()
    if valid is not None:
        a = np.where(valid, a, -np.inf)
    out = np.zeros(a.shape)
    out[np.arange(a.shape[0]), np.argmax(a, axis=1)] = 1.0
    return out


def fix_alpha_and_rerun(state: ClusterState, geom: MatchGeometry, cfg: OptimizerConfig,
                        trace=None, callback=None) -> ClusterState:
    """Freeze alpha at its hardened argmax and re-estimate centres, transforms and memberships."""
    state = replace(state.copy(), alpha=harden_alpha(state.alpha, geom.valid), iterations=0)
    if not state.active.any():
        return state
    stop = _EarlyStop(cfg)
    for it in range(1, cfg.iter_max + 1):
        state = update_centers(state, geom, cfg)
        state = update_transforms(state, geom, cfg)
        state = update_memberships(state, geom, cfg)
        state.iterations = it
        _trace_line(trace, 2, it, state, geom, cfg)
        if callback is not None:
            callback(it, state)
        if stop(cost(state, geom, cfg)):
            break
    return state


@dataclass
class OptimizationResult:
    phase1: ClusterState
    phase2: ClusterState
    geometry: MatchGeometry = field(repr=False)


def optimize(matches: MatchSet, ds: DescriptorSet, cfg: OptimizerConfig, seed: int = 0,
             trace=None) -> OptimizationResult:
    geom = MatchGeometry.from_matches(matches, ds, cfg.dd_floor, cfg.pair_weight)
    s1 = run_phase1(geom, cfg, seed, trace=trace)
    s2 = fix_alpha_and_rerun(s1, geom, cfg, trace=trace)
    return OptimizationResult(s1, s2, geom)
