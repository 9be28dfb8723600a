"""Synthetic scenarios, noise, accuracy metrics and Monte Carlo campaigns."""

import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .blocks import BlockStructure, cluster_blocks, similarity
from .sweep import TediaConfig, TransformSet, tedia
from .tensor import diagonal_tensor, frobenius_norm, multi_mode_product
from .validation import check_random_state

NOISELESS = math.inf


@dataclass(frozen=True)
class ScenarioConfig:
    """One experimental condition.

    ``snr_db = inf`` means noiseless.  ``refine`` runs ALS after TEDIA.
    """

    kind: str = "cp-diagonal"
    N: int = 5
    block_sizes: tuple = ()
    c: float = 0.0
    snr_db: float = NOISELESS
    trials: int = 1
    seed: int = 0
    refine: bool = False
    epsilon: float = 1e-6
    max_sweeps: int = 1000
    stop_ratio: float = 0.1
    als_iter: int = 200
    als_tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("cp-diagonal", "block-diagonal"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not 0 <= self.c < 1:
            raise ValueError(f"colinearity c must lie in [0, 1), got {self.c}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.kind == "block-diagonal":
            sizes = self.block_sizes or (5, 5, 5)
            object.__setattr__(self, "block_sizes", tuple(int(s) for s in sizes))
            object.__setattr__(self, "N", sum(self.block_sizes))
        else:
            object.__setattr__(self, "block_sizes", (1,) * self.N)


@dataclass
class Scenario:
    tensor: np.ndarray
    core: np.ndarray
    transforms: TransformSet
    block_sizes: tuple
    sigma2: float = 0.0

    @property
    def structure(self):
        return BlockStructure(perm=np.arange(self.core.shape[0]), sizes=self.block_sizes)


def colinear_matrix(n, c):
    """``eps * ones + gamma * I`` with unit columns of pairwise product ``c``."""
    if not 0 <= c < 1:
        raise ValueError(f"c must lie in [0, 1), got {c}")
    eps = (math.sqrt(1 - c + n * c) - math.sqrt(1 - c)) / n
    gamma = math.sqrt(1 - (n - 1) * eps**2) - eps
    return eps * np.ones((n, n)) + gamma * np.eye(n)


def haar_orthogonal(n, rng):
    """Haar-distributed orthogonal matrix: QR of a Gaussian with sign fix."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_cp_scenario(cfg):
    """Diagonal core ``1..N``; mixing ``colinear_matrix(N, c)`` in mode 1."""
    n = cfg.N
    core = diagonal_tensor(np.arange(1.0, n + 1))
    tr = TransformSet.from_mixing(colinear_matrix(n, cfg.c), np.eye(n), np.eye(n))
    return Scenario(tensor=tr.reconstruct(core), core=core, transforms=tr,
                    block_sizes=(1,) * n)


def rank6_block(s, rng):
    """``(I_s + ones) x_1 Q1 x_2 Q2 x_3 Q3`` with Haar ``Q``."""
    blk = diagonal_tensor(np.ones(s)) + np.ones((s, s, s))
    return multi_mode_product(blk, *(haar_orthogonal(s, rng) for _ in range(3)))


def make_block_scenario(cfg, rng=None):
    """Block-diagonal core, mixing ``Q_X @ colinear_matrix(N, c)`` per mode."""
    rng = check_random_state(cfg.seed if rng is None else rng)
    sizes = cfg.block_sizes
    n = sum(sizes)
    core = np.zeros((n, n, n))
    start = 0
    for s in sizes:
        sl = slice(start, start + s)
        core[sl, sl, sl] = rank6_block(s, rng)
        start += s
    Ac = colinear_matrix(n, cfg.c)
    mixing = [haar_orthogonal(n, rng) @ Ac for _ in range(3)]
    tr = TransformSet.from_mixing(*mixing)
    return Scenario(tensor=tr.reconstruct(core), core=core, transforms=tr,
                    block_sizes=tuple(sizes))


def make_scenario(cfg, rng=None):
    rng = check_random_state(cfg.seed if rng is None else rng)
    if cfg.kind == "cp-diagonal":
        return make_cp_scenario(cfg)
    return make_block_scenario(cfg, rng)


def noise_variance(t, snr_db):
    """``sigma^2`` with ``10 log10(||t||^2 / (N^3 sigma^2)) = snr_db``."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return frobenius_norm(t) ** 2 * 10 ** (-snr_db / 10) / np.size(t)


def add_noise(t, snr_db, seed=None):
    """Add i.i.d. Gaussian noise at the given signal-to-noise ratio.

    Returns
    -------
    noisy : ndarray
    sigma2 : float
    """
    t = np.asarray(t)
    sigma2 = noise_variance(t, snr_db)
    if sigma2 == 0:
        return t.copy(), 0.0
    rng = check_random_state(seed)
    noise = rng.standard_normal(t.shape)
    if np.iscomplexobj(t):
        noise = (noise + 1j * rng.standard_normal(t.shape)) / np.sqrt(2)
    return t + np.sqrt(sigma2) * noise, sigma2


def column_angles(true, est):
    """Angle (rad) between matching columns, insensitive to scale and sign."""
    true = np.asarray(true)
    est = np.asarray(est)
    tn = true / np.linalg.norm(true, axis=0)
    en = est / np.linalg.norm(est, axis=0)
    cos = np.abs(np.sum(tn.conj() * en, axis=0))
    sin = np.linalg.norm(en - tn * np.sum(tn.conj() * en, axis=0), axis=0)
    return np.arctan2(sin, cos)


def match_columns(true, est):
    """Permutation ``p`` such that ``est[:, p]`` best matches ``true`` columns."""
    tn = true / np.linalg.norm(true, axis=0)
    en = est / np.linalg.norm(est, axis=0)
    _, p = linear_sum_assignment(-np.abs(tn.conj().T @ en))
    return p


def subspace_angle(s1, s2):
    """Largest principal angle between the column spans of ``s1`` and ``s2``."""
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    if s1.ndim == 1:
        s1 = s1[:, None]
    if s2.ndim == 1:
        s2 = s2[:, None]
    if s1.shape[0] != s2.shape[0]:
        raise ValueError("subspaces must have the same ambient dimension")
    if not np.any(s1) or not np.any(s2):
        raise ValueError("rank-0 subspace")
    return float(np.max(scipy.linalg.subspace_angles(s1, s2)))


def subspace_lsq_error(S, S_hat):
    """``min_X ||S - S_hat X||_F^2 / ||S||_F^2``."""
    X = np.linalg.lstsq(S_hat, S, rcond=None)[0]
    return float(np.linalg.norm(S - S_hat @ X) ** 2 / np.linalg.norm(S) ** 2)


def match_blocks(true_mix, true_struct, est_mix, est_struct):
    """Assign estimated blocks to true blocks minimizing total squared angle.

    The assignment problem is solved exactly (Hungarian method), which gives
    the same optimum as searching all block permutations.

    Parameters
    ----------
    true_mix, est_mix : sequence of three ndarray
        Mixing matrices whose columns are grouped by the structures.

    Returns
    -------
    assignment : list of int or None
        Estimated block index for each true block (None when unmatched).
    sq_angles : ndarray, shape (3, n_true)
        Squared largest principal angle per mode and true block; ``(pi/2)^2``
        for unmatched blocks.
    """
    t_blocks = true_struct.members()
    e_blocks = est_struct.members()
    nt, ne = len(t_blocks), len(e_blocks)
    cost = np.zeros((3, nt, ne))
    for m in range(3):
        for a, ti in enumerate(t_blocks):
            for b, ei in enumerate(e_blocks):
                cost[m, a, b] = subspace_angle(true_mix[m][:, ti], est_mix[m][:, ei]) ** 2
    rows, cols = linear_sum_assignment(cost.sum(axis=0))
    assignment = [None] * nt
    sq = np.full((3, nt), (np.pi / 2) ** 2)
    for a, b in zip(rows, cols):
        assignment[a] = int(b)
        sq[:, a] = cost[:, a, b]
    return assignment, sq


def match_lsq_errors(true_mix, true_struct, est_mix, est_struct, assignment):
    """``min_X ||S - S_hat X||^2 / ||S||^2`` for the matched blocks, shape ``(3, n_true)``."""
    t_blocks = true_struct.members()
    e_blocks = est_struct.members()
    out = np.ones((3, len(t_blocks)))
    for m in range(3):
        for a, b in enumerate(assignment):
            if b is not None:
                out[m, a] = subspace_lsq_error(true_mix[m][:, t_blocks[a]], est_mix[m][:, e_blocks[b]])
    return out


class CampaignError(RuntimeError):
    pass


@dataclass
class TrialMetrics:
    """Outcome of one trial.

    ``sq_angles`` has shape ``(3, n_blocks)`` (per mode and true block; a
    block is a single column in the CP scenario).  ``*_als`` fields are set
    only when refinement ran.
    """

    trial: int
    sq_angles: np.ndarray | None = None
    lsq_errors: np.ndarray | None = None
    off_norm: float = float("nan")
    sweeps: int = 0
    converged: bool = False
    wall_ms: float = 0.0
    detected_sizes: tuple = ()
    sq_angles_als: np.ndarray | None = None
    lsq_errors_als: np.ndarray | None = None
    wall_ms_als: float = 0.0
    error: str | None = None


@dataclass
class ConditionResult:
    config: ScenarioConfig
    trials: list

    @property
    def ok(self):
        return [t for t in self.trials if t.error is None]

    def _collect(self, attr):
        vals = [getattr(t, attr) for t in self.ok if getattr(t, attr) is not None]
        return np.concatenate([v.ravel() for v in vals]) if vals else np.array([])

    def mean_sq(self, als=False):
        v = self._collect("sq_angles_als" if als else "sq_angles")
        return float(v.mean()) if v.size else float("nan")

    def median_sq(self, als=False):
        v = self._collect("sq_angles_als" if als else "sq_angles")
        return float(np.median(v)) if v.size else float("nan")

    def mean_lsq(self, als=False):
        v = self._collect("lsq_errors_als" if als else "lsq_errors")
        return float(v.mean()) if v.size else float("nan")

    def per_trial_mean(self, als=False):
        attr = "sq_angles_als" if als else "sq_angles"
        return np.array([getattr(t, attr).mean() for t in self.ok])


def trial_seeds(seed, trial):
    """Independent scenario and noise generators for one trial."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(trial)])
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def _detect(core, cfg):
    b = cluster_blocks(similarity(core), stop_ratio=cfg.stop_ratio)
    if sorted(b.sizes) != sorted(cfg.block_sizes):
        # block count known in advance, as for any BTD fit
        b = cluster_blocks(similarity(core), n_blocks=len(cfg.block_sizes))
    return b


def run_trial(cfg, trial):
    from .blocks import apply_block_permutation
    from .btd import als_refine, from_tedia

    out = TrialMetrics(trial=trial)
    try:
        scen_rng, noise_rng = trial_seeds(cfg.seed, trial)
        sc = make_scenario(cfg, scen_rng)
        x, sigma2 = add_noise(sc.tensor, cfg.snr_db, noise_rng)
        tic = time.perf_counter()
        r = tedia(x, TediaConfig(epsilon=cfg.epsilon, max_sweeps=cfg.max_sweeps))
        b = _detect(r.core, cfg)
        core, tr = apply_block_permutation(r.core, r.transforms, b)
        out.wall_ms = 1e3 * (time.perf_counter() - tic)
        est = BlockStructure(perm=np.arange(b.n), sizes=b.sizes)
        assignment, out.sq_angles = match_blocks(sc.transforms.mixing, sc.structure, tr.mixing, est)
        out.lsq_errors = match_lsq_errors(sc.transforms.mixing, sc.structure, tr.mixing, est, assignment)
        out.off_norm = float(r.off_norm_history[-1])
        out.sweeps = r.sweeps_run
        out.converged = r.converged
        out.detected_sizes = b.sizes
        if cfg.refine:
            tic = time.perf_counter()
            res = als_refine(x, from_tedia(r, b), max_iter=cfg.als_iter, tol=cfg.als_tol)
            out.wall_ms_als = out.wall_ms + 1e3 * (time.perf_counter() - tic)
            mix = [res.model.stacked(m) for m in (1, 2, 3)]
            assignment, out.sq_angles_als = match_blocks(sc.transforms.mixing, sc.structure, mix, est)
            out.lsq_errors_als = match_lsq_errors(sc.transforms.mixing, sc.structure, mix, est, assignment)
    except Exception as exc:  # recorded, not fatal
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def thread_count(n_jobs=None):
    env = os.environ.get("TEDIA_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    if n_jobs is not None:
        cap = min(cap, n_jobs)
    return max(1, cap)


def run_condition(cfg, threads=None):
    """All trials of one condition; raises CampaignError past 20% failures."""
    workers = threads or thread_count(cfg.trials)
    if workers == 1:
        trials = [run_trial(cfg, k) for k in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(lambda k: run_trial(cfg, k), range(cfg.trials)))
    failed = sum(t.error is not None for t in trials)
    if failed > 0.2 * cfg.trials:
        first = next(t.error for t in trials if t.error is not None)
        raise CampaignError(f"{failed}/{cfg.trials} trials failed (first: {first})")
    return ConditionResult(config=cfg, trials=trials)


def run_campaign(cfgs, threads=None):
    """Run every condition; ``cfgs`` is a ScenarioConfig or a sequence of them."""
    if isinstance(cfgs, ScenarioConfig):
        cfgs = [cfgs]
    return [run_condition(c, threads) for c in cfgs]


def _parse_scalar(key, val):
    if key == "snr_db":
        return NOISELESS if val.lower() in ("noiseless", "inf") else float(val)
    if key in ("c", "epsilon", "stop_ratio", "als_tol"):
        return float(val)
    if key in ("N", "trials", "seed", "max_sweeps", "als_iter"):
        return int(val)
    if key == "refine":
        if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"refine must be a boolean, got {val!r}")
        return val.lower() in ("true", "1", "yes")
    if key == "kind":
        return {"cp": "cp-diagonal", "block": "block-diagonal"}.get(val, val)
    if key == "block_sizes":
        return tuple(int(s) for s in val.replace(",", " ").split())
    raise ValueError(f"unknown campaign key {key!r}")


def configs_from_mapping(kv):
    """Expand ``key=value`` settings into conditions.

    ``c`` and ``snr_db`` accept comma-separated lists; their Cartesian
    product gives one ScenarioConfig per condition.
    """
    base, grids = {}, {}
    for key, val in kv.items():
        val = str(val)
        if key in ("c", "snr_db"):
            grids[key] = [_parse_scalar(key, v.strip()) for v in val.split(",")]
        else:
            base[key] = _parse_scalar(key, val)
    keys = list(grids)
    out = []
    for combo in itertools.product(*(grids[k] for k in keys)):
        out.append(ScenarioConfig(**base, **dict(zip(keys, combo))))
    return out


TRIAL_HEADER = "trial,mode,block,sq_angle_rad2,off_norm,sweeps,wall_ms"


def _db(x):
    return 10 * math.log10(x) if x > 0 else -math.inf


def condition_tag(cfg):
    snr = "inf" if math.isinf(cfg.snr_db) else f"{cfg.snr_db:g}"
    return f"c{cfg.c:g}_snr{snr}"


def trial_rows(result, als=False):
    rows = [TRIAL_HEADER]
    for t in result.ok:
        sq = t.sq_angles_als if als else t.sq_angles
        wall = t.wall_ms_als if als else t.wall_ms
        for m in range(3):
            for b in range(sq.shape[1]):
                rows.append(f"{t.trial},{m + 1},{b + 1},{sq[m, b]:.17g},"
                            f"{t.off_norm:.17g},{t.sweeps},{wall:.3f}")
    return "\n".join(rows) + "\n"


SUMMARY_HEADER = ("condition,kind,c,snr_db,method,trials_ok,trials_failed,"
                  "mean_sq_db,median_sq_db,mean_lsq_db")


def summary_rows(results):
    rows = [SUMMARY_HEADER]
    for res in results:
        cfg = res.config
        methods = [("tedia", False)] + ([("tedia+als", True)] if cfg.refine else [])
        for name, als in methods:
            rows.append(",".join([
                condition_tag(cfg), cfg.kind, f"{cfg.c:g}",
                "inf" if math.isinf(cfg.snr_db) else f"{cfg.snr_db:g}", name,
                str(len(res.ok)), str(len(res.trials) - len(res.ok)),
                f"{_db(res.mean_sq(als)):.6f}", f"{_db(res.median_sq(als)):.6f}",
                f"{_db(res.mean_lsq(als)):.6f}",
            ]))
    return "\n".join(rows) + "\n"


def write_campaign(directory, results):
    """``trials_<condition>.csv`` (plus ``_als``) per condition and ``summary.csv``."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for res in results:
        tag = condition_tag(res.config)
        (d / f"trials_{tag}.csv").write_text(trial_rows(res), encoding="utf-8")
        if res.config.refine:
            (d / f"trials_{tag}_als.csv").write_text(trial_rows(res, als=True), encoding="utf-8")
    (d / "summary.csv").write_text(summary_rows(results), encoding="utf-8")
