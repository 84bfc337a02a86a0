"""End-to-end experiments: limiting measure, time selection, the event Z and controls."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigInvalid, NoValidTime, ResolutionTooCoarse
from .fields import VectorFieldSpec, field_from_config
from .flow import first_exit_steps, exit_fraction, iter_ensemble, simulate
from .homotopy import chain_displacements_ok, chain_times, winding_batch, witness_batch
from .manifolds import FlatTorus, Manifold, manifold_from_config
from .moments import find_shrinking_times, moment_integral_estimate, tangent_set_from_map
from .regions import Region
from .spheremaps import SphereMapDiscretization, _tangent_frame, make_fixture
from .stats import ProbabilityEstimate, wilson
from .tolerances import TOL

# offsets keep the measure, shrink-time and Z ensembles independent
MEASURE_SEED_OFFSET = 0
SHRINK_SEED_OFFSET = 1
Z_SEED_OFFSET = 2


# -- configuration ------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ManifoldConfig(_Strict):
    kind: Literal["euclidean", "sphere", "flat_torus", "hyperbolic2"]
    dim: int = Field(2, ge=1, le=3)
    radius_length: float = Field(1.0, gt=0)
    basis_length: Optional[list[list[float]]] = None
    inf_radius_length: Optional[float] = Field(None, gt=0)


class FieldConfig(_Strict):
    name: str
    params: dict[str, Any] = {}


class SigmaConfig(_Strict):
    fixture: str
    resolution: int = Field(64, ge=1)
    params: dict[str, Any] = {}


class BallConfig(_Strict):
    center: list[float]
    radius_length: float = Field(ge=0)


class Thresholds(_Strict):
    r_inj_sentinel_length: Optional[float] = Field(None, gt=0)
    bound_slack: float = Field(0.0, ge=0)
    confidence: float = Field(0.95, gt=0, lt=1)


class ExperimentConfig(_Strict):
    manifold: ManifoldConfig
    vector_field: FieldConfig
    sigma: SigmaConfig
    tracked_point: Optional[list[float]] = None
    K: list[BallConfig] = Field(min_length=1)
    W: Optional[list[BallConfig]] = None
    t_grid_time: list[float] = Field(min_length=1)
    delta_time: float = Field(gt=0)
    dt_time: float = Field(gt=0)
    horizon_time: float = Field(gt=0)
    trials: int = Field(1000, ge=2)
    seed: int = Field(0, ge=0)
    thresholds: Thresholds = Thresholds()
    homotopy_s_steps: int = Field(4, ge=1)
    epsilon_grid: list[float] = [0.2, 0.1, 0.05]
    moment_t_max_time: Optional[float] = Field(None, gt=0)
    moment_grid_points: int = Field(200, ge=4)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _check(self):
        if self.delta_time < 10 * self.dt_time * (1 - 1e-9):
            raise ValueError("delta_time must be at least 10 * dt_time")
        if any(b <= a for a, b in zip(self.t_grid_time, self.t_grid_time[1:])):
            raise ValueError("t_grid_time must be strictly increasing")
        if self.t_grid_time[0] < 0 or self.t_grid_time[-1] > self.horizon_time * (1 + 1e-12):
            raise ValueError("t_grid_time must lie in [0, horizon_time]")
        return self


def _line_of(text: str, loc) -> int | None:
    for key in reversed([k for k in loc if isinstance(k, str)]):
        m = re.search(r'"%s"\s*:' % re.escape(key), text)
        if m:
            return text.count("\n", 0, m.start()) + 1
    return None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate JSON; errors carry ``source:line: field: message``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        line = _line_of(text, err["loc"])
        where = f"{source}:{line}" if line else source
        raise ConfigInvalid(f"{where}: {loc}: {err['msg']}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


# -- assembled experiment --------------------------------------------------------------

def region_points(M: Manifold, region: Region, ring: int = 16) -> np.ndarray:
    """Finite sample of a region: every center plus a ring just inside each ball's boundary."""
    pts = []
    for b in region.balls:
        c = np.asarray(b.center, dtype=float)
        pts.append(c)
        if b.radius == 0:
            continue
        r = b.radius * (1 - 1e-6)
        if M.dim == 1:
            u = M.project_tangent(c, np.ones(M.ambient_dim))
            u = u / M.norm(c, u)
            dirs = [u, -u]
        else:
            e1, e2 = _tangent_frame(M, c)
            ang = 2 * np.pi * np.arange(ring) / ring
            dirs = [np.cos(a) * e1 + np.sin(a) * e2 for a in ang]
        pts.extend(M.exp(c, r * np.array(dirs)))
    return np.array(pts)


@dataclass(frozen=True)
class Experiment:
    config: ExperimentConfig
    manifold: Manifold
    spec: VectorFieldSpec
    sigma: SphereMapDiscretization
    K: Region
    W: Region | None
    x: np.ndarray
    r_inj_K: float

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Experiment":
        M = manifold_from_config(cfg.manifold.model_dump(exclude_none=True))
        spec = field_from_config(M, cfg.vector_field.model_dump())
        sigma = make_fixture(cfg.sigma.fixture, M, cfg.sigma.resolution, **cfg.sigma.params)
        K = Region.from_config([b.model_dump() for b in cfg.K], M, "K")
        W = Region.from_config([b.model_dump() for b in cfg.W], M, "W") if cfg.W else None
        x = np.asarray(cfg.tracked_point if cfg.tracked_point is not None else K.balls[0].center, dtype=float)
        if x.shape != (M.ambient_dim,):
            raise ConfigInvalid(f"tracked_point: expected {M.ambient_dim} coordinates")
        if np.max(np.abs(M.constraint_residual(x))) > 1e-8:
            raise ConfigInvalid("tracked_point: not on the manifold")
        if not K.contains(M, x):
            raise ConfigInvalid("tracked_point: must lie in K")
        if not np.all(K.contains(M, sigma.image)):
            raise ConfigInvalid("sigma: image must lie inside K")
        r_inj = float(M.injectivity_radius_set(region_points(M, K)))
        sentinel = cfg.thresholds.r_inj_sentinel_length
        if sentinel is not None and r_inj >= TOL.inf_radius * (1 - 1e-12):
            r_inj = sentinel
        try:
            sigma.check(min(r_inj, float(M.injectivity_radius_set(sigma.image))))
        except ResolutionTooCoarse as exc:
            raise ConfigInvalid(f"sigma.resolution: {exc}") from exc
        return cls(cfg, M, spec, sigma, K, W, x, r_inj)

    @property
    def dt(self) -> float:
        return self.config.dt_time


def build_experiment(path_or_cfg) -> Experiment:
    cfg = path_or_cfg if isinstance(path_or_cfg, ExperimentConfig) else load_config(path_or_cfg)
    return Experiment.from_config(cfg)


def _steps(times, dt):
    return np.floor(np.asarray(times, dtype=float) / dt + 1e-9).astype(int)


# -- condition (c) -----------------------------------------------------------------------

@dataclass
class MeasureEstimate:
    t_probe: list[float]
    hit_fraction: list[ProbabilityEstimate]
    mu_hat: float
    mu_stderr: float
    stationary: bool
    tail_start_time: float

    def to_dict(self):
        return {
            "t_probe": list(self.t_probe),
            "hit_fraction": [h.to_dict() for h in self.hit_fraction],
            "mu_hat": self.mu_hat,
            "mu_stderr": self.mu_stderr,
            "stationary": self.stationary,
            "tail_start_time": self.tail_start_time,
        }


def _tail_slice(n: int) -> slice:
    return slice(n - max(1, math.ceil(n / 4)), n)


def estimate_invariant_measure(exp: Experiment, K: Region | None = None, x=None, trials: int | None = None,
                               seed: int | None = None, t_probe=None, workers=None) -> MeasureEstimate:
    """Hit fractions of ``xi_t(x) in K`` over probe times; ``mu_hat`` averages the last quarter."""
    cfg = exp.config
    K = exp.K if K is None else K
    x = exp.x if x is None else np.asarray(x, dtype=float)
    M = exp.manifold
    if not K.contains(M, x):
        raise ValueError("x must lie in K")
    trials = cfg.trials if trials is None else trials
    seed = cfg.seed + MEASURE_SEED_OFFSET if seed is None else seed
    t_probe = [float(t) for t in (cfg.t_grid_time if t_probe is None else t_probe)]
    steps = _steps(t_probe, exp.dt)
    n = int(steps.max())
    hits = np.zeros(len(steps), dtype=np.int64)
    if n == 0:
        hits[:] = trials
    else:
        for block in iter_ensemble(exp.spec, x[None], exp.dt, n, seed, trials, record_steps=steps,
                                   keep_tangents=False, workers=workers):
            hits += K.contains(M, block.positions[:, :, 0]).sum(axis=0)
    fractions = [wilson(int(h), trials, cfg.thresholds.confidence) for h in hits]
    tail = _tail_slice(len(t_probe))
    est = np.array([f.estimate for f in fractions[tail]])
    width = np.mean([f.ci_high - f.ci_low for f in fractions[tail]])
    mu = float(est.mean())
    stationary = bool(np.ptp(est) < 2 * width) if len(est) > 1 else False
    return MeasureEstimate(t_probe, fractions, mu, math.sqrt(mu * (1 - mu) / trials), stationary,
                           t_probe[tail.start])


def select_time(measure: MeasureEstimate, shrink_times) -> float:
    """Smallest shrinking time inside the stationary tail of the measure estimate."""
    if not shrink_times:
        raise NoValidTime("no probe time shrinks the expected diameter below R_inj(K)/2")
    if not measure.stationary:
        raise NoValidTime("hit fractions are not stationary over the probed tail")
    ok = [t for t in shrink_times if t >= measure.tail_start_time - 1e-12]
    if not ok:
        raise NoValidTime("no shrinking time lies in the stationary tail")
    return float(min(ok))


def shrinking_times(exp: Experiment, trials: int | None = None, seed: int | None = None, workers=None):
    cfg = exp.config
    return find_shrinking_times(exp.sigma, exp.spec, cfg.t_grid_time, cfg.trials if trials is None else trials,
                                0.5 * exp.r_inj_K, cfg.seed + SHRINK_SEED_OFFSET if seed is None else seed,
                                exp.dt, workers)


# -- the event Z -------------------------------------------------------------------------------

@dataclass
class TheoremReport:
    t_j: float
    forced_time: bool
    r_inj_K: float
    trials: int
    mu_hat: float
    p_diam_large: ProbabilityEstimate
    p_in_K: ProbabilityEstimate
    p_Z: ProbabilityEstimate
    inequality_9_holds: bool
    inequality_10_holds: bool
    bound_holds: bool
    coherent: bool
    z_trials: int
    null_homotopy_rate: float
    chain_success_rate: float
    winding_preserved_rate: Optional[float]
    measure: MeasureEstimate
    shrink_times: list[float]
    records: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self, include_records: bool = False):
        d = {k: v for k, v in asdict(self).items() if k not in ("records", "measure")}
        for k in ("p_diam_large", "p_in_K", "p_Z"):
            d[k] = getattr(self, k).to_dict()
        d["measure"] = self.measure.to_dict()
        if include_records:
            d["records"] = self.records
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n")
        write_trials_csv(out / "trials.csv", self.records)


TRIAL_COLUMNS = ["trial_index", "diam", "in_K", "in_Z", "witness_radius", "chain_ok", "winding"]


def write_trials_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for r in records:
            w.writerow([r["trial_index"], repr(r["diam"]), int(r["in_K"]), int(r["in_Z"]),
                        "" if r["witness_radius"] is None else repr(r["witness_radius"]),
                        int(r["chain_ok"]), "" if r["winding"] is None else " ".join(map(str, r["winding"]))])


def evaluate_Z(exp: Experiment, t_j: float, trials: int, seed: int, workers=None):
    """Per-trial records at ``t_j`` for the sphere map, the tracked point and the chain."""
    M = exp.manifold
    sigma = exp.sigma
    V = sigma.V
    times = chain_times(t_j, exp.config.delta_time)
    steps = _steps(times, exp.dt)
    n = int(steps[-1])
    x0 = np.concatenate([sigma.image, exp.x[None]])
    torus_loop = isinstance(M, FlatTorus) and sigma.n == 1
    w0 = winding_batch(M, sigma.image[None])[0] if torus_loop else None
    records = []
    blocks = ([simulate_zero(x0, trials)] if n == 0 else
              iter_ensemble(exp.spec, x0, exp.dt, n, seed, trials, record_steps=steps,
                            keep_tangents=False, workers=workers))
    for block in blocks:
        imgs = block.positions[:, :, :V]
        final = imgs[:, -1]
        found, _, radius, diam = witness_batch(M, final, exp.r_inj_K)
        in_K = exp.K.contains(M, block.positions[:, -1, V])
        in_Z = (diam < 0.5 * exp.r_inj_K) & in_K
        chain_ok, _ = chain_displacements_ok(M, imgs, exp.r_inj_K) if len(steps) > 1 else (
            np.ones(len(block.trials), bool), None)
        winding = None
        if torus_loop:
            winding = winding_batch(M, final)
        for b, trial in enumerate(block.trials):
            records.append({
                "trial_index": int(trial),
                "diam": float(diam[b]),
                "in_K": bool(in_K[b]),
                "in_Z": bool(in_Z[b]),
                "witness_radius": float(radius[b]) if found[b] else None,
                "chain_ok": bool(chain_ok[b]),
                "winding": None if winding is None else [int(c) for c in winding[b]],
                "winding_preserved": None if winding is None else bool(np.array_equal(winding[b], w0)),
            })
    return records


class _ZeroBlock:
    def __init__(self, x0, trials):
        self.trials = np.arange(trials)
        self.positions = np.broadcast_to(x0, (trials, 1) + x0.shape)


def simulate_zero(x0, trials):
    return _ZeroBlock(x0, trials)


def run_theorem_experiment(exp: Experiment, force_time: float | None = None, workers=None,
                           measure: MeasureEstimate | None = None) -> TheoremReport:
    """Pick ``t_j``, then evaluate the event Z on a fresh ensemble.

    ``force_time`` skips time selection (debugging and negative controls).
    """
    cfg = exp.config
    conf = cfg.thresholds.confidence
    measure = estimate_invariant_measure(exp, workers=workers) if measure is None else measure
    shrink = shrinking_times(exp, workers=workers)
    t_j = select_time(measure, shrink) if force_time is None else float(force_time)
    records = evaluate_Z(exp, t_j, cfg.trials, cfg.seed + Z_SEED_OFFSET, workers)
    N = len(records)
    n_diam = sum(r["diam"] >= 0.5 * exp.r_inj_K for r in records)
    n_K = sum(r["in_K"] for r in records)
    z = [r for r in records if r["in_Z"]]
    p_diam, p_K, p_Z = wilson(n_diam, N, conf), wilson(n_K, N, conf), wilson(len(z), N, conf)
    mu = measure.mu_hat
    # a probability is zero when no trial lands in Z; absent witnesses count as failures
    null_rate = sum(r["witness_radius"] is not None for r in z) / len(z) if z else 0.0
    wp = [r["winding_preserved"] for r in records if r["winding_preserved"] is not None and r["chain_ok"]]
    return TheoremReport(
        t_j=t_j, forced_time=force_time is not None, r_inj_K=exp.r_inj_K, trials=N, mu_hat=mu,
        p_diam_large=p_diam, p_in_K=p_K, p_Z=p_Z,
        inequality_9_holds=bool(p_diam.ci_high < mu / 4),
        inequality_10_holds=bool(p_K.ci_low > mu / 2),
        bound_holds=bool(p_Z.ci_low > mu / 4 - cfg.thresholds.bound_slack),
        coherent=bool(len(z) >= n_K - n_diam),
        z_trials=len(z), null_homotopy_rate=float(null_rate),
        chain_success_rate=sum(r["chain_ok"] for r in records) / N,
        winding_preserved_rate=(sum(wp) / len(wp)) if wp else None,
        measure=measure, shrink_times=list(shrink), records=records)


# -- exit-time certificate ---------------------------------------------------------------------------------------

@dataclass
class CertificateRow:
    epsilon: float
    delta: Optional[float]
    estimate: Optional[ProbabilityEstimate]

    def to_dict(self):
        return {"epsilon": self.epsilon, "delta": self.delta,
                "estimate": None if self.estimate is None else self.estimate.to_dict()}


def certify_from_exit_steps(first_steps: np.ndarray, epsilon: float, dt: float, delta_min: float,
                            delta_max: float) -> CertificateRow:
    """Largest grid ``delta`` in ``[delta_min, delta_max]`` whose upper Wilson bound is ``<= epsilon``.

    Bisection over whole time steps; the exit fraction is monotone in ``delta``
    because every ``delta`` reuses the same trials.
    """
    lo_step = int(math.ceil(delta_min / dt - 1e-9))
    hi_step = int(math.floor(delta_max / dt + 1e-9))
    est = lambda k: exit_fraction(first_steps, k * dt, dt)
    top = est(hi_step)
    if top.ci_high <= epsilon:
        return CertificateRow(epsilon, hi_step * dt, top)
    if est(lo_step).ci_high > epsilon:
        return CertificateRow(epsilon, None, None)
    lo, hi = lo_step, hi_step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if est(mid).ci_high <= epsilon:
            lo = mid
        else:
            hi = mid
    return CertificateRow(epsilon, lo * dt, est(lo))


def run_lemma1_certificate(exp: Experiment, epsilon_grid=None, trials: int | None = None,
                           seed: int | None = None, workers=None) -> list[CertificateRow]:
    cfg = exp.config
    if exp.W is None:
        raise ConfigInvalid("W: required for the exit-time certificate")
    eps = cfg.epsilon_grid if epsilon_grid is None else epsilon_grid
    K_pts = region_points(exp.manifold, exp.K)
    delta_min, delta_max = 10 * exp.dt, cfg.horizon_time
    steps = first_exit_steps(exp.spec, K_pts, exp.W, delta_max, exp.dt,
                             cfg.trials if trials is None else trials,
                             cfg.seed if seed is None else seed, workers)
    return [certify_from_exit_steps(steps, float(e), exp.dt, delta_min, delta_max) for e in eps]


# -- moment report and raw trajectories ---------------------------------------------------------------

def run_moment(exp: Experiment, trials: int | None = None, seed: int | None = None, workers=None):
    cfg = exp.config
    L = tangent_set_from_map(exp.sigma)
    T = cfg.moment_t_max_time or cfg.horizon_time
    return moment_integral_estimate(exp.spec, L, T, exp.dt, cfg.trials if trials is None else trials,
                                    cfg.seed if seed is None else seed, cfg.moment_grid_points, workers)


def simulate_records(exp: Experiment, trials: int, seed: int, workers=None) -> list[dict]:
    """Positions of the tracked point (index -1) and the sphere-map vertices on ``t_grid_time``."""
    cfg = exp.config
    steps = _steps(cfg.t_grid_time, exp.dt)
    x0 = np.concatenate([exp.x[None], exp.sigma.image])
    n = int(steps.max())
    if n == 0:
        pos = np.broadcast_to(x0, (trials, len(steps)) + x0.shape)
    else:
        pos = simulate(exp.spec, x0, exp.dt, n, seed, trials, record_steps=steps, keep_tangents=False).positions
    rows = []
    for b in range(trials):
        for r, t in enumerate(cfg.t_grid_time):
            for p in range(x0.shape[0]):
                rows.append({"trial_index": b, "time": float(t), "point": p - 1,
                             "coords": [float(c) for c in pos[b, r, p]]})
    return rows


# -- negative and closed-manifold controls ------------------------------------------------------------

def torus_control_config(trials: int = 500, seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig.model_validate({
        "manifold": {"kind": "flat_torus", "dim": 2},
        "vector_field": {"name": "torus_translation", "params": {"sigma": 0.3}},
        "sigma": {"fixture": "torus_winding", "resolution": 64, "params": {"winding": [1, 0]}},
        "tracked_point": [0.5, 0.5],
        "K": [{"center": [0.5, 0.5], "radius_length": 0.99}],
        "t_grid_time": [0.0, 0.5, 1.0, 1.5, 2.0],
        "delta_time": 0.1, "dt_time": 0.01, "horizon_time": 2.0,
        "trials": trials, "seed": seed,
    })


def torus_arc_config(trials: int = 10000, seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig.model_validate({
        "manifold": {"kind": "flat_torus", "dim": 1},
        "vector_field": {"name": "torus_translation", "params": {"sigma": 1.0}},
        "sigma": {"fixture": "segment_loop", "resolution": 16, "params": {"radius_length": 0.05, "center": [0.5]}},
        "tracked_point": [0.5],
        "K": [{"center": [0.5], "radius_length": 0.15}],
        "t_grid_time": [0.0, 1.0, 2.0, 3.0, 4.0],
        "delta_time": 0.1, "dt_time": 0.01, "horizon_time": 4.0,
        "trials": trials, "seed": seed,
    })


def sphere_control_config(trials: int = 1000, seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig.model_validate({
        "manifold": {"kind": "sphere", "dim": 2},
        "vector_field": {"name": "sphere_gradient_frame"},
        "sigma": {"fixture": "identity_sphere", "resolution": 1},
        "tracked_point": [0.0, 0.0, 1.0],
        "K": [{"center": [0.0, 0.0, 1.0], "radius_length": 3.2}],
        "t_grid_time": [0.0, 1.0, 2.0, 3.0],
        "delta_time": 0.1, "dt_time": 0.01, "horizon_time": 3.0,
        "trials": trials, "seed": seed, "moment_grid_points": 60,
    })


def run_controls(trials: int = 500, seed: int = 0, workers=None) -> dict:
    """Negative suite: torus winding loop, torus arc measure and the S^2 moment integral."""
    out: dict[str, Any] = {}
    torus = build_experiment(torus_control_config(trials, seed))
    try:
        run_theorem_experiment(torus, workers=workers)
        out["torus_theorem"] = "time selected"
    except NoValidTime as exc:
        out["torus_theorem"] = f"NoValidTime: {exc}"
    witness_any = False
    preserved = []
    for t in torus.config.t_grid_time:
        recs = evaluate_Z(torus, t, trials, seed + Z_SEED_OFFSET, workers)
        witness_any |= any(r["witness_radius"] is not None for r in recs)
        preserved += [r["winding_preserved"] for r in recs if r["chain_ok"]]
    out["torus_witness_found"] = bool(witness_any)
    out["torus_winding_preserved_rate"] = sum(preserved) / len(preserved) if preserved else None
    arc = build_experiment(torus_arc_config(max(trials, 1000), seed))
    m = estimate_invariant_measure(arc, workers=workers)
    out["torus_arc_measure"] = {"mu_hat": m.mu_hat, "mu_stderr": m.mu_stderr, "arc_length": 0.3}
    sphere = build_experiment(sphere_control_config(min(trials, 500), seed))
    rep = run_moment(sphere, workers=workers)
    out["sphere_moment"] = {"converged": rep.converged, "tail_slope": rep.tail_slope,
                            "truncated_integral": rep.truncated_integral}
    return out
