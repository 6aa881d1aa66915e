"""Configuration-driven experiments with fixed CSV/JSON output schemas.

Every CSV has the columns ``COLUMNS[kind]``; the last two are always
``regime`` and ``params_hash``.  The JSON summary carries fitted slopes with
bootstrap bands (decay kinds), max/median ratios (sparse kinds), the
parameter echo and a version string.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import subprocess
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .circle.arcs import EXPLORATORY, PAPER, ArcParameters
from .circle.multipliers import ArcGrid, approximation_error, error_E_j
from .circle.region import proven_region
from .circle.weyl import ReducedFraction, weyl_decay_fit
from .fits import bootstrap_slope, least_squares, theil_sen
from .fixtures import get_kernel, get_map
from .lattice_fn import LatticeFunction
from .poly_map import PCube, check_condition_C, probe_condition_L
from .sparse import check_maximal_sparse, check_prop_finite_support, sparse_ratio_batch
from .transform import BudgetExceeded, TruncatedTransform

KINDS = ("weyl-decay", "multiplier-approx", "error-decay", "sparse-constant", "maximal-check",
         "finite-support-check", "region", "admissibility")

COLUMNS = {
    "weyl-decay": ["q", "value", "fitted_model", "regime", "params_hash"],
    "multiplier-approx": ["j", "value", "fitted_model", "regime", "params_hash"],
    "error-decay": ["j", "value", "fitted_model", "regime", "params_hash"],
    "sparse-constant": ["trial", "value", "cubes", "certified", "regime", "params_hash"],
    "maximal-check": ["trial", "value", "regime", "params_hash"],
    "finite-support-check": ["trial", "value", "regime", "params_hash"],
    "region": ["inv_r", "inv_s", "eps_prime", "N_P", "in_Omega_m", "major_condition_ok", "regime", "params_hash"],
    "admissibility": ["condition", "holds", "detail", "regime", "params_hash"],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists (field, message) pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {m}" for k, m in problems))


@dataclass
class ExperimentConfig:
    kind: str
    map: str | dict = "t3"
    kernel: str | dict = "one_over_y"
    delta: float = 0.005
    delta_prime: float = 0.0004
    regime: str = PAPER
    chi_exponent: int = 10
    j_min: int = 6
    j_max: int = 14
    q_cap: int = 500
    grid: dict = field(default_factory=dict)
    trials: int = 100
    seed: int = 0
    r: float = 2.0
    s: float = 2.0
    eps_prime: float | None = None
    sigma: str = "1/2"
    bootstrap: int = 1000
    output: str = "radonlab_out"

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError([(k, "unknown field") for k in unknown])
        if "kind" not in doc:
            raise ConfigError([("kind", "missing")])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError([(f"line {e.lineno}, column {e.colno}", e.msg)]) from None
        if not isinstance(doc, dict):
            raise ConfigError([("<root>", "config must be a JSON object")])
        return cls.from_dict(doc)

    def arc_parameters(self) -> ArcParameters:
        return ArcParameters(self.delta, self.delta_prime, self.regime, self.chi_exponent)

    def validate(self) -> None:
        bad: list[tuple[str, str]] = []
        if self.kind not in KINDS:
            bad.append(("kind", f"must be one of {', '.join(KINDS)}"))
        if self.regime not in (PAPER, EXPLORATORY):
            bad.append(("regime", "must be 'paper' or 'exploratory'"))
        try:
            get_map(self.map)
        except (KeyError, ValueError, TypeError) as e:
            bad.append(("map", str(e)))
        try:
            get_kernel(self.kernel)
        except (KeyError, ValueError, TypeError) as e:
            bad.append(("kernel", str(e)))
        if self.kind in ("multiplier-approx", "error-decay"):
            try:
                self.arc_parameters()
            except ValueError as e:
                bad.append(("delta/delta_prime", str(e)))
        if self.kind == "weyl-decay" and not (isinstance(self.q_cap, int) and self.q_cap >= 2):
            bad.append(("q_cap", "must be an integer >= 2"))
        if not (isinstance(self.j_min, int) and isinstance(self.j_max, int) and 0 <= self.j_min <= self.j_max):
            bad.append(("j_min/j_max", "need integers 0 <= j_min <= j_max"))
        if not (isinstance(self.trials, int) and self.trials >= 1):
            bad.append(("trials", "must be a positive integer"))
        if not isinstance(self.seed, int):
            bad.append(("seed", "must be an integer"))
        for name in ("r", "s"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 1):
                bad.append((name, "must be a number >= 1"))
        try:
            sg = Fraction(self.sigma)
            if not 0 < sg < 1:
                bad.append(("sigma", "must lie in (0, 1)"))
        except (ValueError, TypeError):
            bad.append(("sigma", "must be a rational like '1/2'"))
        if self.kind == "region" and (self.eps_prime is None or self.eps_prime <= 0):
            bad.append(("eps_prime", "region needs eps_prime > 0"))
        if not isinstance(self.bootstrap, int) or self.bootstrap < 0:
            bad.append(("bootstrap", "must be a non-negative integer"))
        if bad:
            raise ConfigError(bad)

    def canonical(self) -> dict:
        doc = asdict(self)
        doc.pop("output")
        return doc

    @property
    def params_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[list]
    summary: dict
    partial: bool = False

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _slope_summary(x, y, cfg: ExperimentConfig) -> dict:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2:
        return {"theil_sen_slope": None, "least_squares_slope": None, "bootstrap_95": None}
    ts, ti = theil_sen(x, y)
    ls, _ = least_squares(x, y)
    band = bootstrap_slope(x, y, cfg.bootstrap, cfg.seed) if cfg.bootstrap and x.size >= 3 else (None, None)
    return {"theil_sen_slope": ts, "theil_sen_intercept": ti, "least_squares_slope": ls, "bootstrap_95": list(band)}


def _random_pm1(rng: np.random.Generator, n: int, lo: int, size: int) -> LatticeFunction:
    return LatticeFunction((lo,) * n, rng.choice([-1.0, 1.0], size=(size,) * n))


# -- experiment kinds ---------------------------------------------------------------

def _weyl(cfg: ExperimentConfig):
    P = get_map(cfg.map)
    fit = weyl_decay_fit(P, cfg.q_cap)
    rows = [[q, v, (2.0 ** fit.intercept * q ** fit.slope) if v > 0 else float("nan")] for q, v in fit.table]
    pts = [(math.log2(q), math.log2(v)) for q, v in fit.table if v > 0]
    summ = _slope_summary([a for a, _ in pts], [b for _, b in pts], cfg)
    summ.update(predicted_slope=fit.predicted_slope, excluded_zero=len(fit.excluded_zero))
    return rows, summ, False


def _approx(cfg: ExperimentConfig):
    P, K, pr = get_map(cfg.map), get_kernel(cfg.kernel), cfg.arc_parameters()
    frac = cfg.grid.get("fraction")
    af = ReducedFraction.of(tuple(frac[:-1]) if P.n > 1 else frac[0], frac[-1]) if frac else \
        ReducedFraction.of((0,) * P.n if P.n > 1 else 0, 1)
    m = int(cfg.grid.get("points", 65))
    rows, js, logs, partial = [], [], [], False
    for j in range(cfg.j_min, cfg.j_max + 1):
        w = pr.widths(P, j)
        axes = [np.linspace(-wi, wi, m) for wi in w]
        off = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, P.n)
        try:
            rep = approximation_error(P, K, pr, j, af, off)
        except BudgetExceeded:
            rows.append([j, float("nan"), float("nan")])
            partial = True
            continue
        rows.append([j, rep.max_error, float("nan")])
        if rep.max_error > 0:
            js.append(j)
            logs.append(math.log2(rep.max_error))
    summ = _slope_summary(js, logs, cfg)
    _fill_model(rows, summ)
    summ.update(fraction=[*af.a, af.q], predicted_slope=-(cfg.delta - cfg.delta_prime))
    return rows, summ, partial


def _fill_model(rows, summ) -> None:
    if summ.get("theil_sen_slope") is None:
        return
    for row in rows:
        row[2] = 2.0 ** (summ["theil_sen_intercept"] + summ["theil_sen_slope"] * row[0])


def _error_decay(cfg: ExperimentConfig):
    P, K, pr = get_map(cfg.map), get_kernel(cfg.kernel), cfg.arc_parameters()
    half = float(cfg.grid.get("half_width", 8.0))
    step = float(cfg.grid.get("step", 0.125))
    qwin = int(cfg.grid.get("q_window", 64))
    rows, js, logs, partial = [], [], [], False
    for j in range(cfg.j_min, cfg.j_max + 1):
        qm = max(qwin, int(2 * 2.0 ** (cfg.delta_prime * j)))
        ax = np.arange(-half, half + step / 2, step)
        scales = [2.0 ** (-D * j) for D in P.degrees]
        off = np.stack(np.meshgrid(*[ax * s for s in scales], indexing="ij"), axis=-1).reshape(-1, P.n)
        grid = ArcGrid.at_fractions(_fractions(P.n, qm), off, f"windows(q<={qm})")
        try:
            res = error_E_j(P, K, pr, j, grid)
        except BudgetExceeded:
            rows.append([j, float("nan"), float("nan")])
            partial = True
            continue
        rows.append([j, res.sup, float("nan")])
        js.append(j)
        logs.append(math.log2(res.sup))
    summ = _slope_summary(js, logs, cfg)
    _fill_model(rows, summ)
    slope = summ.get("theil_sen_slope")
    if slope is not None and slope < 0:
        eps = Fraction(repr(-slope)).limit_denominator(10**6)
        verdict = proven_region(P, eps, cfg.r, cfg.s, eps_source=f"fitted from error-decay ({cfg.params_hash})")
        summ.update(eps_prime=float(eps), region=verdict.to_dict())
    else:
        summ.update(eps_prime=None, region=None)
    return rows, summ, partial


def _fractions(n: int, q_max: int):
    from .circle.weyl import enumerate_fractions

    return enumerate_fractions(n, q_max)


def _sparse_constant(cfg: ExperimentConfig):
    P, K = get_map(cfg.map), get_kernel(cfg.kernel)
    T = TruncatedTransform.from_kernel(P, K, (0, cfg.j_max))
    half = int(cfg.grid.get("support_half_width", 512))
    rng = np.random.default_rng(cfg.seed)
    pairs = [(_random_pm1(rng, P.n, -half, 2 * half + 1), _random_pm1(rng, P.n, -half, 2 * half + 1))
             for _ in range(cfg.trials)]
    res, s = sparse_ratio_batch(T, pairs, cfg.r, cfg.s, Fraction(cfg.sigma), P.degrees)
    rows = [[i, r.ratio if r.ratio is not None else float("nan"), len(r.collection), r.certified]
            for i, r in enumerate(res)]
    return rows, {"max": s.max, "median": s.median, "max_over_median": s.max_over_median,
                  "all_certified": s.all_certified, "all_finite": s.all_finite, "operator": T.label}, False


def _nonneg_trials(rng, n: int, half: int, count: int, density: float = 0.2):
    size = 2 * half + 1
    out = []
    for _ in range(count):
        f = np.abs(rng.normal(size=(size,) * n)) * (rng.random((size,) * n) < density)
        g = np.abs(rng.normal(size=(size,) * n)) * (rng.random((size,) * n) < density)
        out.append((LatticeFunction((-half,) * n, f), LatticeFunction((-half,) * n, g)))
    return out


def _maximal(cfg: ExperimentConfig):
    P = get_map(cfg.map)
    rng = np.random.default_rng(cfg.seed)
    trials = _nonneg_trials(rng, P.n, int(cfg.grid.get("support_half_width", 64)), cfg.trials)
    chk = check_maximal_sparse(trials, P.degrees, Fraction(cfg.sigma))
    rows = [[i, v] for i, v in enumerate(chk.ratios)]
    return rows, {"max": chk.max_ratio, "median": chk.median, "max_over_median": chk.max_over_median,
                  "constant": chk.constant, "all_certified": chk.all_certified, "passes": chk.passes}, False


def _finite_support(cfg: ExperimentConfig):
    P = get_map(cfg.map)
    ell = float(cfg.grid.get("sidelength", 3))
    Q = PCube.centered((0,) * P.n, ell, P.degrees)
    rng = np.random.default_rng(cfg.seed)
    K = LatticeFunction(Q.lo, rng.normal(size=Q.shape))
    half = int(cfg.grid.get("support_half_width", 20))
    size = 2 * half + 1
    trials = [(LatticeFunction((-half,) * P.n, rng.normal(size=(size,) * P.n)),
               LatticeFunction((-half,) * P.n, rng.normal(size=(size,) * P.n))) for _ in range(cfg.trials)]
    chk = check_prop_finite_support(K, Q, cfg.r, cfg.s, trials, Fraction(cfg.sigma))
    rows = [[i, v] for i, v in enumerate(chk.ratios)]
    return rows, {"max": chk.max_ratio, "rhs": chk.rhs, "norm_estimate": chk.norm_estimate,
                  "Q_star": Q.to_dict(), "constant": chk.constant, "all_certified": chk.all_certified,
                  "passes": chk.passes}, False


def _region(cfg: ExperimentConfig):
    P = get_map(cfg.map)
    v = proven_region(P, cfg.eps_prime, cfg.r, cfg.s)
    rows = [[str(v.inv_r), str(v.inv_s), str(v.eps_prime), v.N_P, v.in_Omega_m, v.major_condition_ok]]
    return rows, v.to_dict(), False


def _admissibility(cfg: ExperimentConfig):
    P = get_map(cfg.map)
    C = check_condition_C(P)
    g = cfg.grid
    L = probe_condition_L(P, float(g.get("beta", 1.0)), float(g.get("L0", 2.0)), float(g.get("R", 50.0)),
                          float(g.get("grid_step", 0.125)))
    rows = [["C", C.holds, json.dumps(C.witnesses)],
            ["L", L.no_counterexample_found, json.dumps(_plain(L.counterexample))]]
    return rows, {"condition_C": C.holds, "condition_L_no_counterexample": L.no_counterexample_found,
                  "lojasiewicz_counterexample": _plain(L.counterexample)}, False


def _plain(x):
    if x is None:
        return None
    return [float(v) for v in np.asarray(x).ravel()]


_RUNNERS = {
    "weyl-decay": _weyl,
    "multiplier-approx": _approx,
    "error-decay": _error_decay,
    "sparse-constant": _sparse_constant,
    "maximal-check": _maximal,
    "finite-support-check": _finite_support,
    "region": _region,
    "admissibility": _admissibility,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    rows, summ, partial = _RUNNERS[cfg.kind](cfg)
    h = cfg.params_hash
    rows = [list(r) + [cfg.regime, h] for r in rows]
    summary = {"kind": cfg.kind, "params_hash": h, "regime": cfg.regime, "partial": partial,
               "version": version_string(), "params": cfg.canonical(), "result": summ}
    return ExperimentResult(COLUMNS[cfg.kind], rows, summary, partial)


def write_outputs(res: ExperimentResult, prefix: str | Path) -> tuple[Path, Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    csv_path.write_bytes(res.csv_text().encode("utf-8"))
    json_path.write_text(json.dumps(res.summary, indent=2, default=_json_default), encoding="utf-8")
    return csv_path, json_path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
