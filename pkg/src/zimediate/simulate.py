"""Scenario data generation and replicate studies (bias, SE, coverage, AIC choice)."""

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from .data import Dataset
from .distributions import MediatorFamily, log_density_positive, sample_true_mediator, zero_prob
from .effects import EffectRequest, effects_point, effects_with_inference
from .estimator import FitConfig
from .exceptions import IngestionError, ZIMediationError
from .false_zero import DEFAULT_B, FalseZeroMechanism
from .outcome import outcome_mean
from .params import Theta
from .selection import select_model

logger = logging.getLogger(__name__)

STUDY_EFFECTS = ("NIE1", "NIE2", "NIE")


# ---------------------------------------------------------------------------
# exposure sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class XSource:
    """Where exposures come from: ``standard_normal``, ``uniform(a,b)`` or ``file:<path>``."""

    kind: str
    a: float = 0.0
    b: float = 1.0
    path: str = None

    @classmethod
    def parse(cls, text):
        if isinstance(text, XSource):
            return text
        s = str(text).strip()
        if s in ("standard_normal", "normal"):
            return cls("standard_normal")
        mt = re.fullmatch(r"uniform\(\s*([^,]+)\s*,\s*([^)]+)\s*\)", s)
        if mt:
            a, b = float(mt.group(1)), float(mt.group(2))
            if not a < b:
                raise ValueError(f"uniform bounds must satisfy a < b, got {s}")
            return cls("uniform", a, b)
        if s.startswith("file:"):
            return cls("file", path=s[5:].strip())
        raise ValueError(f"unknown x_source {s!r}")

    def __str__(self):
        if self.kind == "uniform":
            return f"uniform({self.a:g},{self.b:g})"
        if self.kind == "file":
            return f"file:{self.path}"
        return self.kind

    def _file_values(self):
        return _read_x_file(self.path)

    def draw(self, n, rng):
        if self.kind == "standard_normal":
            return rng.standard_normal(n)
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, n)
        vals = self._file_values()
        return rng.choice(vals, size=n, replace=True)

    def grid(self, size=400):
        """Deterministic quantile grid standing in for the exposure distribution."""
        p = (np.arange(size) + 0.5) / size
        if self.kind == "standard_normal":
            return stats.norm.ppf(p)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * p
        return np.asarray(self._file_values())


@lru_cache(maxsize=8)
def _read_x_file(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise IngestionError(f"cannot read x_source file {path!r}: {exc}") from exc
    vals = []
    for lineno, row in enumerate(rows, start=1):
        cell = row.split(",")[0].strip()
        try:
            vals.append(float(cell))
        except ValueError:
            if lineno == 1:
                continue  # header
            raise IngestionError(f"non-numeric exposure {cell!r}", line=lineno, column="x") from None
    if not vals:
        raise IngestionError(f"x_source file {path!r} holds no exposures")
    return np.asarray(vals)


# ---------------------------------------------------------------------------
# calibration of the zero fractions
# ---------------------------------------------------------------------------

def mean_true_zero(theta, xs):
    return float(np.mean(zero_prob(theta.family, theta.link, xs)))


def _missed_given_positive(theta, xs, B):
    """E[exp(-eta^2 M) 1(M <= B) | M > 0, x] on each x, ignoring eta (returns a function of eta)."""
    fam = theta.family
    if fam is MediatorFamily.ZILON:
        mu = theta.link.alpha0 + theta.link.alpha1 * xs
        sig = theta.link.sigma
        # u = log m on a fixed grid per x; the upper limit is log B
        lo = np.minimum(mu, np.log(B)) - 12 * sig
        w = np.linspace(0.0, 1.0, 1601)
        u = lo[:, None] + (np.log(B) - lo)[:, None] * w[None, :]
        dens = stats.norm.pdf(u, mu[:, None], sig)
        m = np.exp(u)
        du = (np.log(B) - lo)[:, None]

        def f(eta):
            return np.trapezoid(dens * np.exp(-eta ** 2 * m), w, axis=1) * du[:, 0]
        return f
    ms = np.arange(1, int(math.floor(B)) + 1, dtype=float)
    g = np.exp(np.stack([log_density_positive(fam, theta.link, x, ms) for x in xs]))

    def f(eta):
        return g @ np.exp(-eta ** 2 * ms)
    return f


def mean_false_zero(theta, xs, B=DEFAULT_B):
    """Expected share of records whose positive mediator is observed as zero."""
    pos = 1.0 - np.asarray(zero_prob(theta.family, theta.link, xs))
    return float(np.mean(pos * _missed_given_positive(theta, xs, B)(theta.eta)))


def _with_gamma0(theta, g0):
    return replace(theta, link=replace(theta.link, gamma0=float(g0)))


def calibrate(theta, x_source, target_zero, false_share=0.5, B=DEFAULT_B):
    """Tune gamma0, then eta, so that total zeros are ``target_zero`` with ``false_share`` of them false."""
    xs = XSource.parse(x_source).grid()
    want_true = target_zero * (1.0 - false_share)
    want_false = target_zero * false_share

    def true_gap(g0):
        return mean_true_zero(_with_gamma0(theta, g0), xs) - want_true

    lo, hi = -40.0, 40.0
    if true_gap(lo) > 0:
        raise ValueError("count-family zero mass alone exceeds the requested true-zero share")
    g0 = optimize.brentq(true_gap, lo, hi, xtol=1e-12)
    th = _with_gamma0(theta, g0)
    pos = 1.0 - np.asarray(zero_prob(th.family, th.link, xs))
    missed = _missed_given_positive(th, xs, B)

    def false_gap(eta):
        return float(np.mean(pos * missed(eta))) - want_false

    if false_gap(0.0) < 0:
        raise ValueError("false-zero share unattainable: too much mass above B")
    eta = optimize.brentq(false_gap, 0.0, 60.0, xtol=1e-12)
    return th.with_eta(eta)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    family: MediatorFamily
    theta_true: Theta
    n: int = 1000
    n_reps: int = 100
    x_source: XSource = field(default_factory=lambda: XSource("standard_normal"))
    target_zero_fraction: str = ""
    x1: float = 0.0
    x2: float = 1.0
    seed: int = 0
    B: float = DEFAULT_B
    families: tuple = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "family", MediatorFamily.parse(self.family))
        object.__setattr__(self, "x_source", XSource.parse(self.x_source))
        if self.theta_true.family is not self.family:
            raise ValueError("theta_true belongs to a different family")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")

    @property
    def mechanism(self):
        return FalseZeroMechanism(self.theta_true.eta, self.B)

    def true_effects(self):
        return effects_point(self.theta_true, self.family, EffectRequest(self.x1, self.x2, 1.0))


_BASES = {
    MediatorFamily.ZILON: dict(
        theta=Theta.build("zilon", (1.0, 0.1, 2.5, -0.02, 0.01, 0.0), 1.0, (0.5, 0.02),
                          (0.0, -0.08), 1.0, sigma=0.8),
        x_source="uniform(20,80)", x1=50.0, x2=70.0),
    MediatorFamily.ZINB: dict(
        theta=Theta.build("zinb", (0.0, 0.15, 1.5, 0.5, 0.3, 0.0), 1.0, (math.log(6.0), 0.3),
                          (0.0, -0.6), 1.0, r=2.0),
        x_source="standard_normal", x1=0.0, x2=1.0),
    MediatorFamily.ZIP: dict(
        theta=Theta.build("zip", (0.0, 0.15, 1.5, 0.5, 0.3, 0.0), 1.0, (math.log(5.0), 0.3),
                          (0.0, -0.6), 1.0),
        x_source="standard_normal", x1=0.0, x2=1.0),
}
ZERO_LEVELS = (30, 50, 60, 70, 76)
PRESET_SEED = 20240


def preset_names():
    return [f"{fam.value}-{lvl}" for fam in _BASES for lvl in ZERO_LEVELS]


@lru_cache(maxsize=None)
def preset(name, n=1000, n_reps=100, seed=PRESET_SEED):
    """Calibrated scenario such as ``"zinb-30"``: total zeros at the level, half of them false."""
    try:
        fam_text, lvl_text = name.rsplit("-", 1)
        fam, lvl = MediatorFamily.parse(fam_text), int(lvl_text)
    except (ValueError, KeyError):
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}") from None
    if lvl not in ZERO_LEVELS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    base = _BASES[fam]
    theta = calibrate(base["theta"], base["x_source"], lvl / 100.0)
    return Scenario(fam, theta, n=n, n_reps=n_reps, x_source=base["x_source"],
                    target_zero_fraction=f"~{lvl}% zeros, about half false",
                    x1=base["x1"], x2=base["x2"], seed=seed, name=name)


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------

class SimulatedDataset(Dataset):
    """A :class:`Dataset` that also keeps the true mediator and realised zero shares."""

    def __init__(self, y, m_star, x, m_true):
        super().__init__(y, m_star, x)
        self.m_true = np.asarray(m_true, dtype=float)
        self.m_true.setflags(write=False)
        self.false_zero_fraction = float(np.mean((m_star == 0) & (self.m_true > 0)))


def replicate_rng(seed, rep_index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep_index)]))


def generate_dataset(scenario, rep_index):
    rng = replicate_rng(scenario.seed, rep_index)
    th = scenario.theta_true
    x = scenario.x_source.draw(scenario.n, rng)
    m = np.asarray(sample_true_mediator(th.family, th.link, x, rng), dtype=float)
    m_star = scenario.mechanism.observe(m, rng)
    y = outcome_mean(th.outcome, x, m) + th.outcome.delta * rng.standard_normal(scenario.n)
    return SimulatedDataset(y, m_star, x, m)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateResult:
    rep: int
    chosen: str
    estimates: dict
    ses: dict
    covered: dict
    zero_fraction: float
    false_zero_fraction: float
    converged: bool
    min_trace_step: float
    n_fits: int
    min_trace_steps: tuple = ()


@dataclass(frozen=True)
class EffectSummary:
    true_value: float
    mean_estimate: float
    mean_se: float
    empirical_sd: float
    bias: float
    percent_bias: float
    cp: float

    @property
    def se_ratio(self):
        return self.mean_se / self.empirical_sd if self.empirical_sd > 0 else float("nan")


@dataclass(frozen=True)
class StudySummary:
    scenario: str
    family: str
    n: int
    n_reps: int
    n_excluded: int
    effects: dict
    aic_frequency: dict
    mean_zero_fraction: float
    mean_false_zero_fraction: float
    replicates: tuple = ()
    errors: tuple = ()

    def all_trace_steps(self):
        return [s for r in self.replicates for s in r.min_trace_steps]

    def as_dict(self):
        return {
            "scenario": self.scenario, "family": self.family, "n": self.n,
            "n_reps": self.n_reps, "n_excluded": self.n_excluded,
            "mean_zero_fraction": self.mean_zero_fraction,
            "mean_false_zero_fraction": self.mean_false_zero_fraction,
            "aic_frequency": dict(self.aic_frequency),
            "effects": {k: {"true": v.true_value, "mean_estimate": v.mean_estimate,
                            "mean_se": v.mean_se, "empirical_sd": v.empirical_sd,
                            "bias": v.bias, "percent_bias": v.percent_bias, "cp": v.cp}
                        for k, v in self.effects.items()},
            "errors": list(self.errors),
        }

    _COLUMNS = ("effect", "true", "mean_estimate", "mean_se", "empirical_sd", "bias",
                "percent_bias", "cp")

    def _rows(self):
        for name, e in self.effects.items():
            yield (name, e.true_value, e.mean_estimate, e.mean_se, e.empirical_sd, e.bias,
                   e.percent_bias, e.cp)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self._COLUMNS)
        for row in self._rows():
            w.writerow([row[0]] + [f"{v:.6g}" for v in row[1:]])
        return buf.getvalue()

    def to_table(self):
        head = "{:<6}" + " {:>13}" * 7
        lines = [f"scenario {self.scenario} ({self.family}, n={self.n}, reps={self.n_reps}, "
                 f"excluded={self.n_excluded})",
                 f"zeros {100 * self.mean_zero_fraction:.1f}%  false zeros "
                 f"{100 * self.mean_false_zero_fraction:.1f}%",
                 head.format(*self._COLUMNS)]
        for row in self._rows():
            lines.append("{:<6}".format(row[0]) + "".join(f" {v:>13.4f}" for v in row[1:]))
        freq = "  ".join(f"{k} {v:.0%}" for k, v in self.aic_frequency.items())
        lines.append(f"AIC choice: {freq}")
        return "\n".join(lines)


def run_replicate(scenario, rep, config=None):
    config = config or FitConfig(B=scenario.B)
    ds = generate_dataset(scenario, rep)
    sel = select_model(ds, config, families=scenario.families)
    res = sel.chosen_fit
    est = effects_with_inference(res, EffectRequest(scenario.x1, scenario.x2))
    truth = scenario.true_effects()
    steps = tuple(f.min_trace_step() for f in sel.fits.values())
    return ReplicateResult(
        rep=rep, chosen=sel.chosen.label,
        estimates={k: est[k].estimate for k in STUDY_EFFECTS},
        ses={k: est[k].se for k in STUDY_EFFECTS},
        covered={k: bool(est[k].covers(truth[k])) for k in STUDY_EFFECTS},
        zero_fraction=ds.zero_fraction, false_zero_fraction=ds.false_zero_fraction,
        converged=res.converged, min_trace_step=res.min_trace_step(),
        n_fits=len(sel.fits), min_trace_steps=steps)


def summarize(scenario, reps, errors=()):
    truth = scenario.true_effects()
    effects = {}
    for k in STUDY_EFFECTS:
        est = np.array([r.estimates[k] for r in reps])
        se = np.array([r.ses[k] for r in reps])
        cov = np.array([r.covered[k] for r in reps])
        t = truth[k]
        if len(reps):
            mean_est = float(np.mean(est))
            bias = mean_est - t
            effects[k] = EffectSummary(
                true_value=t, mean_estimate=mean_est, mean_se=float(np.nanmean(se)),
                empirical_sd=float(np.std(est, ddof=1)) if len(est) > 1 else 0.0,
                bias=bias, percent_bias=100.0 * bias / t if t != 0 else float("nan"),
                cp=100.0 * float(np.mean(cov)))
        else:
            nan = float("nan")
            effects[k] = EffectSummary(t, nan, nan, nan, nan, nan, nan)
    labels = [f.label for f in (MediatorFamily.ZILON, MediatorFamily.ZINB, MediatorFamily.ZIP)]
    freq = {lab: (sum(r.chosen == lab for r in reps) / len(reps) if reps else 0.0)
            for lab in labels}
    return StudySummary(
        scenario=scenario.name or scenario.target_zero_fraction or scenario.family.label,
        family=scenario.family.label, n=scenario.n, n_reps=scenario.n_reps,
        n_excluded=scenario.n_reps - len(reps), effects=effects, aic_frequency=freq,
        mean_zero_fraction=float(np.mean([r.zero_fraction for r in reps])) if reps else float("nan"),
        mean_false_zero_fraction=(float(np.mean([r.false_zero_fraction for r in reps]))
                                  if reps else float("nan")),
        replicates=tuple(reps), errors=tuple(errors))


def run_study(scenario, config=None, progress=None):
    """Fit every replicate by AIC selection and aggregate the effect metrics."""
    reps, errors = [], []
    for rep in range(scenario.n_reps):
        try:
            reps.append(run_replicate(scenario, rep, config))
        except ZIMediationError as exc:
            logger.warning("replicate %d excluded: %s", rep, exc)
            errors.append(f"replicate {rep}: {exc}")
        if progress is not None:
            progress(rep, reps[-1] if reps and reps[-1].rep == rep else None)
    return summarize(scenario, reps, errors)
