"""Seeded Monte Carlo experiments: replicate paths, finite-horizon score and
information statistics under the regime-correct scaling, matched limit-law
reference samples, and distributional / moment / ergodic tests.

Replicates are partitioned into fixed-size chunks simulated concurrently;
every replicate draws its own counter-based stream from a splittable seed,
so results are bit-identical for any thread count (SDDE_LAN_THREADS caps the
worker pool).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov, ndtr

from . import __version__
from .inference import batch_statistics
from .kernels import Grid, fisher_limit, fisher_theta0
from .limit_laws import sample_lamn_many, sample_lan_many, sample_laq_many, sample_plamn_many
from .measures import SignedMeasure, tail_mass, total_variation
from .simulate import InitialPath, derive_seed, simulate_batch
from .spectrum import RegimeReport, classify

REPLICATE_CHUNK = 128  # fixed partition: thread count never changes results

KNOWN_TESTS = ("ks_delta", "ks_info", "normal_delta", "mean_info", "ergodic")


class HarnessError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    measure: dict
    theta: float
    T: float
    dt: float
    x0: dict = field(default_factory=lambda: {"kind": "zero"})
    n_replicates: int = 1000
    seed: int = 0
    n_limit_draws: int = 2000
    limit_steps: int = 10_000
    regime_hint: str | None = None
    plamn_d: float | None = None
    tests: tuple[str, ...] = ()
    p_threshold: float = 0.001
    mean_info_band: tuple[float, float] = (0.95, 1.05)
    ergodic_rel: float = 0.05

    def __post_init__(self):
        for t in self.tests:
            if t not in KNOWN_TESTS:
                raise HarnessError(f"unknown test {t!r}; known: {KNOWN_TESTS}")
        distributional = {"ks_delta", "ks_info", "normal_delta"} & set(self.tests)
        if distributional and self.n_replicates < 100:
            raise HarnessError("distributional tests need n_replicates >= 100")

    @staticmethod
    def from_dict(d: dict, base_dir: str | None = None) -> "ExperimentConfig":
        d = dict(d)
        measure = d["measure"]
        if isinstance(measure, str):
            path = measure if os.path.isabs(measure) or base_dir is None else os.path.join(base_dir, measure)
            with open(path) as fh:
                measure = json.load(fh)
        return ExperimentConfig(
            measure=measure,
            theta=float(d["theta"]),
            T=float(d["T"]),
            dt=float(d["dt"]),
            x0=d.get("x0", {"kind": "zero"}),
            n_replicates=int(d.get("n_replicates", 1000)),
            seed=int(d.get("seed", 0)),
            n_limit_draws=int(d.get("n_limit_draws", 2000)),
            limit_steps=int(d.get("limit_steps", 10_000)),
            regime_hint=d.get("regime_hint"),
            plamn_d=d.get("plamn_d"),
            tests=tuple(d.get("tests", ())),
            p_threshold=float(d.get("p_threshold", 0.001)),
            mean_info_band=tuple(d.get("mean_info_band", (0.95, 1.05))),
            ergodic_rel=float(d.get("ergodic_rel", 0.05)),
        )

    @staticmethod
    def from_json(path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh), base_dir=os.path.dirname(path))

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "theta": self.theta,
            "T": self.T,
            "dt": self.dt,
            "x0": self.x0,
            "n_replicates": self.n_replicates,
            "seed": self.seed,
            "n_limit_draws": self.n_limit_draws,
            "limit_steps": self.limit_steps,
            "regime_hint": self.regime_hint,
            "plamn_d": self.plamn_d,
            "tests": list(self.tests),
            "p_threshold": self.p_threshold,
            "mean_info_band": list(self.mean_info_band),
            "ergodic_rel": self.ergodic_rel,
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: RegimeReport
    seeds: np.ndarray
    delta: np.ndarray
    info: np.ndarray
    theta_hat: np.ndarray
    mean_Y: np.ndarray
    mean_Y2: np.ndarray
    scaled_Y_T: np.ndarray
    limit_delta: np.ndarray
    limit_info: np.ndarray
    tests: list[dict]
    diagnostics: dict
    version: str
    passed: bool


# ---------------------------------------------------------------------------
# two-sample and one-sample Kolmogorov-Smirnov


def ks_two_sample(x, y) -> tuple[float, float]:
    """Classical two-sample KS statistic with the asymptotic p-value."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise HarnessError("ks_two_sample needs nonempty samples")
    allv = np.concatenate([x, y])
    cdf1 = np.searchsorted(x, allv, side="right") / n1
    cdf2 = np.searchsorted(y, allv, side="right") / n2
    stat = float(np.max(np.abs(cdf1 - cdf2)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    return stat, float(kolmogorov(en * stat))


def ks_vs_standard_normal(x) -> tuple[float, float]:
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    cdf = ndtr(x)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    stat = float(max(np.max(np.abs(cdf - up)), np.max(np.abs(cdf - lo))))
    return stat, float(kolmogorov(math.sqrt(n) * stat))


# ---------------------------------------------------------------------------
# experiment orchestration


def _thread_count() -> int:
    env = os.environ.get("SDDE_LAN_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def limit_information(theta: float, a: SignedMeasure, report: RegimeReport) -> float:
    """Deterministic LAN information constant."""
    if theta == 0.0 and abs(tail_mass(a, a.r)) <= 1e-12 * (1.0 + total_variation(a)):
        return fisher_theta0(a)
    return fisher_limit(theta, a, report)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    a = SignedMeasure.from_dict(config.measure)
    grid = Grid.build(a.r, config.T, config.dt)
    x0 = InitialPath.from_dict(config.x0)
    report = classify(config.theta, a, regime_hint=config.regime_hint)
    if report.regime == "UNCLASSIFIED":
        raise HarnessError(
            "regime UNCLASSIFIED (contributing frequencies share no divisor); "
            "rerun with an explicit regime_hint to force one"
        )
    T = grid.T
    r_val = report.scaling.value(T)

    d_phase = None
    if report.regime == "PLAMN":
        period = report.period
        d_eff = math.fmod(T, period)
        if config.plamn_d is not None:
            want = float(config.plamn_d)
            gap = abs(math.fmod(d_eff - want + 0.5 * period, period) - 0.5 * period)
            if gap > max(grid.dt, 1e-9 * period):
                raise HarnessError(
                    f"T={T:g} is not on the lattice k*period+d for d={want:g} "
                    f"(period {period:g}, T mod period = {d_eff:g})"
                )
            d_phase = want
        else:
            d_phase = d_eff

    n = config.n_replicates
    seeds = np.array([derive_seed(config.seed, i) for i in range(n)], dtype=np.uint64)
    chunks = [(lo, min(lo + REPLICATE_CHUNK, n)) for lo in range(0, n, REPLICATE_CHUNK)]

    def run_chunk(span):
        lo, hi = span
        W, X, Y = simulate_batch(config.theta, a, x0, grid, seeds[lo:hi].tolist())
        delta, info, theta_hat = batch_statistics(
            Y, X, grid.n_delay, grid.dt, config.theta, r_val
        )
        mean_Y = np.sum(Y[:, :-1], axis=1) * grid.dt / T
        mean_Y2 = np.einsum("ij,ij->i", Y[:, :-1], Y[:, :-1]) * grid.dt / T
        scaled_end = Y[:, -1] * r_val
        return delta, info, theta_hat, mean_Y, mean_Y2, scaled_end

    workers = _thread_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(span) for span in chunks]
    delta, info, theta_hat, mean_Y, mean_Y2, scaled_Y_T = (
        np.concatenate([p[i] for p in parts]) for i in range(6)
    )

    rng_limit = np.random.Generator(np.random.Philox(key=derive_seed(config.seed, 0, stream=1)))
    n_lim = config.n_limit_draws
    diagnostics: dict = {
        "regime": report.regime,
        "scaling_value_at_T": r_val,
        "median_mean_Y": float(np.median(mean_Y)),
        "median_mean_Y2": float(np.median(mean_Y2)),
        "median_scaled_Y_T": float(np.median(scaled_Y_T)),
    }
    J_const = None
    if report.regime == "LAN":
        J_const = limit_information(config.theta, a, report)
        diagnostics["J_limit"] = J_const
        limit_delta, limit_info = sample_lan_many(J_const, n_lim, rng_limit)
    elif report.regime == "LAQ":
        limit_delta, limit_info = sample_laq_many(
            config.theta, a, report, n_lim, rng_limit, n_steps=config.limit_steps
        )
    elif report.regime == "LAMN":
        limit_delta, limit_info = sample_lamn_many(config.theta, a, report, x0, n_lim, rng_limit)
    else:  # PLAMN
        diagnostics["plamn_d"] = d_phase
        limit_delta, limit_info = sample_plamn_many(
            config.theta, a, report, x0, d_phase, n_lim, rng_limit
        )

    tests: list[dict] = []
    for name in config.tests:
        if name == "ks_delta":
            stat, p = ks_two_sample(delta, limit_delta)
            tests.append(_test_row(name, stat, p, p > config.p_threshold, config.p_threshold))
        elif name == "ks_info":
            stat, p = ks_two_sample(info, limit_info)
            tests.append(_test_row(name, stat, p, p > config.p_threshold, config.p_threshold))
        elif name == "normal_delta":
            ok = info > 0
            stat, p = ks_vs_standard_normal(delta[ok] / np.sqrt(info[ok]))
            tests.append(_test_row(name, stat, p, p > config.p_threshold, config.p_threshold))
        elif name == "mean_info":
            if J_const is None:
                J_const = limit_information(config.theta, a, report)
            m = float(np.mean(info))
            lo_b, hi_b = config.mean_info_band[0] * J_const, config.mean_info_band[1] * J_const
            tests.append(
                {
                    "name": name,
                    "statistic": m,
                    "band": [lo_b, hi_b],
                    "passed": bool(lo_b <= m <= hi_b),
                }
            )
        elif name == "ergodic":
            if J_const is None:
                J_const = limit_information(config.theta, a, report)
            row = _ergodic_eval(mean_Y, mean_Y2, J_const, config.ergodic_rel)
            row["name"] = name
            tests.append(row)

    passed = all(t["passed"] for t in tests)
    return ExperimentResult(
        config=config,
        report=report,
        seeds=seeds,
        delta=delta,
        info=info,
        theta_hat=theta_hat,
        mean_Y=mean_Y,
        mean_Y2=mean_Y2,
        scaled_Y_T=scaled_Y_T,
        limit_delta=limit_delta,
        limit_info=limit_info,
        tests=tests,
        diagnostics=diagnostics,
        version=__version__,
        passed=passed,
    )


def _test_row(name, stat, p, passed, threshold) -> dict:
    return {
        "name": name,
        "statistic": float(stat),
        "p_value": float(p),
        "threshold": threshold,
        "passed": bool(passed),
    }


def _ergodic_eval(mean_Y, mean_Y2, J: float, rel: float) -> dict:
    med1 = float(np.median(mean_Y))
    med2 = float(np.median(mean_Y2))
    ok1 = abs(med1) <= rel * math.sqrt(J)
    ok2 = abs(med2 - J) <= rel * J
    return {
        "median_mean_Y": med1,
        "median_mean_Y2": med2,
        "J": J,
        "passed": bool(ok1 and ok2),
    }


def ergodic_check(config: ExperimentConfig) -> dict:
    """Time-average diagnostics of the delay functional across replicates
    (subcritical regime): medians of (1/T) int Y dt and (1/T) int Y^2 dt with
    pass thresholds relative to the limiting information."""
    cfg = ExperimentConfig.from_dict({**config.to_dict(), "tests": ["ergodic"]})
    result = run_experiment(cfg)
    row = next(t for t in result.tests if t["name"] == "ergodic")
    return row


# ---------------------------------------------------------------------------
# persistence


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if not math.isfinite(xf):
        return "null"
    return format(xf, ".17g")


def dump_json(obj, fh, indent=0) -> None:
    """JSON writer with floats at 17 significant digits (non-finite -> null)."""
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            fh.write("{}")
            return
        fh.write("{\n")
        for i, (k, v) in enumerate(obj.items()):
            fh.write(pad + "  " + json.dumps(str(k)) + ": ")
            dump_json(v, fh, indent + 2)
            fh.write(",\n" if i < len(obj) - 1 else "\n")
        fh.write(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            fh.write("[]")
            return
        simple = all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq)
        if simple:
            fh.write("[" + ", ".join(_fmt(v) for v in seq) + "]")
        else:
            fh.write("[\n")
            for i, v in enumerate(seq):
                fh.write(pad + "  ")
                dump_json(v, fh, indent + 2)
                fh.write(",\n" if i < len(seq) - 1 else "\n")
            fh.write(pad + "]")
    elif isinstance(obj, str):
        fh.write(json.dumps(obj))
    elif isinstance(obj, (bool, np.bool_)) or obj is None:
        fh.write(_fmt(obj) if not isinstance(obj, (bool, np.bool_)) else ("true" if obj else "false"))
    else:
        fh.write(_fmt(obj))


def write_samples_csv(result: ExperimentResult, fh) -> None:
    fh.write("replicate,seed,delta,info,theta_hat\n")
    for i in range(result.delta.size):
        fh.write(
            f"{i},{int(result.seeds[i])},{result.delta[i]:.17g},"
            f"{result.info[i]:.17g},{result.theta_hat[i]:.17g}\n"
        )


def result_to_dict(result: ExperimentResult) -> dict:
    return {
        "version": result.version,
        "passed": result.passed,
        "config": result.config.to_dict(),
        "regime_report": result.report.to_dict(),
        "tests": result.tests,
        "diagnostics": result.diagnostics,
        "replicates": {
            "seed": [int(s) for s in result.seeds],
            "delta": result.delta,
            "info": result.info,
            "theta_hat": result.theta_hat,
            "mean_Y": result.mean_Y,
            "mean_Y2": result.mean_Y2,
            "scaled_Y_T": result.scaled_Y_T,
        },
        "limit_samples": {"delta": result.limit_delta, "info": result.limit_info},
    }


def write_result_json(result: ExperimentResult, fh) -> None:
    dump_json(result_to_dict(result), fh)
    fh.write("\n")
