"""Experiment runner: validated YAML configs in, CSV artifacts and a hashed manifest out."""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .entropy import Partition, entropy_formula_gap, random_entropy
from .exceptions import ConfigError
from .flows import (SDE_FACTORIES, SINKS, NoisePath, em_integrate, ensemble_endpoints,
                    flow_cocycle_residual, make_sde, zero_noise_flow_study)
from .io import canonical_json, sha256_file, write_csv, write_trajectory
from .kernels import KERNEL_VARIANTS, make_kernel
from .lyapunov import derivative_cocycle, qr_lyapunov, random_met
from .measures import (BinnedMeasure, build_ulam, stationarity_residual, stationary_vector,
                       zero_noise_study)
from .skew import NoiseSequence, SkewSystem, cocycle_check, stream_rng
from .state_space import MAP_FACTORIES, StateSpace

log = logging.getLogger(__name__)

ANALYSES = ("stationary", "zero_noise", "lyapunov", "entropy", "entropy_gap", "cocycle_check",
            "trajectory")
MAP_ANALYSES = ANALYSES
SDE_ANALYSES = ("stationary", "zero_noise", "cocycle_check", "trajectory")
TOP_KEYS = {"seed", "output", "system", "kernel", "analyses", "eps_schedule", "candidate",
            "resolution"}
RESOLUTION_DEFAULTS = {
    "bins": 2000,
    "n": 10_000,
    "ensemble": 100,
    "samples": 100_000,
    "n_max": 14,
    "reorth_period": 1,
    "trajectory_steps": 1000,
    "burn_in": 200,
    "law_bounds": [-2.0, 2.0],
}

# named systems used by list-systems and by the "every builtin" checks
BUILTIN_SYSTEMS = {
    "doubling_additive": dict(variant="additive", map="circle_doubling", eps=0.05),
    "expanding3_additive": dict(variant="additive", map="circle_expanding", params={"b": 3},
                                eps=0.05),
    "rotation_additive": dict(variant="additive", map="rotation", eps=0.05),
    "identity_additive": dict(variant="additive", map="circle_identity", eps=0.05),
    "cat_additive": dict(variant="additive", map="cat_map", eps=0.01),
    "interval_contraction_additive": dict(variant="additive", map="interval_contraction", eps=0.2),
    "planar_contraction_additive": dict(variant="additive", map="planar_contraction", eps=0.2),
    "doubling_random_jump": dict(variant="random_jump", map="circle_doubling", eps=0.1),
    "doubling_parametric": dict(variant="parametric", map="circle_doubling", eps=0.05),
    "trap": dict(variant="degenerate_trap", eps=0.01),
    "doubling_delta": dict(variant="delta", map="circle_doubling"),
    "rotation_delta": dict(variant="delta", map="rotation"),
}


def builtin_kernel(name):
    spec = BUILTIN_SYSTEMS[name]
    return make_kernel(spec["variant"], spec.get("map"), spec.get("params"), spec.get("eps"))


@dataclass
class ExperimentConfig:
    seed: int
    output: str
    system: dict
    kernel: dict
    analyses: list
    eps_schedule: list
    candidate: object
    resolution: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def is_sde(self):
        return "sde" in self.system

    @property
    def config_hash(self):
        return hashlib.sha256(canonical_json(self.echo()).encode()).hexdigest()

    def echo(self):
        return {"seed": self.seed, "system": self.system, "kernel": self.kernel,
                "analyses": self.analyses, "eps_schedule": self.eps_schedule,
                "candidate": self.candidate, "resolution": self.resolution}

    def build_kernel(self, eps=None):
        k = self.kernel
        eps = k.get("eps") if eps is None else eps
        return make_kernel(k["variant"], self.system.get("map"), self.system.get("params"), eps,
                           **k.get("options", {}))

    def build_sde(self, eps=None):
        params = dict(self.system.get("params", {}))
        if eps is not None:
            params["eps"] = eps
        return make_sde(self.system["sde"], **params)


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def parse_config(data, seed=None, output=None):
    """Validate a config mapping; every error surfaces before any computation."""
    _require(isinstance(data, dict), "config must be a mapping")
    unknown = set(data) - TOP_KEYS
    _require(not unknown, f"unknown config keys {sorted(unknown)}; allowed: {sorted(TOP_KEYS)}")
    seed = data.get("seed") if seed is None else seed
    _require(seed is not None, "config needs an explicit seed")
    _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
             f"seed must be a non-negative integer, got {seed!r}")
    output = output or data.get("output") or "rdslab_out"

    system = data.get("system")
    _require(isinstance(system, dict), "config needs a 'system' mapping")
    _require(("map" in system) != ("sde" in system), "system must name exactly one of 'map' or 'sde'")
    extra = set(system) - {"map", "sde", "params"}
    _require(not extra, f"unknown system keys {sorted(extra)}")
    system = {k: v for k, v in system.items()}
    system["params"] = dict(system.get("params") or {})
    if "map" in system:
        _require(system["map"] in MAP_FACTORIES,
                 f"unknown map {system['map']!r}; choose from {sorted(MAP_FACTORIES)}")
    else:
        _require(system["sde"] in SDE_FACTORIES,
                 f"unknown SDE {system['sde']!r}; choose from {sorted(SDE_FACTORIES)}")

    kernel = dict(data.get("kernel") or {})
    if "map" in system:
        _require("variant" in kernel, "map systems need kernel.variant")
        _require(kernel["variant"] in KERNEL_VARIANTS,
                 f"unknown kernel variant {kernel['variant']!r}; choose from {list(KERNEL_VARIANTS)}")
        extra = set(kernel) - {"variant", "eps", "options"}
        _require(not extra, f"unknown kernel keys {sorted(extra)}")
    else:
        _require(not kernel, "SDE systems take their noise level from system.params.eps")

    analyses = data.get("analyses")
    _require(isinstance(analyses, list) and analyses, "config needs a non-empty 'analyses' list")
    allowed = SDE_ANALYSES if "sde" in system else MAP_ANALYSES
    for a in analyses:
        _require(a in ANALYSES, f"unknown analysis {a!r}; choose from {list(ANALYSES)}")
        _require(a in allowed, f"analysis {a!r} is not available for this system type")
    _require(len(set(analyses)) == len(analyses), "analyses must not repeat")

    schedule = [float(e) for e in data.get("eps_schedule") or []]
    if "zero_noise" in analyses:
        _require(len(schedule) >= 2, "zero_noise needs an eps_schedule with at least two values")
        _require(all(b < a for a, b in zip(schedule, schedule[1:])),
                 "eps_schedule must be strictly decreasing")

    resolution = dict(RESOLUTION_DEFAULTS)
    res = data.get("resolution") or {}
    extra = set(res) - set(RESOLUTION_DEFAULTS)
    _require(not extra, f"unknown resolution keys {sorted(extra)}")
    resolution.update(res)
    for key in ("bins", "n", "ensemble", "samples", "n_max", "reorth_period", "trajectory_steps"):
        v = resolution[key]
        _require(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
                 f"resolution.{key} must be a positive integer")

    candidate = data.get("candidate", "dirac" if "sde" not in system else "sink")
    cfg = ExperimentConfig(seed, str(output), system, kernel, list(analyses), schedule, candidate,
                           resolution, data)
    # build everything once so bad parameters fail now
    try:
        if cfg.is_sde:
            cfg.build_sde()
            for eps in schedule:
                cfg.build_sde(eps)
        else:
            needs_eps = kernel["variant"] != "delta"
            if needs_eps and not set(analyses) <= {"zero_noise"}:
                _require("eps" in kernel, "kernel.eps is required")
            if set(analyses) - {"zero_noise"}:
                k = cfg.build_kernel()
                if k.space.dim != 1:
                    for a in ("stationary", "zero_noise"):
                        _require(a not in analyses, f"{a} needs a one-dimensional state space")
            for eps in schedule:
                cfg.build_kernel(eps)
            if "zero_noise" in analyses:
                _require(candidate in ("dirac", "lebesgue"),
                         "candidate must be 'dirac' or 'lebesgue' for map systems")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, seed=None, output=None):
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data, seed, output)


def stationary_sampler(kernel, n_bins=2000, samples=100_000, burn_in=200):
    """Sampler ``rng, m -> points`` of (approximately) stationary start points.

    One-dimensional kernels draw from the Ulam stationary vector; others run
    ``burn_in`` independent kernel steps from uniform points.
    """
    if kernel.space.dim == 1:
        mu = stationary_vector(build_ulam(kernel, n_bins))
        return lambda rng, m=None: mu.sample(rng, m or samples)

    def sampler(rng, m=None):
        m = m or samples
        x = kernel.space.sample_uniform(rng, m)
        for _ in range(burn_in):
            x = kernel.apply(kernel.draw_symbols(rng, m), x)
        return x

    return sampler


@dataclass
class RunResult:
    manifest_path: Path
    manifest: dict

    @property
    def ok(self):
        return all(s == "ok" for s in self.manifest["analyses"].values())


class _Run:
    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg.output)
        self.res = cfg.resolution
        self.meta = {"config_hash": cfg.config_hash, "rdslab": __version__,
                     "numpy": np.__version__, "scipy": scipy.__version__, "seed": cfg.seed}
        self.files = []

    def csv(self, name, analysis, columns, rows):
        path = write_csv(self.out / name, columns, rows, {**self.meta, "analysis": analysis})
        self.files.append((name, analysis))
        return path

    def start_sampler(self, kernel):
        return stationary_sampler(kernel, self.res["bins"], self.res["samples"],
                                  self.res["burn_in"])

    # ---- map analyses
    def stationary(self):
        cfg = self.cfg
        if cfg.is_sde:
            return self._sde_law()
        kernel = cfg.build_kernel()
        op = build_ulam(kernel, self.res["bins"])
        mu = stationary_vector(op)
        residual = stationarity_residual(kernel, mu)
        self.csv("stationary_measure.csv", "stationary", ["bin_center", "weight"],
                 zip(mu.centers, mu.weights))
        self.csv("stationary_summary.csv", "stationary", ["quantity", "value"],
                 [("residual", residual), ("bins", mu.n_bins), ("mode", op.notes["mode"])])

    def zero_noise(self):
        cfg = self.cfg
        if cfg.is_sde:
            study = zero_noise_flow_study(cfg.build_sde(), cfg.eps_schedule,
                                          n_paths=self.res["ensemble"], seed=cfg.seed)
            self.csv("zero_noise.csv", "zero_noise", ["eps", "w1", "n_diverged"],
                     [(r.eps, r.w1, r.n_diverged) for r in study.rows])
            self.csv("zero_noise_summary.csv", "zero_noise", ["quantity", "value"],
                     [("decreasing", study.decreasing)])
            return
        space = cfg.build_kernel(cfg.eps_schedule[0]).space
        n = self.res["bins"]
        if cfg.candidate == "lebesgue":
            cand = BinnedMeasure.lebesgue(space, n)
        else:
            cand = BinnedMeasure.dirac(space, n, 0.0)
        table = zero_noise_study(cfg.build_kernel, cfg.eps_schedule, cand,
                                 candidate_name=cfg.candidate)
        self.csv("zero_noise.csv", "zero_noise", ["eps", "w1", "mass_in_window"],
                 [(r.eps, r.w1, r.mass_in_window) for r in table.rows])
        self.csv("zero_noise_summary.csv", "zero_noise", ["quantity", "value"],
                 [("monotone", table.monotone), ("candidate", cfg.candidate)])

    def lyapunov(self):
        kernel = self.cfg.build_kernel()
        seed, res = self.cfg.seed, self.res
        xs = kernel.space.sample_uniform(stream_rng(seed, 2_000_003), res["ensemble"])
        report = random_met(kernel, xs, seed, res["n"], reorth_period=res["reorth_period"])
        k = report.spectra.shape[1]
        self.csv("lyapunov_spectra.csv", "lyapunov",
                 ["realization"] + [f"lambda{i + 1}" for i in range(k)] + ["n"],
                 ([i, *row, res["n"]] for i, row in enumerate(report.spectra)))
        self.csv("lyapunov_invariance.csv", "lyapunov", ["t", "gap"], sorted(report.gaps.items()))
        X = derivative_cocycle(kernel, xs[0], NoiseSequence(kernel, seed, 0), res["n"])
        every = max(1, res["n"] // 100)
        period = res["reorth_period"]
        every = max(period, (every // period) * period)
        spec = qr_lyapunov(X, period, trace_every=every)
        self.csv("lyapunov_trace.csv", "lyapunov",
                 ["n"] + [f"lambda{i + 1}" for i in range(k)],
                 ([m, *row] for m, row in spec.trace))

    def entropy(self):
        kernel = self.cfg.build_kernel()
        xi = Partition.dyadic(kernel.space, 1, axes=(0,))
        est = random_entropy(kernel, xi, self.start_sampler(kernel), self.res["n_max"],
                             seed=self.cfg.seed)
        self.csv("entropy_curve.csv", "entropy", ["n", "Hn_over_n", "stderr"],
                 ((n, r, s) for (n, r), s in zip(est.per_n_curve, est.stderr)))

    def entropy_gap(self):
        kernel = self.cfg.build_kernel()
        sampler = self.start_sampler(kernel)
        gap = entropy_formula_gap(kernel, sampler, n_max=max(self.res["n_max"], 200),
                                  seed=self.cfg.seed, lyapunov_n=self.res["n"])
        name = self.cfg.system["map"]
        self.csv("entropy_gap.csv", "entropy_gap",
                 ["system", "h", "lambda_plus", "gap", "partition"],
                 [(name, gap.h, gap.lambda_plus, gap.gap, gap.partition)])

    def cocycle_check(self):
        cfg, seed = self.cfg, self.cfg.seed
        pairs = [(0, 5), (3, 4), (16, 16), (100, 37)]
        rows = []
        if cfg.is_sde:
            sys = cfg.build_sde()
            path = NoisePath(seed, sys.dt, sys.noise_dim)
            x0 = np.full(sys.dim, 0.5)
            for s, t in pairs:
                rows.append((s, t, flow_cocycle_residual(sys, path, s, t, x0)))
        else:
            kernel = cfg.build_kernel()
            system = SkewSystem(kernel)
            x = kernel.space.sample_uniform(stream_rng(seed, 3_000_017))
            for s, t in pairs:
                rows.append((s, t, cocycle_check(system, system.noise(seed), s, t, x)))
        self.csv("cocycle_check.csv", "cocycle_check", ["s", "t", "residual"], rows)

    def trajectory(self):
        cfg, steps = self.cfg, self.res["trajectory_steps"]
        if cfg.is_sde:
            sys = cfg.build_sde()
            path = NoisePath(cfg.seed, sys.dt, sys.noise_dim)
            n = min(steps, sys.steps)
            traj = em_integrate(sys, np.full(sys.dim, 0.5), path, n)
            write_trajectory(self.out / "trajectory.csv", traj.states,
                             {**self.meta, "analysis": "trajectory"}, "t", traj.times)
        else:
            kernel = cfg.build_kernel()
            system = SkewSystem(kernel)
            x = kernel.space.sample_uniform(stream_rng(cfg.seed, 3_000_017))
            orbit = system.orbit(x, system.noise(cfg.seed), steps)
            write_trajectory(self.out / "trajectory.csv", orbit,
                             {**self.meta, "analysis": "trajectory"})
        self.files.append(("trajectory.csv", "trajectory"))

    def _sde_law(self):
        sys = self.cfg.build_sde()
        if sys.dim != 1:
            raise ValueError("binned laws are written for one-dimensional SDEs only")
        points, _ = SINKS.get(sys.name, ([0.0], None))
        X, diverged = ensemble_endpoints(sys, points[0], self.res["ensemble"], self.cfg.seed)
        lo, hi = self.res["law_bounds"]
        mu = BinnedMeasure.from_samples(StateSpace.interval(lo, hi), X[:, 0], self.res["bins"])
        self.csv("stationary_measure.csv", "stationary", ["bin_center", "weight"],
                 zip(mu.centers, mu.weights))
        self.csv("stationary_summary.csv", "stationary", ["quantity", "value"],
                 [("paths", self.res["ensemble"]), ("diverged", int(np.sum(diverged))),
                  ("variance", float(np.var(X)))])


def run(cfg):
    """Run every requested analysis; failures are recorded per analysis, the manifest is written last."""
    r = _Run(cfg)
    r.out.mkdir(parents=True, exist_ok=True)
    statuses = {}
    for name in cfg.analyses:
        try:
            getattr(r, name)()
            statuses[name] = "ok"
        except Exception as exc:  # recorded, siblings keep running
            log.exception("analysis %s failed", name)
            statuses[name] = f"error: {type(exc).__name__}: {exc}"
    files = [{"path": name, "analysis": analysis, "sha256": sha256_file(r.out / name)}
             for name, analysis in r.files]
    manifest = {"config": cfg.echo(), "config_hash": cfg.config_hash,
                "versions": {k: r.meta[k] for k in ("rdslab", "numpy", "scipy")},
                "analyses": statuses, "files": files}
    path = r.out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return RunResult(path, manifest)
