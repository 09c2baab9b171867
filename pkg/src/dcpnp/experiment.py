"""Experiment configuration, measurement simulation, and the benchmark runner.

A config fully determines a grid of (task, variant, seed) rows. Each row
simulates measurements from a phantom, runs the solver, scores the
reconstruction, and writes its artifacts into its own directory. Rows are
independent and may execute in a worker pool; aggregation happens after all
rows finish, in a fixed order, so outputs are byte-reproducible for a given
config (wall-clock timings are segregated into runlog.csv, which carries no
reproducibility guarantee).
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fidelity import CgConfig
from .grid_core import save_grid, save_pgm
from .metrics import psnr, ssim
from .operators import (
    FourierMaskOperator,
    LinearOperator,
    RadonOperator,
    make_cartesian_mask,
    make_limited_angle_geometry,
    make_sparse_view_geometry,
)
from .phantoms import PhantomSpec, make_phantom, mri_phantom
from .priors import Denoiser, GaussianPriorDenoiser, NoiseSchedule, TvProxDenoiser, make_denoiser
from .solver import VariantSpec, run
from .spectral import ShConfig, SmoothingKernel

TASKS = ("svct", "lact", "mri")


@dataclass(frozen=True)
class ExperimentConfig:
    """Benchmark configuration; defaults reproduce the reference geometry
    (20 uniform views for svct, 90 views over [0, 90] for lact, equidistant
    Cartesian AF-6 masking for mri; 363 detector bins at 256px; 50 outer
    steps)."""

    # experiment
    task: str = "svct"
    phantom: str = "shepp-logan"
    image_side: int = 256
    measurement_noise_std: float = 0.0
    variants: tuple[str, ...] = ("dual=on,inject=sh",)
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"
    workers: int = 1
    psnr_peak: float = 2.0
    # ct geometry
    n_views: int = 20
    max_angle: float = 90.0
    detector_bins: int = 0  # 0 -> derived default (363 up to 256px)
    detector_pitch: float = 1.0
    # mri geometry
    af: int = 6
    center_lines: int = 16
    # schedule
    steps: int = 50
    sigma_max: float = 1.0
    sigma_min: float = 0.01
    spacing: str = "geometric"
    # denoiser
    denoiser: str = "tv-prox"
    tv_weight: float = 1.0
    tv_iters: int = 50
    gaussian_tau: float = 1.0
    # data-consistency solve
    cg_iters: int = 20
    cg_tol: float = 1e-10
    lam0: float = 1e-05
    # spectral homogenization
    sh_window: int = 7
    sh_eps: float = 0.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for label in self.variants:
            VariantSpec.from_label(label)

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.sigma_max, self.sigma_min, self.steps, self.spacing)

    def cg_config(self) -> CgConfig:
        return CgConfig(self.cg_iters, self.cg_tol, self.lam0)

    def sh_config(self) -> ShConfig:
        return ShConfig(SmoothingKernel(self.sh_window), self.sh_eps)

    def make_denoiser(self) -> Denoiser:
        if self.denoiser == "tv-prox":
            return TvProxDenoiser(self.tv_weight, self.tv_iters)
        if self.denoiser == "gaussian-prior":
            zero = np.zeros((self.image_side, self.image_side))
            return GaussianPriorDenoiser(zero, self.gaussian_tau)
        return make_denoiser(self.denoiser)


# task-specific overrides applied on top of the dataclass defaults
_TASK_DEFAULTS = {
    "svct": {"n_views": 20, "cg_iters": 20},
    "lact": {"n_views": 90, "max_angle": 90.0, "cg_iters": 100},
    "mri": {"image_side": 320, "cg_iters": 20},
}


def default_config(task: str = "svct", **overrides) -> ExperimentConfig:
    params = dict(_TASK_DEFAULTS.get(task, {}))
    params.update(overrides)
    return ExperimentConfig(task=task, **params)


# --- config file parsing ------------------------------------------------------

_FIELD_TYPES = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    f = _FIELD_TYPES[name]
    raw = raw.strip()
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if name in ("variants",):
        return tuple(part.strip() for part in raw.split(";") if part.strip())
    if name in ("seeds",):
        return tuple(int(part) for part in raw.replace(",", " ").split())
    return raw


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse a sectioned key-value config file; unknown keys are errors.

    Sections are organizational only; keys are globally unique and map to
    ExperimentConfig fields. `variants` is a ;-separated list of labels,
    `seeds` a list of integers.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path) as fh:
        parser.read_file(fh)
    params: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _FIELD_TYPES:
                raise ValueError(f"unknown config key {key!r} in section [{section}]")
            if key in params:
                raise ValueError(f"duplicate config key {key!r}")
            params[key] = _parse_value(key, raw)
    file_task = params.pop("task", None)
    task = overrides.pop("task", None) or file_task or "svct"
    merged = dict(params)
    merged.update(overrides)
    return default_config(task, **merged)


_SECTIONS = {
    "experiment": ("task", "phantom", "image_side", "measurement_noise_std",
                   "variants", "seeds", "out_dir", "workers", "psnr_peak"),
    "geometry": ("n_views", "max_angle", "detector_bins", "detector_pitch",
                 "af", "center_lines"),
    "schedule": ("steps", "sigma_max", "sigma_min", "spacing"),
    "denoiser": ("denoiser", "tv_weight", "tv_iters", "gaussian_tau"),
    "fidelity": ("cg_iters", "cg_tol", "lam0"),
    "spectral": ("sh_window", "sh_eps"),
}


def write_config(path, cfg: ExperimentConfig) -> None:
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            if key == "variants":
                value = "; ".join(value)
            elif key == "seeds":
                value = " ".join(str(s) for s in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


# --- measurement simulation ---------------------------------------------------


def _rng_for(seed: int, role: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, role])))


def build_operator(cfg: ExperimentConfig) -> LinearOperator:
    bins = cfg.detector_bins if cfg.detector_bins > 0 else None
    if cfg.task == "svct":
        geo = make_sparse_view_geometry(cfg.n_views, cfg.image_side, bins, cfg.detector_pitch)
        return RadonOperator(geo)
    if cfg.task == "lact":
        geo = make_limited_angle_geometry(cfg.n_views, cfg.max_angle, cfg.image_side, bins, cfg.detector_pitch)
        return RadonOperator(geo)
    mask = make_cartesian_mask(cfg.image_side, cfg.image_side, cfg.af, cfg.center_lines)
    return FourierMaskOperator(mask)


def build_phantom(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    if cfg.task == "mri":
        return mri_phantom(cfg.image_side)
    spec = PhantomSpec(kind=cfg.phantom, side=cfg.image_side)
    return make_phantom(spec, _rng_for(seed, 1))


def simulate_measurements(op: LinearOperator, truth: np.ndarray, cfg: ExperimentConfig,
                          seed: int) -> np.ndarray:
    y = op.apply(truth)
    if cfg.measurement_noise_std > 0:
        noise_rng = _rng_for(seed, 2)
        noise = noise_rng.standard_normal(y.shape)
        if np.iscomplexobj(y):
            noise = noise + 1j * noise_rng.standard_normal(y.shape)
        y = y + cfg.measurement_noise_std * noise
    return y


# --- the row runner -----------------------------------------------------------


@dataclass
class MetricRow:
    task: str
    variant: str
    seed: int
    psnr: float
    ssim: float
    data_residual: float
    wall_time: float
    status: str = "ok"


_METRIC_COLUMNS = ("task", "variant", "seed", "psnr", "ssim", "data_residual", "status")
_RUNLOG_COLUMNS = ("task", "variant", "seed", "status", "wall_time")

_OPERATOR_CACHE: dict = {}


def _cached_operator(cfg: ExperimentConfig) -> LinearOperator:
    key = (cfg.task, cfg.image_side, cfg.n_views, cfg.max_angle, cfg.detector_bins,
           cfg.detector_pitch, cfg.af, cfg.center_lines)
    if key not in _OPERATOR_CACHE:
        _OPERATOR_CACHE.clear()  # keep at most one matrix resident
        _OPERATOR_CACHE[key] = build_operator(cfg)
    return _OPERATOR_CACHE[key]


def _variant_dirname(label: str) -> str:
    return label.replace("=", "-").replace(",", "_")


def run_row(cfg: ExperimentConfig, variant_label: str, seed: int,
            write_outputs: bool = True) -> MetricRow:
    start = time.perf_counter()
    try:
        op = _cached_operator(cfg)
        truth = build_phantom(cfg, seed)
        y = simulate_measurements(op, truth, cfg, seed)
        variant = VariantSpec.from_label(variant_label)
        recon, trace = run(
            op, y, cfg.make_denoiser(), cfg.schedule(), variant,
            cfg.cg_config(), cfg.sh_config(), _rng_for(seed, 0),
            ground_truth=truth, psnr_peak=cfg.psnr_peak,
        )
        row = MetricRow(
            task=cfg.task,
            variant=variant_label,
            seed=seed,
            psnr=psnr(recon, truth, cfg.psnr_peak),
            ssim=ssim(recon, truth, data_range=cfg.psnr_peak),
            data_residual=float(np.linalg.norm(op.apply(recon) - y)),
            wall_time=time.perf_counter() - start,
        )
        if write_outputs:
            run_dir = Path(cfg.out_dir) / f"{cfg.task}_{_variant_dirname(variant_label)}_seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            save_grid(run_dir / "recon.dcpg", recon)
            save_pgm(run_dir / "recon.pgm", recon, window=(-1.0, 1.0))
            trace.write_csv(run_dir / "trace.csv")
            trace.write_spectral_csv(run_dir / "spectral.csv")
            write_config(run_dir / "config.resolved", cfg)
        return row
    except Exception as exc:  # keep the remaining rows running
        return MetricRow(cfg.task, variant_label, seed, float("nan"), float("nan"),
                         float("nan"), time.perf_counter() - start,
                         status=f"error: {type(exc).__name__}: {exc}")


def _row_worker(args) -> MetricRow:
    cfg, label, seed, write_outputs = args
    return run_row(cfg, label, seed, write_outputs)


def run_experiment(cfg: ExperimentConfig, write_outputs: bool = True) -> list[MetricRow]:
    """Execute the full (variant x seed) grid and write summary CSVs."""
    jobs = [(cfg, label, seed, write_outputs)
            for label in cfg.variants for seed in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_row_worker, jobs))
    else:
        rows = [_row_worker(job) for job in jobs]
    if write_outputs:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", rows)
        _write_runlog(out / "runlog.csv", rows)
        write_config(out / "config.resolved", cfg)
    return rows


def write_metrics_csv(path, rows: list[MetricRow]) -> None:
    """Deterministic metric table: no timing columns, repr'd floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_METRIC_COLUMNS)
        for row in rows:
            writer.writerow([
                row.task, row.variant, str(row.seed),
                repr(row.psnr), repr(row.ssim), repr(row.data_residual), row.status,
            ])


def _write_runlog(path, rows: list[MetricRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RUNLOG_COLUMNS)
        for row in rows:
            writer.writerow([row.task, row.variant, str(row.seed), row.status,
                             f"{row.wall_time:.3f}"])


ABLATION_VARIANTS = (
    "dual=off,inject=none",  # memoryless baseline
    "dual=off,inject=sh",
    "dual=on,inject=none",
    "dual=on,inject=sh",     # full method
)


def ablate(cfg: ExperimentConfig, write_outputs: bool = True) -> list[MetricRow]:
    """Run the 2x2 coupling/injection grid used for the component ablation."""
    cfg = dataclasses.replace(cfg, variants=ABLATION_VARIANTS)
    return run_experiment(cfg, write_outputs)


def sweep_nfe(cfg: ExperimentConfig, step_counts=(10, 20, 30, 50, 100),
              variants=("dual=off,inject=none", "dual=on,inject=sh"),
              write_outputs: bool = True):
    """Compute-budget sweep: rerun each variant at several outer-step counts.

    Returns {(variant, steps): mean PSNR over seeds} and writes nfe.csv.
    """
    results = {}
    rows_all = []
    for steps in step_counts:
        sub = dataclasses.replace(cfg, steps=steps, variants=tuple(variants))
        rows = run_experiment(sub, write_outputs=False)
        rows_all.extend((steps, row) for row in rows)
        for label in variants:
            vals = [r.psnr for s, r in rows_all
                    if s == steps and r.variant == label and r.status == "ok"]
            results[(label, steps)] = float(np.mean(vals)) if vals else float("nan")
    if write_outputs:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "nfe.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("steps", "variant", "seed", "psnr"))
            for steps, row in rows_all:
                writer.writerow([str(steps), row.variant, str(row.seed), repr(row.psnr)])
    return results
