"""Experiment orchestration: method x gamma campaigns over an image set.

run_experiment attacks every image with every requested (method, gamma)
pair, aggregates per-cell averages, and reports each cell's percent change
against the same method's gamma=1.0 baseline. Output is two CSVs (a
per-image detail file and the aggregate report) plus optional PGM/PPM dumps
of adversarial images and noise heat maps.

Aggregation rules: ASR and average iterations run over all attempts
(failed iterative attacks count their full iteration budget); the
imperceptibility averages (MPV, PSNR, SSIM, DR) run over successful
attacks only, since noise that never fooled the model is not an
adversarial example. The single-step method reports no iteration average.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .attacks import METHODS, AttackConfig, AttackOutcome, run_attack
from .errors import LocnoiseError, UndefinedChangeError
from .masks import Mask, build_mask
from .metrics import AggregateRow, MetricSet, metric_set, relative_change
from .net import Network, load_weights, seeded_random_network
from .pnm import to_uint8, write_pgm, write_ppm
from .tensor import Tensor, read_ltns

log = logging.getLogger(__name__)

# architecture used when the model source is "random:SEED"
RANDOM_MODEL_SHAPE = (32, 32, 3)
RANDOM_MODEL_CLASSES = 9

REPORT_HEADER = [
    "method", "gamma", "asr",
    "avg_mpv", "avg_psnr_db", "avg_ssim", "avg_dr", "avg_iters",
    "mpv_change_pct", "psnr_change_pct", "ssim_change_pct",
    "dr_change_pct", "iters_change_pct",
]

DETAIL_HEADER = [
    "method", "gamma", "image", "success", "iterations",
    "mpv", "psnr_db", "ssim", "dr",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one campaign needs, seeds included, so runs are repeatable.

    model:  weight-file path or "random:SEED" for the built-in seeded
            random classifier (32x32x3, 9 classes).
    images: directory of .png / .ltns files or "synthetic:SEED:COUNT".
    overrides: per-method AttackConfig keyword overrides.
    seed:   when set, PGD starts from seeded uniform(-eps, eps) noise
            instead of zero.
    """

    model: str
    images: str
    methods: tuple[str, ...] = METHODS
    gammas: tuple[float, ...] = (1.0, 0.75, 0.5, 0.25)
    overrides: dict = field(default_factory=dict)
    out_dir: str = "out"
    workers: int = 1
    dump_images: bool = False
    dump_failures: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.methods:
            raise ValueError("at least one attack method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}, expected one of {METHODS}")
        if not self.gammas:
            raise ValueError("at least one gamma is required")
        for g in self.gammas:
            if not 0.0 < g <= 1.0:
                raise ValueError(f"gamma must be in (0, 1], got {g}")
        if 1.0 not in self.gammas:
            raise ValueError("gammas must include the 1.0 baseline for change reporting")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class ReportRow(AggregateRow):
    """AggregateRow plus the raw per-cell averages behind the changes."""

    avg_mpv: Optional[float] = None
    avg_psnr_db: Optional[float] = None
    avg_ssim: Optional[float] = None
    avg_dr: Optional[float] = None
    avg_iters: Optional[float] = None


@dataclass(frozen=True)
class AttackRecord:
    """One (method, gamma, image) task result kept for metrics and dumps."""

    method: str
    gamma: float
    image_index: int
    image_name: str
    clean: Tensor
    mask: Mask
    outcome: AttackOutcome
    metrics: MetricSet


# ---------------------------------------------------------------------------
# inputs

def load_model(source: str) -> Network:
    if source.startswith("random:"):
        seed = int(source.split(":", 1)[1])
        return seeded_random_network(RANDOM_MODEL_SHAPE, RANDOM_MODEL_CLASSES, seed)
    return load_weights(source)


def _box_blur3(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w, _ = img.shape
    acc = np.zeros_like(img)
    for dh in range(3):
        for dw in range(3):
            acc += padded[dh : dh + h, dw : dw + w]
    return acc / 9.0


def synthetic_images(shape: tuple[int, int, int], seed: int, count: int) -> list[Tensor]:
    """Seeded uniform noise smoothed by one 3x3 box blur; values stay in [0, 1]."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return [
        Tensor(_box_blur3(rng.random(shape)).astype(np.float32), copy=False)
        for _ in range(count)
    ]


def _load_image_file(path: Path) -> Tensor:
    if path.suffix.lower() == ".ltns":
        return read_ltns(path)
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Tensor(arr, copy=False)


def resolve_images(source: str, input_shape: tuple[int, int, int]) -> list[tuple[str, Tensor]]:
    """Return (name, image) pairs matching the network's input shape.

    Unreadable or mismatched files are skipped with a warning; zero usable
    images is fatal.
    """
    if source.startswith("synthetic:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected synthetic:SEED:COUNT, got {source!r}")
        seed, count = int(parts[1]), int(parts[2])
        return [
            (f"synthetic{idx:04d}", img)
            for idx, img in enumerate(synthetic_images(input_shape, seed, count))
        ]
    root = Path(source)
    if not root.is_dir():
        raise LocnoiseError(f"image source {source!r} is not a directory")
    images = []
    skipped = 0
    for path in sorted(root.iterdir()):
        if path.suffix.lower() not in (".png", ".ltns"):
            continue
        try:
            img = _load_image_file(path)
        except Exception as exc:  # unreadable file: skip, keep the campaign alive
            log.warning("skipping unreadable image %s: %s", path.name, exc)
            skipped += 1
            continue
        if img.shape != input_shape:
            log.warning(
                "skipping %s: shape %s does not match model input %s",
                path.name, img.shape, input_shape,
            )
            skipped += 1
            continue
        images.append((path.name, img))
    if skipped:
        log.warning("skipped %d unusable image(s)", skipped)
    if not images:
        raise LocnoiseError(f"no usable images in {source!r}")
    return images


# ---------------------------------------------------------------------------
# campaign

def _build_configs(spec: ExperimentSpec) -> dict[str, AttackConfig]:
    configs = {}
    for method in spec.methods:
        kwargs = dict(spec.overrides.get(method, {}))
        if spec.seed is not None and method == "pgd":
            kwargs.setdefault("pgd_random_start", True)
            kwargs.setdefault("seed", spec.seed)
        configs[method] = AttackConfig.defaults(method, **kwargs)
    return configs


def run_campaign(spec: ExperimentSpec) -> tuple[list[AttackRecord], list[ReportRow]]:
    """Run every (method, gamma, image) task; return the records and rows."""
    net = load_model(spec.model)
    images = resolve_images(spec.images, net.input_shape)
    configs = _build_configs(spec)
    masks = {g: build_mask(net.input_shape[0], net.input_shape[1], g) for g in spec.gammas}

    tasks = [
        (method, gamma, idx)
        for method in spec.methods
        for gamma in spec.gammas
        for idx in range(len(images))
    ]

    def run_one(task: tuple[str, float, int]) -> AttackRecord:
        method, gamma, idx = task
        name, img = images[idx]
        outcome = run_attack(net, img, gamma, configs[method])
        return AttackRecord(
            method=method,
            gamma=gamma,
            image_index=idx,
            image_name=name,
            clean=img,
            mask=masks[gamma],
            outcome=outcome,
            metrics=metric_set(img, outcome, masks[gamma]),
        )

    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        records = list(pool.map(run_one, tasks))
    return records, aggregate(spec, records)


def run_experiment(spec: ExperimentSpec) -> list[ReportRow]:
    """Run the full campaign, write detail.csv and report.csv, return the rows."""
    records, rows = run_campaign(spec)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_detail(records, out_dir / "detail.csv")
    write_report(rows, out_dir / "report.csv")
    if spec.dump_images:
        dump_adversarial_images(records, out_dir / "images", include_failures=spec.dump_failures)
    return rows


def _mean(values: Sequence[float]) -> Optional[float]:
    # fsum is exactly rounded, so aggregates are independent of image order
    return math.fsum(values) / len(values) if values else None


def _change(baseline: Optional[float], value: Optional[float]) -> Optional[float]:
    if baseline is None or value is None:
        return None
    try:
        return relative_change(baseline, value)
    except UndefinedChangeError:
        return None


def aggregate(spec: ExperimentSpec, records: Sequence[AttackRecord]) -> list[ReportRow]:
    """Fold per-image records into one ReportRow per (method, gamma)."""
    cells: dict[tuple[str, float], dict] = {}
    for method in spec.methods:
        for gamma in spec.gammas:
            recs = [r for r in records if r.method == method and r.gamma == gamma]
            hits = [r.metrics for r in recs if r.outcome.success]
            cells[(method, gamma)] = {
                "asr": sum(1 for r in recs if r.outcome.success) / len(recs),
                "avg_mpv": _mean([m.mpv for m in hits]),
                "avg_psnr_db": _mean([m.psnr_db for m in hits]),
                "avg_ssim": _mean([m.ssim for m in hits]),
                "avg_dr": _mean([m.dr for m in hits]),
                "avg_iters": None if method == "fgsm"
                else _mean([float(r.outcome.iterations_used) for r in recs]),
            }
    rows = []
    for method in spec.methods:
        base = cells[(method, 1.0)]
        for gamma in spec.gammas:
            cell = cells[(method, gamma)]
            rows.append(
                ReportRow(
                    method=method,
                    gamma=gamma,
                    asr=cell["asr"],
                    mpv_change_pct=_change(base["avg_mpv"], cell["avg_mpv"]),
                    psnr_change_pct=_change(base["avg_psnr_db"], cell["avg_psnr_db"]),
                    ssim_change_pct=_change(base["avg_ssim"], cell["avg_ssim"]),
                    dr_change_pct=_change(base["avg_dr"], cell["avg_dr"]),
                    iters_change_pct=_change(base["avg_iters"], cell["avg_iters"]),
                    avg_mpv=cell["avg_mpv"],
                    avg_psnr_db=cell["avg_psnr_db"],
                    avg_ssim=cell["avg_ssim"],
                    avg_dr=cell["avg_dr"],
                    avg_iters=cell["avg_iters"],
                )
            )
    return rows


# ---------------------------------------------------------------------------
# output files

def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    if value == 0:
        return "0.000000"
    return f"{value:#.6g}"


def write_report(rows: Sequence[ReportRow], path: str | Path) -> None:
    """Write the aggregate CSV; floats carry six significant digits and
    undefined cells stay empty."""
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_HEADER)
        for r in rows:
            writer.writerow([
                r.method,
                _fmt(r.gamma),
                _fmt(r.asr),
                _fmt(r.avg_mpv),
                _fmt(r.avg_psnr_db),
                _fmt(r.avg_ssim),
                _fmt(r.avg_dr),
                _fmt(r.avg_iters),
                _fmt(r.mpv_change_pct),
                _fmt(r.psnr_change_pct),
                _fmt(r.ssim_change_pct),
                _fmt(r.dr_change_pct),
                _fmt(r.iters_change_pct),
            ])


def read_report(path: str | Path) -> list[ReportRow]:
    """Parse a report.csv back into rows (inverse of write_report)."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != REPORT_HEADER:
            raise LocnoiseError(f"{path}: unexpected report header {header}")
        for rec in reader:
            vals = [None if cell == "" else float(cell) for cell in rec[1:]]
            rows.append(
                ReportRow(
                    method=rec[0],
                    gamma=vals[0],
                    asr=vals[1],
                    avg_mpv=vals[2],
                    avg_psnr_db=vals[3],
                    avg_ssim=vals[4],
                    avg_dr=vals[5],
                    avg_iters=vals[6],
                    mpv_change_pct=vals[7],
                    psnr_change_pct=vals[8],
                    ssim_change_pct=vals[9],
                    dr_change_pct=vals[10],
                    iters_change_pct=vals[11],
                )
            )
    return rows


def write_detail(records: Sequence[AttackRecord], path: str | Path) -> None:
    """Per-image CSV: one row per (method, gamma, image) with its metrics."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(DETAIL_HEADER)
        for r in records:
            writer.writerow([
                r.method,
                _fmt(r.gamma),
                r.image_name,
                int(r.outcome.success),
                r.outcome.iterations_used,
                _fmt(r.metrics.mpv),
                _fmt(r.metrics.psnr_db),
                _fmt(r.metrics.ssim),
                _fmt(r.metrics.dr),
            ])


def dump_adversarial_images(
    records: Sequence[AttackRecord], out_dir: str | Path, include_failures: bool = False
) -> list[Path]:
    """Dump each outcome's adversarial image plus an |noise| heat map.

    Failures are skipped unless include_failures is set. Filenames encode
    method, gamma, image index, and the success flag.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in records:
        if not r.outcome.success and not include_failures:
            continue
        tag = "ok" if r.outcome.success else "fail"
        stem = f"{r.method}_gamma{r.gamma:.2f}_img{r.image_index:03d}_{tag}"
        adv = r.outcome.adversarial_image.data
        if adv.shape[2] == 3:
            adv_path = out_dir / f"{stem}_adv.ppm"
            write_ppm(adv_path, to_uint8(adv))
        else:
            adv_path = out_dir / f"{stem}_adv.pgm"
            write_pgm(adv_path, to_uint8(adv[:, :, 0]))
        heat = np.abs(r.outcome.noise.data).max(axis=2)
        peak = heat.max()
        if peak > 0:
            heat = heat / peak
        noise_path = out_dir / f"{stem}_noise.pgm"
        write_pgm(noise_path, to_uint8(heat))
        written.extend([adv_path, noise_path])
    return written
