"""Dataset files, synthetic stand-in datasets, and report / plot-data output.

Dataset CSV layout::

    # comments start with '#'
    t_km_per_gev,p,dt,dp[,group]
    1234.5,0.93,12.0,0.02,EH1

Experiment metadata lives in a ``key = value`` sidecar next to the CSV
(``name.csv`` -> ``name.meta``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, DomainError, OutputError
from .gksl import flavor_pvm, oscillation_generator, plus_probabilities
from .lgi import DataPoint
from .oscillation import FlavorChannel, bin_averaged_probability, oscillation_probability

HEADER = ("t_km_per_gev", "p", "dt", "dp")
GROUP_COLUMN = "group"


@dataclass(frozen=True)
class ExperimentMeta:
    """Baseline (km) and energy (GeV) ranges of an experiment; purely descriptive."""

    baseline_km: tuple[float, float]
    energy_gev: tuple[float, float]
    source: str = "reactor"

    def __post_init__(self):
        for name in ("baseline_km", "energy_gev"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise DomainError(f"{name} range {lo!r}..{hi!r} must be positive and ordered")
        if self.source not in ("reactor", "accelerator", "other"):
            raise DomainError(f"unknown source type {self.source!r}")

    @property
    def t_range(self):
        """``(L_min / E_max, L_max / E_min)`` in km/GeV."""
        return self.baseline_km[0] / self.energy_gev[1], self.baseline_km[1] / self.energy_gev[0]


EXPERIMENTS = {
    "dayabay": (ExperimentMeta((0.364, 1.912), (0.001, 0.008), "reactor"), FlavorChannel(0, 0, True)),
    "minos": (ExperimentMeta((735.0, 735.0), (0.5, 50.0), "accelerator"), FlavorChannel(1, 1, False)),
    "kamland": (ExperimentMeta((180.0, 180.0), (0.002, 0.010), "reactor"), FlavorChannel(0, 0, True)),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    points: tuple[DataPoint, ...]
    channel: FlavorChannel = FlavorChannel(0, 0, False)
    label: str = "dataset"
    groups: Optional[tuple[str, ...]] = None
    meta: Optional[ExperimentMeta] = None
    synthetic: bool = False
    allow_unphysical_p: bool = field(default=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise DataError("dataset has no points")
        if self.groups is not None:
            object.__setattr__(self, "groups", tuple(str(g) for g in self.groups))
            if len(self.groups) != len(self.points):
                raise DataError("group labels do not match the number of points", field=GROUP_COLUMN)
        if not self.allow_unphysical_p:
            for idx, pt in enumerate(self.points):
                if not (0.0 <= pt.p <= 1.0):
                    raise DataError(f"point {idx}: p={pt.p!r} outside [0, 1]", field="p")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.points == other.points
            and self.channel == other.channel
            and self.label == other.label
            and self.groups == other.groups
            and self.meta == other.meta
            and self.synthetic == other.synthetic
        )

    def __len__(self):
        return len(self.points)

    @property
    def t(self):
        return np.array([pt.t for pt in self.points])

    @property
    def p(self):
        return np.array([pt.p for pt in self.points])

    @property
    def dt(self):
        return np.array([pt.dt for pt in self.points])

    @property
    def dp(self):
        return np.array([pt.dp for pt in self.points])

    def with_points(self, points, **changes):
        kwargs = dict(
            channel=self.channel,
            label=self.label,
            groups=self.groups,
            meta=self.meta,
            synthetic=self.synthetic,
            allow_unphysical_p=self.allow_unphysical_p,
        )
        kwargs.update(changes)
        return Dataset(tuple(points), **kwargs)


def _parse_float(text, lineno, name):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"not a number: {text!r}", line=lineno, field=name) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r}", line=lineno, field=name)
    return value


def _make_point(values, lineno, allow_unphysical_p=False):
    t, p, dt, dp = values
    if not allow_unphysical_p and not (0.0 <= p <= 1.0):
        raise DataError(f"p must lie in [0, 1], got {p!r}", line=lineno, field="p")
    if t <= 0:
        raise DataError(f"t must be positive, got {t!r}", line=lineno, field=HEADER[0])
    if dt < 0:
        raise DataError(f"dt must be non-negative, got {dt!r}", line=lineno, field="dt")
    if dp < 0:
        raise DataError(f"dp must be non-negative, got {dp!r}", line=lineno, field="dp")
    return DataPoint(t, p, dt, dp)


def meta_path_for(path):
    return Path(path).with_suffix(".meta")


def _read_sidecar(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}: expected 'key = value'", line=lineno)
            key, _, value = (part.strip() for part in line.partition("="))
            values[key] = value
    return values


def _parse_bool(text):
    return text.strip().lower() in ("1", "true", "yes", "on")


def load_dataset(path, meta_path=None, *, allow_unphysical_p=False):
    """Read and validate a dataset CSV plus its optional metadata sidecar.

    Without a sidecar the label defaults to the file stem and the channel
    to electron-neutrino survival.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    points = []
    groups = []
    header = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if header is None:
            header = cells
            if tuple(header[:4]) != HEADER or len(header) > 5 or (len(header) == 5 and header[4] != GROUP_COLUMN):
                raise DataError(f"bad header {line!r}; expected {','.join(HEADER)}[,{GROUP_COLUMN}]", line=lineno)
            continue
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} columns, found {len(cells)}", line=lineno)
        values = [_parse_float(c, lineno, name) for c, name in zip(cells[:4], HEADER)]
        points.append(_make_point(values, lineno, allow_unphysical_p))
        if len(header) == 5:
            groups.append(cells[4])
    if header is None:
        raise DataError(f"{path}: no header row")
    if not points:
        raise DataError(f"{path}: no data rows")

    meta_path = meta_path_for(path) if meta_path is None else Path(meta_path)
    side = _read_sidecar(meta_path) if meta_path.exists() else {}
    channel = FlavorChannel.parse(side.get("channel", "ee"), _parse_bool(side.get("antineutrino", "false")))
    meta = None
    if "baseline_km_min" in side:
        try:
            meta = ExperimentMeta(
                (float(side["baseline_km_min"]), float(side["baseline_km_max"])),
                (float(side["energy_gev_min"]), float(side["energy_gev_max"])),
                side.get("source", "reactor"),
            )
        except (KeyError, ValueError, DomainError) as exc:
            raise DataError(f"{meta_path}: invalid experiment metadata ({exc})") from exc
    return Dataset(
        tuple(points),
        channel=channel,
        label=side.get("label", path.stem),
        groups=tuple(groups) if groups else None,
        meta=meta,
        synthetic=_parse_bool(side.get("synthetic", "false")),
        allow_unphysical_p=allow_unphysical_p,
    )


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def dataset_csv(dataset):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    head = list(HEADER) + ([GROUP_COLUMN] if dataset.groups is not None else [])
    buf.write(f"# {dataset.label}{' (synthetic)' if dataset.synthetic else ''}\n")
    writer.writerow(head)
    for idx, pt in enumerate(dataset.points):
        row = [repr(pt.t), repr(pt.p), repr(pt.dt), repr(pt.dp)]
        if dataset.groups is not None:
            row.append(dataset.groups[idx])
        writer.writerow(row)
    return buf.getvalue()


def dataset_meta_text(dataset):
    lines = [
        f"label = {dataset.label}",
        f"channel = {dataset.channel.name}",
        f"antineutrino = {str(dataset.channel.antineutrino).lower()}",
        f"synthetic = {str(dataset.synthetic).lower()}",
    ]
    if dataset.meta is not None:
        m = dataset.meta
        lines += [
            f"source = {m.source}",
            f"baseline_km_min = {m.baseline_km[0]!r}",
            f"baseline_km_max = {m.baseline_km[1]!r}",
            f"energy_gev_min = {m.energy_gev[0]!r}",
            f"energy_gev_max = {m.energy_gev[1]!r}",
        ]
    return "\n".join(lines) + "\n"


def save_dataset(dataset, path):
    """Write the CSV and its sidecar; returns the sidecar path."""
    path = Path(path)
    atomic_write_text(path, dataset_csv(dataset))
    side = meta_path_for(path)
    atomic_write_text(side, dataset_meta_text(dataset))
    return side


@dataclass(frozen=True)
class NoiseModel:
    """``dt = rel_dt * t`` and ``dp = abs_dp + rel_dp * p``; ``perturb`` jitters p by N(0, dp)."""

    rel_dt: float = 0.0
    abs_dp: float = 0.0
    rel_dp: float = 0.0
    perturb: bool = True

    def __post_init__(self):
        if min(self.rel_dt, self.abs_dp, self.rel_dp) < 0:
            raise DomainError("noise parameters must be non-negative")


def generate_synthetic(
    params,
    meta,
    count,
    noise=NoiseModel(),
    dephasing_rate=0.0,
    *,
    channel=FlavorChannel(0, 0, False),
    seed=0,
    label="synthetic",
    t_range=None,
):
    """Synthetic dataset on a log-uniform grid over the experiment's L/E range.

    Survival values come from the vacuum formula, or from the dephased GKSL
    flow when ``dephasing_rate > 0``.  Perturbed values are clipped to [0, 1].
    """
    if count < 3:
        raise DomainError("synthetic datasets need at least 3 points")
    if dephasing_rate < 0:
        raise DomainError("dephasing rate must be non-negative")
    lo, hi = meta.t_range if t_range is None else t_range
    t = np.geomspace(lo, hi, count)
    if dephasing_rate == 0.0:
        p = np.asarray(oscillation_probability(params, channel, t), dtype=float)
    else:
        if not channel.is_survival:
            raise DomainError("dephased synthetic data supports survival channels only")
        gen = oscillation_generator(params, channel.antineutrino, dephasing_rate)
        pvm = flavor_pvm(channel.alpha)
        p = plus_probabilities(gen, pvm, pvm.pi_plus, t)
    dt = noise.rel_dt * t
    dp = noise.abs_dp + noise.rel_dp * p
    if noise.perturb and np.any(dp > 0):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        p = np.clip(p + rng.normal(0.0, 1.0, size=count) * dp, 0.0, 1.0)
    points = tuple(DataPoint(float(a), float(b), float(c), float(d)) for a, b, c, d in zip(t, p, dt, dp))
    return Dataset(points, channel=channel, label=label, meta=meta, synthetic=True)


def bundled_dataset_path(name):
    """Path of a bundled synthetic stand-in (``dayabay``, ``minos``, ``kamland``)."""
    if name not in EXPERIMENTS:
        raise DataError(f"no bundled dataset {name!r}; choose from {', '.join(sorted(EXPERIMENTS))}")
    return Path(str(resources.files("nulgi") / "data" / f"{name}_synthetic.csv"))


def bundled_params_path():
    return Path(str(resources.files("nulgi") / "data" / "nufit_no.params"))


# ---------------------------------------------------------------- reports


def _json_number(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def build_report(label, config, dist, theoretical=None, ratio=None, notes=()):
    """Report dictionary in the documented schema."""
    report = {
        "label": label,
        "replications": int(config.replications),
        "seed": int(config.seed),
        "epsilon": float(config.triad.epsilon),
        "mu": _json_number(dist.mu),
        "sigma": _json_number(dist.sigma),
        "confidence": _json_number(dist.confidence),
        "comparison": None,
    }
    if theoretical is not None:
        report["comparison"] = {
            "theoretical_confidence": _json_number(theoretical.confidence),
            "ratio": _json_number(ratio),
        }
    if notes:
        report["notes"] = list(notes)
    return report


def save_report(results, path):
    atomic_write_text(path, json.dumps(results, indent=2, sort_keys=False) + "\n")


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class PlotSeries:
    """Named columns plus rows for one plot-data CSV."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...] = ()


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def save_plotdata(series, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(series.columns)
    for row in series.rows:
        writer.writerow([_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def survival_curve_series(params, channel, t):
    p = np.atleast_1d(oscillation_probability(params, channel, np.asarray(t, dtype=float)))
    return PlotSeries("survival_curve", ("t", "p"), tuple(zip(map(float, np.atleast_1d(t)), map(float, p))))


def stairstep_series(dataset, params, channel=None):
    """Bin-averaged prediction per point as a flat segment over ``[t - dt, t + dt]``."""
    channel = dataset.channel if channel is None else channel
    rows = []
    for idx, pt in enumerate(dataset.points):
        avg = bin_averaged_probability(params, channel, pt.t, pt.dt)
        rows.append((idx, max(0.0, pt.t - pt.dt), avg))
        rows.append((idx, pt.t + pt.dt, avg))
    return PlotSeries("stairstep", ("segment", "t", "p"), tuple(rows))


def k3_scatter_series(rows, source):
    """Rows of ``(triad, rel_err, k3)`` tagged with ``source`` (experimental / theoretical)."""
    return PlotSeries(
        f"k3_{source}", ("source", "i", "j", "k", "rel_err", "k3"),
        tuple((source, tr.i, tr.j, tr.k, rel, k) for tr, rel, k in rows),
    )


def histogram_series(dist, name="histogram"):
    """Violation count vs number of replications that produced it."""
    rows = tuple(sorted(dist.histogram.items()))
    return PlotSeries(name, ("count", "frequency"), rows)


# name -> (points, rel_dt, abs_dp, dephasing rate per km/GeV, seed)
BUNDLED_RECIPES = {
    "dayabay": (24, 0.08, 0.01, 0.0, 1),
    "minos": (20, 0.10, 0.05, 0.0, 2),
    "kamland": (17, 0.06, 0.04, 1e-5, 3),
}


def bundled_synthetic(name, params):
    """Rebuild one of the bundled stand-in datasets from its recipe."""
    count, rel_dt, abs_dp, rate, seed = BUNDLED_RECIPES[name]
    meta, channel = EXPERIMENTS[name]
    data = generate_synthetic(
        params, meta, count, NoiseModel(rel_dt, abs_dp), rate, channel=channel, seed=seed, label=f"{name}-synthetic"
    )
    if name == "dayabay":
        # three hall-like groups by L/E tercile
        labels = tuple(f"EH{1 + (3 * i) // count}" for i in range(count))
        data = data.with_points(data.points, groups=labels)
    return data
