"""
File formats: station datasets, run configuration, grids, posterior sample
files and result tables.

Every table is comma-delimited text with a header row, preceded by one
``#`` manifest line naming the model, seed and package version. Floats are
written with 17 significant digits so they reload bit-for-bit.
"""

import copy
import csv
import io as _io
import json
import math
import os
from dataclasses import dataclass

import numpy as np
import yaml

from windgp import __version__
from windgp.errors import ConfigError, DataError
from windgp.geometry import WIND_EPS
from windgp.inference import ChainConfig, ObservationModel, PosteriorSamples, PriorSpec
from windgp.models import MODELS, LATENT_HYPER_NAMES, GridSpec, ModelSpec

__all__ = [
    "Dataset",
    "load_dataset",
    "write_dataset",
    "make_grid",
    "DEFAULT_CONFIG",
    "load_config",
    "merge_config",
    "build_spec",
    "build_priors",
    "build_chain",
    "manifest_line",
    "read_manifest",
    "write_table",
    "read_table",
    "write_samples",
    "read_samples",
    "fmt",
]


def fmt(x):
    """Text form of a number that reloads to the identical float."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


# --------------------------------------------------------------------------
# manifest and tables


def manifest_line(model, seed, **extra):
    parts = [f"model={model}", f"seed={seed}", f"version={__version__}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def read_manifest(path):
    """Key/value pairs of the leading ``#`` line of a table file ({} if absent)."""
    with open(path, newline="") as fh:
        first = fh.readline()
    if not first.startswith("#"):
        return {}
    out = {}
    for tok in first[1:].split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
    return out


def write_table(path, columns, rows, manifest):
    """Write rows (sequences aligned with ``columns``) under a manifest line."""
    buf = _io.StringIO()
    buf.write(manifest + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_table(path):
    """Return ``(manifest, header, rows)`` with rows as lists of strings."""
    manifest = read_manifest(path)
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return manifest, header, [r for r in reader if r]


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """
    Station table. ``z`` is NaN at prediction-only rows; ``winds`` rows are
    NaN where no wind was given and unit length elsewhere.
    """

    site_ids: list
    coords: np.ndarray
    z: np.ndarray
    winds: np.ndarray | None = None

    @property
    def n(self):
        return len(self.site_ids)

    @property
    def has_value(self):
        return ~np.isnan(self.z)

    def _rows(self, mask):
        idx = np.flatnonzero(mask)
        w = None
        if self.winds is not None:
            w = self.winds[idx]
            if np.any(np.isnan(w)):
                w = None
        return idx, w

    def subset(self, ids):
        pos = {s: i for i, s in enumerate(self.site_ids)}
        missing = [s for s in ids if s not in pos]
        if missing:
            raise ConfigError(f"unknown site ids {missing}")
        idx = np.array([pos[s] for s in ids], dtype=int)
        w = None if self.winds is None else self.winds[idx]
        return Dataset([self.site_ids[i] for i in idx], self.coords[idx], self.z[idx], w)

    def observation_model(self, exclude=()):
        """Rows with a value and not in ``exclude``, as an ObservationModel."""
        exclude = set(exclude)
        mask = self.has_value & np.array([s not in exclude for s in self.site_ids])
        if not mask.any():
            raise DataError("no observed sites left to fit")
        idx, w = self._rows(mask)
        return ObservationModel(self.coords[idx], self.z[idx], winds=w,
                                site_ids=[self.site_ids[i] for i in idx])

    def heldout_model(self, ids):
        sub = self.subset(list(ids))
        if np.any(np.isnan(sub.z)):
            raise DataError("held-out sites must have observed values")
        w = sub.winds
        if w is not None and np.any(np.isnan(w)):
            w = None
        return ObservationModel(sub.coords, sub.z, winds=w, site_ids=sub.site_ids)


def _num(text, name, lineno, optional=False):
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan"):
        if optional:
            return math.nan
        raise DataError(f"line {lineno}: missing {name}")
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"line {lineno}: cannot parse {name} {text!r}") from None
    if not math.isfinite(val):
        raise DataError(f"line {lineno}: {name} is not finite")
    return val


def load_dataset(path):
    """
    Read a station table with columns ``site_id, x, y`` and optional
    ``value, u, v``.

    Rows with an empty value are kept as prediction-only sites. Winds are
    normalized to unit length. Errors name the offending line numbers.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        numbered = [(i + 1, ln) for i, ln in enumerate(fh)
                    if ln.strip() and not ln.startswith("#")]
    if not numbered:
        raise DataError(f"{path}: empty file")
    reader = csv.reader([ln for _, ln in numbered])
    header = [h.strip() for h in next(reader)]
    for col in ("site_id", "x", "y"):
        if col not in header:
            raise DataError(f"line {numbered[0][0]}: missing column {col!r}")
    has_wind = "u" in header and "v" in header
    if ("u" in header) != ("v" in header):
        raise DataError("wind needs both u and v columns")
    col = {h: i for i, h in enumerate(header)}
    ids, coords, z, winds = [], [], [], []
    seen_id, seen_xy = {}, {}
    for (lineno, _), row in zip(numbered[1:], reader):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        sid = row[col["site_id"]].strip()
        if not sid:
            raise DataError(f"line {lineno}: empty site_id")
        if sid in seen_id:
            raise DataError(f"line {lineno}: duplicate site_id {sid!r} (first on line "
                            f"{seen_id[sid]})")
        seen_id[sid] = lineno
        x = _num(row[col["x"]], "x", lineno)
        y = _num(row[col["y"]], "y", lineno)
        if (x, y) in seen_xy:
            raise DataError(f"duplicate coordinates ({x}, {y}) on lines {seen_xy[(x, y)]} "
                            f"and {lineno}")
        seen_xy[(x, y)] = lineno
        val = _num(row[col["value"]], "value", lineno, optional=True) if "value" in col \
            else math.nan
        if has_wind:
            u = _num(row[col["u"]], "u", lineno, optional=True)
            v = _num(row[col["v"]], "v", lineno, optional=True)
            if math.isnan(u) != math.isnan(v):
                raise DataError(f"line {lineno}: site {sid!r} has only one wind component")
            if not math.isnan(u):
                norm = math.hypot(u, v)
                if norm <= WIND_EPS:
                    raise DataError(f"line {lineno}: undefined wind direction at site {sid!r}")
                u, v = u / norm, v / norm
            winds.append((u, v))
        ids.append(sid)
        coords.append((x, y))
        z.append(val)
    if not ids:
        raise DataError(f"{path}: no data rows")
    return Dataset(ids, np.array(coords, dtype=float), np.array(z, dtype=float),
                   np.array(winds, dtype=float) if has_wind else None)


def write_dataset(path, data, manifest=None):
    """Inverse of :func:`load_dataset` (empty cells for missing values/winds)."""
    cols = ["site_id", "x", "y", "value"] + (["u", "v"] if data.winds is not None else [])
    rows = []
    for i, sid in enumerate(data.site_ids):
        r = [sid, fmt(data.coords[i, 0]), fmt(data.coords[i, 1]),
             "" if np.isnan(data.z[i]) else fmt(data.z[i])]
        if data.winds is not None:
            r += ["", ""] if np.isnan(data.winds[i, 0]) else [fmt(data.winds[i, 0]),
                                                                fmt(data.winds[i, 1])]
        rows.append(r)
    write_table(path, cols, rows, manifest or manifest_line("none", "none"))


def make_grid(bbox, nx, ny):
    """
    Cell centres of an ``nx`` by ``ny`` grid over ``bbox = (xmin, xmax,
    ymin, ymax)``, row-major with ``x`` varying fastest.
    """
    xmin, xmax, ymin, ymax = (float(b) for b in bbox)
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ConfigError("grid needs nx, ny >= 1")
    if not (xmax > xmin and ymax > ymin):
        raise ConfigError("degenerate bounding box")
    gx = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    gy = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    xx, yy = np.meshgrid(gx, gy, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


# --------------------------------------------------------------------------
# configuration

DEFAULT_CONFIG = {
    "model": "M1",
    "nu": 1.0,
    "seed": 0,
    # null chain lengths pick the model's standard run
    "chain": {"iterations": None, "burnin": None, "thin": None, "steps": {},
              "adapt_window": 50},
    # overrides of the data-scaled prior defaults, e.g. {"tau2": [0.1, 0.1]}
    "priors": {},
    # convolution grid for M4: "use-sites" or {"bbox": [...], "nx": .., "ny": ..}
    "grid": "use-sites",
    "heldout": [],
    "k": 1.0,
    "prediction": {"bbox": None, "nx": 20, "ny": 20, "draws_per_sample": 1,
                   "include_nugget": True, "level": 0.95},
    "simulate": {"realizations": 1, "params": {}, "reference": None, "ellipse_scale": 1.0},
}


def merge_config(base, override):
    """Recursive dict update returning a new dict."""
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None):
    """Defaults updated by a YAML file; unknown top-level keys are errors."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"no such config file: {path}")
    with open(path) as fh:
        try:
            user = yaml.safe_load(fh) or {}
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: {err}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return merge_config(cfg, user)


def build_spec(cfg, data=None):
    model = cfg["model"]
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}")
    grid = None
    g = cfg.get("grid", "use-sites")
    if model == "M4" and g != "use-sites":
        if not isinstance(g, dict) or data is None:
            raise ConfigError("grid must be 'use-sites' or a bbox/nx/ny mapping")
        from windgp.prediction import interp_wind
        pts = make_grid(g["bbox"], g["nx"], g["ny"])
        grid = GridSpec(pts, interp_wind(data.coords, data.winds, pts))
    return ModelSpec(model, float(cfg.get("nu", 1.0)), grid)


def build_priors(cfg, spec, coords):
    over = {}
    for k, v in (cfg.get("priors") or {}).items():
        if k == "delta":
            over[k] = {name: tuple(ab) for name, ab in v.items()}
        elif isinstance(v, list):
            over[k] = tuple(v)
        else:
            over[k] = v
    if "delta" in over:
        base = PriorSpec.default(spec, coords).delta
        base.update(over["delta"])
        over["delta"] = base
    try:
        return PriorSpec.default(spec, coords, **over)
    except TypeError as err:
        raise ConfigError(f"bad prior settings: {err}") from None


def build_chain(cfg, model):
    ch = cfg.get("chain") or {}
    kw = {k: ch[k] for k in ("iterations", "burnin", "thin") if ch.get(k) is not None}
    kw["seed"] = int(cfg.get("seed", 0))
    kw["steps"] = dict(ch.get("steps") or {})
    kw["adapt_window"] = int(ch.get("adapt_window", 50))
    return ChainConfig.long_run(model, **kw)


# --------------------------------------------------------------------------
# posterior samples


def write_samples(path, samples, seed, **extra):
    """One row per retained draw, one column per scalar parameter."""
    man = manifest_line(samples.spec.model, seed, nu=fmt(samples.spec.nu), **extra)
    cols = list(samples.names) + ["loglik"]
    rows = (list(v) + [ll] for v, ll in zip(samples.values, samples.loglik))
    write_table(path, cols, rows, man)


def read_samples(path, spec=None):
    """Reload a sample file written by :func:`write_samples`."""
    man, header, rows = read_table(path)
    if spec is None:
        if "model" not in man:
            raise DataError(f"{path}: no manifest line with the model id")
        spec = ModelSpec(man["model"], float(man.get("nu", 1.0)))
    if header[-1] != "loglik":
        raise DataError(f"{path}: last column must be loglik")
    names = header[:-1]
    vals = np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(-1, len(header))
    p = sum(1 for n in names if n.startswith("beta_"))
    site_ids = []
    if spec.model == "M5":
        site_ids = [n[len("gamma_"):] for n in names if n.startswith("gamma_")
                    and n not in LATENT_HYPER_NAMES]
    return PosteriorSamples(spec, names, vals[:, :-1], vals[:, -1], p, site_ids,
                            meta={"manifest": man})


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
