"""Config parsing and the on-disk formats (JSON models/states, CSV tables).

Floats are written with 17 significant digits so that every file
round-trips bit-exactly.
"""

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import MaserParams, build_maser_channel, closed_form_rates
from .errors import QbdcError
from .random_tau import RandomJCModel, TauDensity

FLOAT_FMT = "%.17g"


class ConfigError(QbdcError):
    """Malformed or incomplete configuration; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def fmt(x):
    """17-significant-digit text for floats; ``inf``/``nan`` spelled out."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return FLOAT_FMT % x


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [_json_safe(obj.real), _json_safe(obj.imag)]
    return obj


def dumps(obj):
    """Deterministic JSON: sorted keys, non-finite floats as ``null``."""
    return json.dumps(_json_safe(obj), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# model configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    """A parsed model: a fixed-time maser or an averaged JC maser."""

    lam: float
    zeta: complex
    coupling: dict
    dim: int = 40
    cutoff: Optional[int] = None
    tail_fraction: float = 0.25
    params: Optional[MaserParams] = None
    random: Optional[RandomJCModel] = None

    @property
    def kind(self):
        return self.coupling["kind"]

    def rate_cutoff(self):
        return self.cutoff if self.cutoff is not None else self.dim - 2

    def quad(self, cutoff):
        return self.random.rule(cutoff) if self.random is not None else None

    def rates(self, cutoff=None):
        cutoff = self.rate_cutoff() if cutoff is None else cutoff
        if self.random is not None:
            return self.random.rates(cutoff)
        return closed_form_rates(self.params, cutoff)

    def channel(self, dim=None):
        dim = self.dim if dim is None else dim
        if self.random is not None:
            return self.random.channel(dim)
        return build_maser_channel(self.params, dim)

    def with_point(self, lam, zeta):
        return parse_model({"lambda": lam, "zeta": [complex(zeta).real, complex(zeta).imag],
                            "coupling": self.coupling, "dim": self.dim,
                            "cutoff": self.cutoff, "tail_fraction": self.tail_fraction})

    def describe(self):
        return {"lambda": self.lam, "zeta": [self.zeta.real, self.zeta.imag],
                "coupling": self.coupling, "dim": self.dim}


def _number(d, key, default=None, required=True):
    if key not in d or d[key] is None:
        if required and default is None:
            raise ConfigError(f"missing field {key!r}", key)
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {key!r} must be a number", key)
    return v


def parse_zeta(v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, dict) and "abs" in v:
        return complex(v["abs"] * np.exp(1j * v.get("arg", 0.0)))
    raise ConfigError("field 'zeta' must be a number, [re, im] or {abs, arg}", "zeta")


def parse_model(d):
    """Build a :class:`ModelConfig` from a decoded JSON object."""
    if not isinstance(d, dict):
        raise ConfigError("model config must be a JSON object")
    lam = float(_number(d, "lambda"))
    zeta = parse_zeta(d.get("zeta", 0.0))
    coupling = d.get("coupling")
    if not isinstance(coupling, dict) or "kind" not in coupling:
        raise ConfigError("field 'coupling' must be an object with a 'kind'", "coupling")
    dim = int(_number(d, "dim", 40, required=False))
    cutoff = d.get("cutoff")
    if cutoff is not None:
        cutoff = int(_number(d, "cutoff"))
    tail = float(_number(d, "tail_fraction", 0.25, required=False))
    if not 0 < tail <= 1:
        raise ConfigError("field 'tail_fraction' must lie in (0, 1]", "tail_fraction")
    if dim < 3:
        raise ConfigError("field 'dim' must be >= 3", "dim")
    kind = coupling["kind"]
    c = dict(coupling)
    params = random = None
    try:
        if kind == "toy":
            params = MaserParams.toy(lam, zeta, float(_number(c, "alpha")), float(_number(c, "beta")))
        elif kind == "baby":
            params = MaserParams.baby(lam, zeta)
        elif kind == "jc":
            params = MaserParams.jc(lam, zeta, float(_number(c, "g")), float(_number(c, "tau")))
        elif kind == "explicit":
            if "alpha" not in c or "beta" not in c:
                raise ConfigError("explicit coupling needs 'alpha' and 'beta' lists",
                                  "coupling.alpha" if "alpha" not in c else "coupling.beta")
            params = MaserParams.explicit(lam, zeta, c["alpha"], c["beta"])
        elif kind == "jc_random":
            dens = c.get("density")
            if not isinstance(dens, dict):
                raise ConfigError("jc_random coupling needs a 'density' object", "coupling.density")
            q = c.get("quadrature") or {}
            random = RandomJCModel(lam, zeta, float(_number(c, "g")), TauDensity.from_dict(dens),
                                   int(q.get("order", 16)),
                                   None if q.get("panels") is None else int(q["panels"]))
        else:
            raise ConfigError(f"unknown coupling kind {kind!r}", "coupling.kind")
    except ConfigError as e:
        if e.field and not e.field.startswith("coupling"):
            e.field = f"coupling.{e.field}"
            e.args = (f"{e.args[0]} (in 'coupling')",)
        raise
    return ModelConfig(lam, zeta, c, dim, cutoff, tail, params, random)


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found", "config") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}", "config") from None


def load_model(path):
    return parse_model(load_json(path))


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

RATE_COLUMNS = ("n", "sigma", "mu", "lambda", "eta_re", "eta_im")


def rates_csv(rates, quad_report=None):
    """Rates table; an optional quadrature report follows as ``#`` lines."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_COLUMNS)
    for n in range(rates.cutoff + 1):
        w.writerow([n, fmt(rates.sigma[n]), fmt(rates.mu[n]), fmt(rates.lam[n]),
                    fmt(rates.eta[n].real), fmt(rates.eta[n].imag)])
    if quad_report:
        for k in sorted(quad_report):
            v = quad_report[k]
            buf.write(f"# quadrature {k}={fmt(v) if isinstance(v, float) else v}\n")
    return buf.getvalue()


def read_rates_csv(text):
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}
    return cols


def table_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else
                    ("" if v is None else v) for v in r])
    return buf.getvalue()


def convergence_csv(distances):
    return table_csv(("n", "distance"), [(n, float(d)) for n, d in enumerate(distances)])


def state_json(rho, extra=None):
    """``{dim, trace_deficit, entries: [[re, im], ...]}`` with entries row-major."""
    e = np.asarray(rho.entries)
    out = {"dim": int(e.shape[0]), "trace_deficit": float(rho.trace_deficit),
           "entries": [[float(v.real), float(v.imag)] for v in e.ravel(order="C")]}
    if extra:
        out.update(extra)
    return out


def state_from_json(d):
    from .solver import DensityMatrix

    dim = int(d["dim"])
    flat = np.array([complex(re, im) for re, im in d["entries"]])
    return DensityMatrix(flat.reshape(dim, dim), float(d.get("trace_deficit", 0.0)))


__all__ = [
    "ConfigError", "ModelConfig", "parse_model", "load_model", "load_json", "rates_csv",
    "read_rates_csv", "table_csv", "convergence_csv", "state_json", "state_from_json",
    "dumps", "fmt", "parse_zeta",
]
