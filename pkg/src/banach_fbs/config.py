"""Flat key = value experiment configuration.

One assignment per line, ``#`` starts a comment, blank lines ignored.
Unknown keys are rejected so typos fail loudly.  See README for the key
reference per problem kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

__all__ = ["ExperimentConfig", "parse_key_values", "load_config"]

KINDS = ("sparse-integration", "tv-denoise", "tv-deblur")

_COMMON_KEYS = {
    "kind", "seed", "out", "max_iters", "d_tol", "objective_tol", "delta", "noise",
}
_SPARSE_KEYS = {
    "n", "p_values", "spikes", "amp_low", "amp_high", "amp_min_abs",
    "alpha", "target_discrepancy", "reference_factor",
}
_TV_KEYS = {"dims", "p", "alpha", "kernel"}


def parse_key_values(text: str) -> dict:
    """Parse the flat format into a string-to-string dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _to_float(raw: dict, key: str, default=None) -> float:
    if key not in raw:
        return default
    try:
        return float(raw[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {raw[key]!r}") from exc


def _to_int(raw: dict, key: str, default=None) -> int:
    if key not in raw:
        return default
    try:
        return int(raw[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {raw[key]!r}") from exc


@dataclass
class ExperimentConfig:
    """Validated experiment description; see :func:`load_config`."""

    kind: str
    seed: int = 1
    out_dir: str = "out"
    max_iters: int = 5000
    d_tol: float = None
    objective_tol: float = None
    delta: float = 0.1
    noise: float = 0.0

    # sparse-integration
    n: int = 500
    p_values: tuple = (1.5, 2.0)
    spikes: int = 9
    amp_low: float = -10.0
    amp_high: float = 25.0
    amp_min_abs: float = 2.0
    alpha: float = None
    target_discrepancy: float = None
    reference_factor: int = 10

    # tv
    dims: tuple = None
    p: float = None
    kernel: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must be in (0, 1)")
        if self.noise < 0.0:
            raise ConfigError("noise must be >= 0")
        if self.kind == "sparse-integration":
            if self.n < 1:
                raise ConfigError("n must be >= 1")
            if self.spikes < 0 or self.spikes > self.n:
                raise ConfigError("spikes must be in [0, n]")
            if not self.p_values:
                raise ConfigError("p_values must not be empty")
            if len(set(self.p_values)) != len(self.p_values):
                raise ConfigError("p_values must be distinct")
            for p in self.p_values:
                if not 1.0 < p <= 2.0:
                    raise ConfigError(f"each p must be in (1, 2], got {p}")
            if self.alpha is None and self.target_discrepancy is None:
                raise ConfigError("set either alpha or target_discrepancy")
            if self.alpha is not None and self.alpha <= 0.0:
                raise ConfigError("alpha must be positive")
            if self.target_discrepancy is not None and self.target_discrepancy <= 0.0:
                raise ConfigError("target_discrepancy must be positive")
        else:
            if self.dims is None:
                raise ConfigError("tv runs need dims")
            if len(self.dims) not in (2, 3) or any(d < 2 for d in self.dims):
                raise ConfigError("dims must be 2 or 3 integers, each >= 2")
            d = len(self.dims)
            default_p = 2.0 if d == 2 else 1.5
            if self.p is None:
                self.p = default_p
            if not 1.0 < self.p <= d / (d - 1.0):
                raise ConfigError(f"p must be in (1, {d / (d - 1.0)}] for {d}D grids")
            if self.alpha is None or self.alpha < 0.0:
                raise ConfigError("tv runs need alpha >= 0")
            if self.kind == "tv-deblur" and not self.kernel:
                raise ConfigError("tv-deblur needs a kernel")


def load_config(path: str, seed_override: int = None) -> ExperimentConfig:
    """Read, type and validate a config file; raises ConfigError on any defect."""
    try:
        with open(path) as fh:
            raw = parse_key_values(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    kind = raw.get("kind")
    if kind is None:
        raise ConfigError("missing required key 'kind'")
    allowed = _COMMON_KEYS | (_SPARSE_KEYS if kind == "sparse-integration" else _TV_KEYS)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys for kind {kind!r}: {', '.join(unknown)}")

    kwargs = {
        "kind": kind,
        "seed": _to_int(raw, "seed", 1),
        "out_dir": raw.get("out", "out"),
        "max_iters": _to_int(raw, "max_iters", 5000),
        "d_tol": _to_float(raw, "d_tol"),
        "objective_tol": _to_float(raw, "objective_tol"),
        "delta": _to_float(raw, "delta", 0.1),
        "noise": _to_float(raw, "noise", 0.0),
    }
    if kind == "sparse-integration":
        kwargs.update(
            n=_to_int(raw, "n", 500),
            spikes=_to_int(raw, "spikes", 9),
            amp_low=_to_float(raw, "amp_low", -10.0),
            amp_high=_to_float(raw, "amp_high", 25.0),
            amp_min_abs=_to_float(raw, "amp_min_abs", 2.0),
            alpha=_to_float(raw, "alpha"),
            target_discrepancy=_to_float(raw, "target_discrepancy"),
            reference_factor=_to_int(raw, "reference_factor", 10),
        )
        if "p_values" in raw:
            try:
                kwargs["p_values"] = tuple(float(t) for t in raw["p_values"].split())
            except ValueError as exc:
                raise ConfigError(f"p_values: not numbers: {raw['p_values']!r}") from exc
    else:
        if "dims" in raw:
            try:
                kwargs["dims"] = tuple(int(t) for t in raw["dims"].split())
            except ValueError as exc:
                raise ConfigError(f"dims: not integers: {raw['dims']!r}") from exc
        kwargs.update(p=_to_float(raw, "p"), alpha=_to_float(raw, "alpha"),
                      kernel=raw.get("kernel"))

    if seed_override is not None:
        kwargs["seed"] = seed_override
    return ExperimentConfig(**kwargs)
