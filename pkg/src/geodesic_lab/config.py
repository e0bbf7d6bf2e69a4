"""Construction constants, flat key=value config files, and validation.

The file format is INI-like: bracketed sections, one ``key = value`` pair
per line, ``#`` comments.  Unknown keys or sections are errors, so a config
hash pins an experiment exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = ["LabConfig", "default_config", "load_config", "dump_config", "config_hash"]

# length of the shortest closed geodesic (the gamma_0 orbit)
SYSTOLE = 2.0 * float(np.arccosh(1.0 + np.sqrt(2.0)))


@dataclass(frozen=True)
class LabConfig:
    # [construction]
    delta0: float = 0.2
    m: int = 32
    tau: float = 0.5
    k0: int = 4
    eps0: float = 0.05
    eps1: float = 0.02
    eps2: float = 0.01
    eps3: float = 0.005
    eps4: float = 0.02
    phi0: float = 1.0
    psi0: float = 1.0
    alpha: float = 0.01
    beta: float = 0.05
    theta: float = float(np.pi / 8.0)
    kappa: float = 0.1
    K: int = 100
    lam: float = 0.0
    N0: int = 100
    xi_amp: float = 0.0  # 0 means: calibrate from the C1 budget
    # [assembly]
    delta_prime: float = 0.01
    n_max: int = 4
    # [boxes]
    j_count: int = 6
    box_ru: float = 0.02
    box_rs: float = 0.02
    box_rcn: float = 0.01
    # [numerics]
    h1_steps: int = 32
    qr_every: int = 10
    n_batches: int = 25
    shadow_steps: int = 30
    newton_max: int = 50
    # [run]
    seed: int = 20260809

    @property
    def delta(self) -> float:
        return SYSTOLE / self.m

    @property
    def orbit_length(self) -> float:
        return SYSTOLE


_SECTIONS = {
    "construction": [
        "delta0", "m", "tau", "k0", "eps0", "eps1", "eps2", "eps3", "eps4",
        "phi0", "psi0", "alpha", "beta", "theta", "kappa", "K", "lam", "N0",
        "xi_amp",
    ],
    "assembly": ["delta_prime", "n_max"],
    "boxes": ["j_count", "box_ru", "box_rs", "box_rcn"],
    "numerics": ["h1_steps", "qr_every", "n_batches", "shadow_steps", "newton_max"],
    "run": ["seed"],
}
_INT_FIELDS = {f.name for f in fields(LabConfig) if f.type in ("int", int)}


def default_config(**overrides) -> LabConfig:
    cfg = LabConfig()
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def load_config(path) -> LabConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    values = {}
    section = None
    for ln, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"{path}:{ln}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if section is None:
            raise ConfigError(f"{path}:{ln}: key outside any section")
        if key not in _SECTIONS[section]:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r} in [{section}]")
        try:
            values[key] = int(val) if key in _INT_FIELDS else float(val)
        except ValueError as e:
            raise ConfigError(f"{path}:{ln}: bad value for {key}: {val!r}") from e
    return LabConfig(**values)


def dump_config(cfg: LabConfig) -> str:
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = getattr(cfg, k)
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: LabConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def validate_constants(cfg: LabConfig) -> list[str]:
    """Ordering constraints on the constants alone (no geometry needed).

    Returns a list of violation messages; empty means valid.
    """
    bad = []
    if not (cfg.delta0 > 0):
        bad.append("delta0 must be positive")
    if not (0.0 < cfg.delta <= cfg.delta0 / 2.0):
        bad.append(
            f"flow step delta = systole/m = {cfg.delta:.6g} must lie in (0, delta0/2 = {cfg.delta0 / 2:.6g}]"
        )
    if not (0.0 < cfg.tau < 2.0 / 3.0):
        bad.append(f"tau = {cfg.tau} must lie in (0, 2/3)")
    if cfg.k0 < 1:
        bad.append("k0 must be a positive integer")
    if not (0.0 < cfg.theta <= np.pi / cfg.k0 + 1e-12):
        bad.append(f"theta = {cfg.theta:.6g} must lie in (0, pi/k0 = {np.pi / cfg.k0:.6g}]")
    if not (0.0 < cfg.eps2 < cfg.eps1):
        bad.append(f"need 0 < eps2 = {cfg.eps2} < eps1 = {cfg.eps1}")
    if not (cfg.eps1 <= cfg.delta + 1e-12):
        bad.append(f"eps1 = {cfg.eps1} must not exceed delta = {cfg.delta:.6g}")
    if not (0.0 < cfg.eps4 <= cfg.eps0):
        bad.append(f"need 0 < eps4 = {cfg.eps4} <= eps0 = {cfg.eps0}")
    if not (0.0 < cfg.eps3 <= cfg.eps0):
        bad.append(f"need 0 < eps3 = {cfg.eps3} <= eps0 = {cfg.eps0}")
    if cfg.eps0 <= 2.0 * cfg.eps1:
        bad.append(f"eps0 = {cfg.eps0} must exceed 2 eps1 = {2 * cfg.eps1} for the leaf search")
    if cfg.phi0 <= 0 or cfg.psi0 <= 0:
        bad.append("phi0 and psi0 must be positive")
    if not (0.0 < cfg.kappa < 0.5):
        bad.append(f"kappa = {cfg.kappa} must lie in (0, 1/2)")
    if cfg.alpha < 0 or cfg.beta < 0:
        bad.append("alpha and beta must be nonnegative")
    if cfg.delta_prime <= 0:
        bad.append("delta_prime must be positive")
    if 5.0 * cfg.delta_prime > cfg.delta:
        bad.append(
            f"5 delta_prime = {5 * cfg.delta_prime:.6g} must stay below delta = {cfg.delta:.6g}"
        )
    if cfg.n_max < 0:
        bad.append("n_max must be >= 0")
    if cfg.h1_steps < 4:
        bad.append("h1_steps must be >= 4")
    if not (1 <= cfg.qr_every <= 100):
        bad.append("qr_every must lie in [1, 100]")
    if cfg.box_rcn > min(cfg.box_ru, cfg.box_rs):
        bad.append("box_rcn must not exceed box_ru or box_rs")
    return bad
