"""Run configuration: flat key = value files, validation, presets.

The format is one assignment per line, ``#`` starts a comment, keys are
dotted lowercase.  Unknown keys are rejected so typos cannot silently fall
back to defaults.  ``preset_configs`` emits ready-to-run files for the six
bundled experiments at desk scale (32/16 mesh pair, T=20) or at the full
scale (64/32, T=100).

Key set (defaults in parentheses; defaults reproduce the droplet
relaxation twin at desk scale):

=====================  =======================================================
n_fine (32)            fine mesh subdivisions per side
n_obs (16)             observation mesh subdivisions (must divide n_fine)
dt (0.01)              time step
t_final (20.0)         final time (must be an integer number of steps)
rho, re, tau, eps      model constants (1, 3000, 1e-4, 5e-3)
lambda, gamma          mixing energy scales (1, 1)
lambda_e, k_per        elastic modulus and permeability (0.5, 1)
eta_f, eta_p           fluid/matrix viscosities (1e-2, 1e-1)
alpha_u/_phi/_psi (1)  nudging gains
bc (no_slip)           no_slip | moving_lid
lid_u0 (2.0)           lid speed for moving_lid
pressure_sign (1)      +1 as the scheme states it, -1 for the classical sign
ref.phi (droplet)      droplet | inverted_droplet | zero
ref.phi.x0/.y0/.r0     droplet center and radius (0.5, 0.5, 0.18)
ref.psi (rotation)     rotation | zero
ref.psi.theta (0.0)    rotation angle
ref.v (zero)           zero | shear
ref.v.amplitude (0.2)  shear amplitude
da.*                   same keys for the assimilated trajectory
                       (defaults: droplet at (0.65, 0.35), r0 0.22,
                       rotation theta 0.6, shear velocity 0.2)
test4.epsilon          perturbation-pair scale; presence switches the run
                       to the two-reference experiment
out_dir (out)          output directory
csv_every (10)         record every k-th step (plus step 0)
vtk_every (0)          field snapshot interval, 0 = off
=====================  =======================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import PhysicalParams

__all__ = ["ConfigError", "ParseError", "ValidationError", "TrajectoryIC",
           "RunConfig", "parse_flat", "load_config", "config_text",
           "preset_configs", "PRESET_TESTS"]


class ConfigError(Exception):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """The file is not a readable flat key = value document."""


class ValidationError(ConfigError):
    """Keys/values outside the documented set or constraints."""


@dataclass
class TrajectoryIC:
    phi_kind: str = "droplet"
    phi_x0: float = 0.5
    phi_y0: float = 0.5
    phi_r0: float = 0.18
    psi_kind: str = "rotation"
    psi_theta: float = 0.0
    v_kind: str = "zero"
    v_amplitude: float = 0.2


@dataclass
class RunConfig:
    n_fine: int = 32
    n_obs: int = 16
    dt: float = 0.01
    t_final: float = 20.0
    params: PhysicalParams = field(default_factory=PhysicalParams)
    ic_ref: TrajectoryIC = field(default_factory=TrajectoryIC)
    ic_da: TrajectoryIC = field(default_factory=lambda: TrajectoryIC(
        phi_x0=0.65, phi_y0=0.35, phi_r0=0.22, psi_theta=0.6, v_kind="shear"))
    bc: str = "no_slip"
    lid_u0: float = 2.0
    pressure_sign: int = 1
    test4_epsilon: float | None = None
    out_dir: str = "out"
    csv_every: int = 10
    vtk_every: int = 0

    @property
    def num_steps(self) -> int:
        return int(round(self.t_final / self.dt))


_PHI_KINDS = ("droplet", "inverted_droplet", "zero")
_PSI_KINDS = ("rotation", "zero")
_V_KINDS = ("shear", "zero")

# key -> (type, attribute path); attribute paths are resolved in _apply
_KEYS = {
    "n_fine": int, "n_obs": int, "dt": float, "t_final": float,
    "rho": float, "re": float, "tau": float, "eps": float, "lambda": float,
    "gamma": float, "lambda_e": float, "k_per": float, "eta_f": float,
    "eta_p": float, "alpha_u": float, "alpha_phi": float, "alpha_psi": float,
    "bc": str, "lid_u0": float, "pressure_sign": int,
    "test4.epsilon": float, "out_dir": str, "csv_every": int, "vtk_every": int,
}
for _pfx in ("ref", "da"):
    _KEYS.update({
        f"{_pfx}.phi": str, f"{_pfx}.phi.x0": float, f"{_pfx}.phi.y0": float,
        f"{_pfx}.phi.r0": float, f"{_pfx}.psi": str, f"{_pfx}.psi.theta": float,
        f"{_pfx}.v": str, f"{_pfx}.v.amplitude": float,
    })

_PARAM_KEYS = {"rho": "rho", "re": "re", "tau": "tau", "eps": "eps",
               "lambda": "lam", "gamma": "gamma", "lambda_e": "lambda_e",
               "k_per": "k_per", "eta_f": "eta_f", "eta_p": "eta_p",
               "alpha_u": "alpha_u", "alpha_phi": "alpha_phi",
               "alpha_psi": "alpha_psi"}


def parse_flat(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; comments and blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {rawline!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ParseError(f"line {lineno}: empty key or value in {rawline!r}")
        if key in out:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    if not out:
        raise ParseError("no assignments found")
    return out


def _convert(key: str, value: str):
    typ = _KEYS[key]
    try:
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ValidationError(f"key {key!r}: cannot read {value!r} as {typ.__name__}") from exc


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def load_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    with open(path, "r") as fh:
        raw = parse_flat(fh.read())

    for key in raw:
        if key not in _KEYS:
            raise ValidationError(f"unknown key {key!r}")
    values = {key: _convert(key, val) for key, val in raw.items()}

    cfg = RunConfig()
    param_kwargs = {}
    for key, attr in _PARAM_KEYS.items():
        if key in values:
            param_kwargs[attr] = values.pop(key)
    if param_kwargs:
        base = {k: getattr(cfg.params, k) for k in PhysicalParams.__dataclass_fields__}
        base.update(param_kwargs)
        try:
            cfg.params = PhysicalParams(**base)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc

    for ic, pfx in ((cfg.ic_ref, "ref"), (cfg.ic_da, "da")):
        for key, attr in ((f"{pfx}.phi", "phi_kind"), (f"{pfx}.phi.x0", "phi_x0"),
                          (f"{pfx}.phi.y0", "phi_y0"), (f"{pfx}.phi.r0", "phi_r0"),
                          (f"{pfx}.psi", "psi_kind"), (f"{pfx}.psi.theta", "psi_theta"),
                          (f"{pfx}.v", "v_kind"), (f"{pfx}.v.amplitude", "v_amplitude")):
            if key in values:
                setattr(ic, attr, values.pop(key))

    for key, attr in (("n_fine", "n_fine"), ("n_obs", "n_obs"), ("dt", "dt"),
                      ("t_final", "t_final"), ("bc", "bc"), ("lid_u0", "lid_u0"),
                      ("pressure_sign", "pressure_sign"),
                      ("test4.epsilon", "test4_epsilon"), ("out_dir", "out_dir"),
                      ("csv_every", "csv_every"), ("vtk_every", "vtk_every")):
        if key in values:
            setattr(cfg, attr, values.pop(key))

    _check(cfg.n_fine >= 1 and cfg.n_obs >= 1, "mesh subdivisions must be >= 1")
    _check(cfg.n_fine % cfg.n_obs == 0,
           f"n_obs={cfg.n_obs} must divide n_fine={cfg.n_fine}")
    _check(cfg.dt > 0.0, "dt must be positive")
    _check(cfg.t_final >= cfg.dt, "t_final must cover at least one step")
    steps = cfg.t_final / cfg.dt
    _check(abs(steps - round(steps)) <= 1e-8 * max(1.0, steps),
           "t_final must be an integer number of steps")
    _check(cfg.bc in ("no_slip", "moving_lid"), f"unknown bc {cfg.bc!r}")
    _check(cfg.pressure_sign in (1, -1), "pressure_sign must be 1 or -1")
    _check(cfg.csv_every >= 1, "csv_every must be >= 1")
    _check(cfg.vtk_every >= 0, "vtk_every must be >= 0")
    if cfg.test4_epsilon is not None:
        _check(cfg.test4_epsilon > 0.0, "test4.epsilon must be positive")
    for ic, pfx in ((cfg.ic_ref, "ref"), (cfg.ic_da, "da")):
        _check(ic.phi_kind in _PHI_KINDS, f"{pfx}.phi must be one of {_PHI_KINDS}")
        _check(ic.psi_kind in _PSI_KINDS, f"{pfx}.psi must be one of {_PSI_KINDS}")
        _check(ic.v_kind in _V_KINDS, f"{pfx}.v must be one of {_V_KINDS}")
        _check(ic.phi_r0 > 0.0, f"{pfx}.phi.r0 must be positive")
    return cfg


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESET_TESTS = (1, 2, 3, 4, 5, 6)


def config_text(entries: dict) -> str:
    lines = [f"{k} = {v}" for k, v in entries.items()]
    return "\n".join(lines) + "\n"


def _base_entries(scale: str) -> dict:
    if scale == "desk":
        mesh = {"n_fine": 32, "n_obs": 16, "t_final": 20.0}
    elif scale == "paper":
        mesh = {"n_fine": 64, "n_obs": 32, "t_final": 100.0}
    else:
        raise ValueError(f"unknown scale {scale!r}")
    entries = dict(mesh)
    entries.update({
        "dt": 0.01, "rho": 1.0, "re": 3000.0, "tau": 1e-4, "eps": 5e-3,
        "lambda": 1.0, "gamma": 1.0, "lambda_e": 0.5, "k_per": 1.0,
        "eta_f": 0.01, "eta_p": 0.1,
        "alpha_u": 1.0, "alpha_phi": 1.0, "alpha_psi": 1.0,
        "bc": "no_slip", "pressure_sign": 1,
        "ref.phi": "droplet", "ref.phi.x0": 0.5, "ref.phi.y0": 0.5,
        "ref.phi.r0": 0.18, "ref.psi": "rotation", "ref.psi.theta": 0.0,
        "ref.v": "zero",
        "da.phi": "droplet", "da.phi.x0": 0.65, "da.phi.y0": 0.35,
        "da.phi.r0": 0.22, "da.psi": "rotation", "da.psi.theta": 0.6,
        "da.v": "shear", "da.v.amplitude": 0.2,
        "csv_every": 10, "vtk_every": 0,
    })
    return entries


def preset_configs(test: int, scale: str = "desk") -> list[tuple[str, str]]:
    """(filename, file text) pairs for one of the six bundled experiments.

    The sweep experiments (5 and 6) emit one file per sweep point.
    """
    if test not in PRESET_TESTS:
        raise ValueError(f"test must be in {PRESET_TESTS}, got {test}")
    base = _base_entries(scale)

    def with_out(entries: dict, name: str) -> dict:
        out = dict(entries)
        out["out_dir"] = f"out/{name}"
        return out

    if test == 1:
        return [("test1.cfg", config_text(with_out(base, "test1")))]

    if test == 2:
        e = dict(base)
        # invert the reference droplet; reverse the initial auxiliary field
        e.update({"da.phi": "inverted_droplet", "da.phi.x0": 0.5,
                  "da.phi.y0": 0.5, "da.phi.r0": 0.18,
                  "da.psi.theta": repr(math.pi)})
        return [("test2.cfg", config_text(with_out(e, "test2")))]

    lid = dict(base)
    lid.update({"bc": "moving_lid", "lid_u0": 2.0, "re": 100.0})

    if test == 3:
        return [("test3.cfg", config_text(with_out(lid, "test3")))]

    if test == 4:
        e = dict(lid)
        e["test4.epsilon"] = 10.0
        e["n_obs"] = 8
        return [("test4.cfg", config_text(with_out(e, "test4")))]

    if test == 5:
        out = []
        for alpha in (1.0, 0.1, 0.01):
            e = dict(lid)
            e.update({"alpha_u": alpha, "alpha_phi": alpha, "alpha_psi": alpha})
            name = f"test5_alpha{alpha:g}"
            out.append((f"{name}.cfg", config_text(with_out(e, name))))
        return out

    obs_sizes = (16, 8, 4) if scale == "desk" else (32, 16, 8)
    out = []
    for n_obs in obs_sizes:
        e = dict(lid)
        e["n_obs"] = n_obs
        name = f"test6_obs{n_obs}"
        out.append((f"{name}.cfg", config_text(with_out(e, name))))
    return out
