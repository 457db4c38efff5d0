"""Twin-run drivers: reference vs. assimilated trajectories, the
perturbation-pair experiment, CSV/summary output.

A twin run advances the reference trajectory (no feedback) and the
assimilated trajectory (feedback built from the reference state at the
current level) side by side with the same stepper, records the
synchronization errors, energies, masses and the stability ledger at every
step, and writes a subsampled CSV plus a JSON summary.  The reference
advance never sees the nudging gains, so it is bit-identical across runs
that differ only in the gains.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, TrajectoryIC
from .diagnostics import CSV_HEADER, StepRecord, energies, phase_mass, sync_errors
from .fem import Field, Space, interpolate, l2_error, l2_norm
from .mesh import build_uniform_mesh
from .model import PhysicalParams
from .observation import ObservationOperator, build_observation, observe
from .scheme import NudgeSources, SimState, Stepper
from .vtk import write_state_vtk

__all__ = ["initial_phi", "initial_psi", "initial_velocity",
           "make_initial_state", "build_nudge", "TwinResult", "run_twin",
           "Test4Result", "run_test4", "TEST4_CSV_HEADER"]


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def initial_phi(ic: TrajectoryIC, params: PhysicalParams):
    """Droplet profile 1/2 + 1/2 tanh((r0 - r)/sqrt(2 gamma)) or variants."""
    width = math.sqrt(2.0 * params.gamma)

    def droplet(x, y):
        r = np.sqrt((x - ic.phi_x0) ** 2 + (y - ic.phi_y0) ** 2)
        return 0.5 + 0.5 * np.tanh((ic.phi_r0 - r) / width)

    if ic.phi_kind == "droplet":
        return droplet
    if ic.phi_kind == "inverted_droplet":
        return lambda x, y: 1.0 - droplet(x, y)
    return lambda x, y: np.zeros_like(x)


def initial_psi(ic: TrajectoryIC):
    """Rigid rotation profile rotated by theta; theta = 0 gives (-y, x)."""
    if ic.psi_kind == "rotation":
        ct, st = math.cos(ic.psi_theta), math.sin(ic.psi_theta)
        return lambda x, y: (-(ct * y + st * x), ct * x - st * y)
    return lambda x, y: (np.zeros_like(x), np.zeros_like(y))


def initial_velocity(ic: TrajectoryIC):
    if ic.v_kind == "shear":
        amp = ic.v_amplitude
        return lambda x, y: (amp * np.sin(np.pi * y), np.zeros_like(x))
    return lambda x, y: (np.zeros_like(x), np.zeros_like(y))


def make_initial_state(stepper: Stepper, ic: TrajectoryIC,
                       phi_override: Field | None = None) -> SimState:
    """Interpolated initial state; both pressures start at zero and the
    velocity gets the strong boundary values imposed immediately (the shear
    profile does not vanish on the side walls, so without this the state
    would start outside the velocity space)."""
    params = stepper.params
    phi = phi_override if phi_override is not None else interpolate(
        stepper.phase_space, initial_phi(ic, params))
    zeta = interpolate(stepper.aux_space, initial_psi(ic))
    v = stepper.apply_velocity_bc(interpolate(stepper.vel_space, initial_velocity(ic)))
    zero_p = stepper.pressure_space.zero_field()
    xi = stepper.phase_space.zero_field()
    return SimState(v=v, pi=zero_p, pi_prev=zero_p.copy(), phi=phi, xi=xi,
                    zeta=zeta, t=0.0, n=0)


def build_nudge(op: ObservationOperator, params: PhysicalParams,
                ref: SimState, da: SimState) -> NudgeSources:
    """alpha * I_H(reference - assimilated) for each nudged equation."""
    g_phi = g_psi = g_u = None
    if params.alpha_phi != 0.0:
        diff = Field(da.phi.space, ref.phi.coeffs - da.phi.coeffs)
        g_phi = observe(op, diff)
        g_phi.coeffs *= params.alpha_phi
    if params.alpha_psi != 0.0:
        diff = Field(da.zeta.space, ref.zeta.coeffs - da.zeta.coeffs)
        g_psi = observe(op, diff)
        g_psi.coeffs *= params.alpha_psi
    if params.alpha_u != 0.0:
        diff = Field(da.v.space, ref.v.coeffs - da.v.coeffs)
        g_u = observe(op, diff)
        g_u.coeffs *= params.alpha_u
    return NudgeSources(g_phi=g_phi, g_psi=g_psi, g_u=g_u)


# ---------------------------------------------------------------------------
# twin runs
# ---------------------------------------------------------------------------

_HISTORY_COLUMNS = CSV_HEADER.split(",")


@dataclass
class TwinResult:
    cfg: RunConfig
    history: dict                      # column -> full-resolution array
    records: list = field(repr=False)  # subsampled StepRecords
    summary: dict = field(default_factory=dict)
    ref_final: SimState | None = None
    da_final: SimState | None = None
    csv_path: str | None = None


def _format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_records_csv(path, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_format_value(v) for v in row) + "\n")


def _twin_record(step: int, t: float, ref: SimState, da: SimState,
                 params: PhysicalParams, ledger) -> StepRecord:
    e_u, e_phi, e_psi, e_pi = sync_errors(ref, da)
    kin_r, mix_r, el_r, tot_r = energies(ref, params)
    kin_d, mix_d, el_d, tot_d = energies(da, params)
    return StepRecord(
        step=step, t=t, e_u=e_u, e_phi=e_phi, e_psi=e_psi, e_pi=e_pi,
        Ekin_ref=kin_r, Emix_ref=mix_r, Eel_ref=el_r, Etot_ref=tot_r,
        Ekin_da=kin_d, Emix_da=mix_d, Eel_da=el_d, Etot_da=tot_d,
        mass_ref=phase_mass(ref.phi), mass_da=phase_mass(da.phi),
        ledger_E=ledger[0], ledger_D=ledger[1], ledger_S=ledger[2],
    )


def run_twin(cfg: RunConfig, write_outputs: bool = True) -> TwinResult:
    """Advance the reference/assimilated pair for the configured horizon."""
    mesh = build_uniform_mesh(cfg.n_fine)
    coarse = build_uniform_mesh(cfg.n_obs)
    stepper = Stepper(mesh, cfg.params, cfg.dt, bc=cfg.bc, lid_u0=cfg.lid_u0,
                      pressure_sign=cfg.pressure_sign)
    obs = build_observation(stepper.phase_space, Space(coarse, 2))

    ref = make_initial_state(stepper, cfg.ic_ref)
    da = make_initial_state(stepper, cfg.ic_da)

    steps = cfg.num_steps
    all_records = [_twin_record(0, 0.0, ref, da, cfg.params,
                                (stepper.ledger_energy(da), 0.0, 0.0))]
    kept = [all_records[0]]
    min_d = math.inf
    max_ratio = -math.inf
    ratio_steps = 0
    prev_energy = all_records[0].ledger_E

    vtk_dir = None
    if write_outputs and cfg.vtk_every:
        vtk_dir = cfg.out_dir
        os.makedirs(vtk_dir, exist_ok=True)
        write_state_vtk(os.path.join(vtk_dir, "ref_000000.vtk"), ref)
        write_state_vtk(os.path.join(vtk_dir, "da_000000.vtk"), da)

    for n in range(steps):
        nudge = build_nudge(obs, cfg.params, ref, da)
        new_ref = stepper.advance(ref)
        new_da = stepper.advance(da, nudge)
        led = stepper.stability_ledger(da, new_da, nudge)

        min_d = min(min_d, led.dissipation)
        denom = cfg.dt * (prev_energy + led.source)
        if denom > 1e-300:
            ratio = (led.energy + cfg.dt * led.dissipation - prev_energy) / denom
            max_ratio = max(max_ratio, ratio)
            ratio_steps += 1
        prev_energy = led.energy

        ref, da = new_ref, new_da
        rec = _twin_record(n + 1, ref.t, ref, da, cfg.params,
                           (led.energy, led.dissipation, led.source))
        all_records.append(rec)
        if (n + 1) % cfg.csv_every == 0 or n + 1 == steps:
            if kept[-1].step != n + 1:
                kept.append(rec)
        if vtk_dir and cfg.vtk_every and (n + 1) % cfg.vtk_every == 0:
            write_state_vtk(os.path.join(vtk_dir, f"ref_{n + 1:06d}.vtk"), ref)
            write_state_vtk(os.path.join(vtk_dir, f"da_{n + 1:06d}.vtk"), da)

    history = {col: np.array([getattr(r, col) for r in all_records])
               for col in _HISTORY_COLUMNS}
    summary = {
        "steps": steps,
        "t_final": ref.t,
        "final_errors": {"e_u": kept[-1].e_u, "e_phi": kept[-1].e_phi,
                         "e_psi": kept[-1].e_psi, "e_pi": kept[-1].e_pi},
        "energy_ref": {"first": history["Etot_ref"][0],
                       "last": history["Etot_ref"][-1],
                       "min": float(history["Etot_ref"].min()),
                       "max": float(history["Etot_ref"].max())},
        "energy_da": {"first": history["Etot_da"][0],
                      "last": history["Etot_da"][-1],
                      "min": float(history["Etot_da"].min()),
                      "max": float(history["Etot_da"].max())},
        "mass_drift_ref": float(history["mass_ref"][-1] - history["mass_ref"][0]),
        "ledger": {"min_D": min_d,
                   "max_step_ratio": max_ratio if ratio_steps else None,
                   "ratio_steps": ratio_steps},
    }

    result = TwinResult(cfg=cfg, history=history, records=kept, summary=summary,
                        ref_final=ref, da_final=da)
    if write_outputs:
        os.makedirs(cfg.out_dir, exist_ok=True)
        result.csv_path = os.path.join(cfg.out_dir, "twin.csv")
        write_records_csv(result.csv_path, CSV_HEADER,
                          [r.as_row() for r in kept])
        with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


# ---------------------------------------------------------------------------
# perturbation-pair experiment
# ---------------------------------------------------------------------------

_TEST4_PAIRS = ("ref1_da1", "ref2_da2", "ref1_ref2", "da1_da2")
TEST4_CSV_HEADER = "step,t," + ",".join(
    f"e_{kind}_{pair}" for pair in _TEST4_PAIRS
    for kind in ("u", "phi", "psi", "tot"))


@dataclass
class Test4Result:
    cfg: RunConfig
    history: dict
    summary: dict
    csv_path: str | None = None


def _pair_errors(a: SimState, b: SimState) -> list[float]:
    e_u = l2_error(a.v, b.v)
    e_phi = l2_error(a.phi, b.phi)
    e_psi = l2_error(a.zeta, b.zeta)
    return [e_u, e_phi, e_psi, math.sqrt(e_u ** 2 + e_phi ** 2 + e_psi ** 2)]


def run_test4(cfg: RunConfig, write_outputs: bool = True) -> Test4Result:
    """Two references with coarse-identical initial phases, two nudged runs.

    The two reference phases are phi_naive +/- eps * (I_H phi_naive -
    phi_naive); the perturbation is invisible to the observation operator
    by construction.  Both assimilated runs start from the same mismatched
    guess and are driven by their own reference.
    """
    if cfg.test4_epsilon is None:
        raise ValueError("configuration has no test4.epsilon entry")
    eps = cfg.test4_epsilon

    mesh = build_uniform_mesh(cfg.n_fine)
    coarse = build_uniform_mesh(cfg.n_obs)
    stepper = Stepper(mesh, cfg.params, cfg.dt, bc=cfg.bc, lid_u0=cfg.lid_u0,
                      pressure_sign=cfg.pressure_sign)
    obs = build_observation(stepper.phase_space, Space(coarse, 2))

    phi_naive = interpolate(stepper.phase_space, initial_phi(cfg.ic_ref, cfg.params))
    delta = Field(stepper.phase_space,
                  observe(obs, phi_naive).coeffs - phi_naive.coeffs)
    phi_1 = Field(stepper.phase_space, phi_naive.coeffs + eps * delta.coeffs)
    phi_2 = Field(stepper.phase_space, phi_naive.coeffs - eps * delta.coeffs)

    ref1 = make_initial_state(stepper, cfg.ic_ref, phi_override=phi_1)
    ref2 = make_initial_state(stepper, cfg.ic_ref, phi_override=phi_2)
    da1 = make_initial_state(stepper, cfg.ic_da)
    da2 = make_initial_state(stepper, cfg.ic_da)

    coarse_gap = l2_norm(observe(obs, Field(stepper.phase_space,
                                            phi_1.coeffs - phi_2.coeffs)))
    fine_gap = l2_error(phi_1, phi_2)

    steps = cfg.num_steps
    rows = []

    def snapshot(step: int, t: float) -> list:
        row = [step, t]
        for a, b in ((ref1, da1), (ref2, da2), (ref1, ref2), (da1, da2)):
            row.extend(_pair_errors(a, b))
        return row

    all_rows = [snapshot(0, 0.0)]
    rows.append(all_rows[0])
    for n in range(steps):
        nudge1 = build_nudge(obs, cfg.params, ref1, da1)
        nudge2 = build_nudge(obs, cfg.params, ref2, da2)
        ref1 = stepper.advance(ref1)
        ref2 = stepper.advance(ref2)
        da1 = stepper.advance(da1, nudge1)
        da2 = stepper.advance(da2, nudge2)
        row = snapshot(n + 1, ref1.t)
        all_rows.append(row)
        if (n + 1) % cfg.csv_every == 0 or n + 1 == steps:
            if rows[-1][0] != n + 1:
                rows.append(row)

    cols = TEST4_CSV_HEADER.split(",")
    arr = np.array(all_rows)
    history = {c: arr[:, k] for k, c in enumerate(cols)}
    summary = {
        "steps": steps,
        "coarse_gap": coarse_gap,
        "fine_gap": fine_gap,
        "epsilon": eps,
        "final": {c: history[c][-1] for c in cols[2:]},
    }

    result = Test4Result(cfg=cfg, history=history, summary=summary)
    if write_outputs:
        os.makedirs(cfg.out_dir, exist_ok=True)
        result.csv_path = os.path.join(cfg.out_dir, "test4.csv")
        write_records_csv(result.csv_path, TEST4_CSV_HEADER, rows)
        with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result
