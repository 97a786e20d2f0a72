"""Vehicle mobility and the V2I/V2V radio model producing per-slot link rates.

All internal SNR math is in linear watts; dB/dBm conversions are centralized
here.  Small-scale fading is the magnitude-squared of a unit complex Gaussian,
i.e. Exp(1), redrawn i.i.d. per link per slot and held fixed within a slot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Highway measurement fits: offset (dB) and log10-distance slope.
V2I_PL_OFFSET_DB = -38.4
V2I_PL_SLOPE = 21.0
V2V_PL_OFFSET_DB = -44.23
V2V_PL_SLOPE = 16.7


@dataclass(frozen=True)
class RadioParams:
    """Link-budget constants shared by every link in the cell."""

    bandwidth_hz: float = 10e6
    tx_power_dbm: float = 23.0
    noise_dbm: float = -114.0

    def __post_init__(self) -> None:
        if not self.bandwidth_hz > 0:
            raise ValueError(f"bandwidth_hz={self.bandwidth_hz!r} must be > 0")
        if not (math.isfinite(self.tx_power_dbm) and math.isfinite(self.noise_dbm)):
            raise ValueError("tx_power_dbm and noise_dbm must be finite")


@dataclass
class MobilityTrace:
    """Per-slot planar positions for CVs and SVs plus the fixed RSU position.

    ``cv_xy`` has shape (T, n_cv, 2) and ``sv_xy`` (T, n_sv, 2), meters.
    """

    cv_xy: np.ndarray
    sv_xy: np.ndarray
    rsu_xy: np.ndarray

    def __post_init__(self) -> None:
        self.cv_xy = np.asarray(self.cv_xy, dtype=float)
        self.sv_xy = np.asarray(self.sv_xy, dtype=float)
        self.rsu_xy = np.asarray(self.rsu_xy, dtype=float)
        if self.cv_xy.ndim != 3 or self.cv_xy.shape[2] != 2:
            raise ValueError("cv_xy must have shape (T, n_cv, 2)")
        if self.sv_xy.ndim != 3 or self.sv_xy.shape[2] != 2:
            raise ValueError("sv_xy must have shape (T, n_sv, 2)")
        if self.sv_xy.shape[0] != self.cv_xy.shape[0]:
            raise ValueError("cv and sv traces must cover the same slots")
        if self.n_slots < 1:
            raise ValueError("trace needs at least one slot")
        if not (np.isfinite(self.cv_xy).all() and np.isfinite(self.sv_xy).all()
                and np.isfinite(self.rsu_xy).all()):
            raise ValueError("trace contains non-finite positions")

    @property
    def n_slots(self) -> int:
        return self.cv_xy.shape[0]

    @property
    def n_cv(self) -> int:
        return self.cv_xy.shape[1]

    @property
    def n_sv(self) -> int:
        return self.sv_xy.shape[1]


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def path_loss_v2i_db(dis: float) -> float:
    """Large-scale V2I channel gain in dB at distance ``dis`` meters."""
    if dis <= 0:
        raise ValueError(f"distance must be positive, got {dis!r}")
    return V2I_PL_OFFSET_DB - V2I_PL_SLOPE * math.log10(dis)


def path_loss_v2v_db(dis: float) -> float:
    """Large-scale V2V channel gain in dB at distance ``dis`` meters."""
    if dis <= 0:
        raise ValueError(f"distance must be positive, got {dis!r}")
    return V2V_PL_OFFSET_DB - V2V_PL_SLOPE * math.log10(dis)


def sample_fading(rng: np.random.Generator, size=None):
    """|u|^2 for u ~ CN(0,1): standard exponential power gain, mean 1."""
    return rng.exponential(1.0, size=size)


def link_rate_bps(params: RadioParams, pl_db: float, fading: float) -> float:
    """Shannon rate of one link given path loss (dB) and linear fading gain."""
    if fading < 0:
        raise ValueError("fading gain must be non-negative")
    snr = (dbm_to_watt(params.tx_power_dbm) * db_to_linear(pl_db) * fading
           / dbm_to_watt(params.noise_dbm))
    return params.bandwidth_hz * math.log2(1.0 + snr)


def rates_for_slot(trace: MobilityTrace, params: RadioParams, t: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-CV rates to the RSU and to every SV at slot ``t`` (1-based).

    Fading is redrawn here (CV->RSU draws first, then the CV x SV matrix in
    row-major order), so a seeded generator makes the rate matrix reproducible.
    """
    if not 1 <= t <= trace.n_slots:
        raise ValueError(f"slot {t} outside 1..{trace.n_slots}")
    cv = trace.cv_xy[t - 1]
    sv = trace.sv_xy[t - 1]
    d_rsu = np.linalg.norm(cv - trace.rsu_xy[None, :], axis=1)
    d_sv = np.linalg.norm(cv[:, None, :] - sv[None, :, :], axis=2)
    fad_rsu = sample_fading(rng, size=d_rsu.shape)
    fad_sv = sample_fading(rng, size=d_sv.shape)
    rate_rsu = np.array([link_rate_bps(params, path_loss_v2i_db(d), f)
                         for d, f in zip(d_rsu, fad_rsu)])
    rate_sv = np.empty_like(d_sv)
    for i in range(d_sv.shape[0]):
        for j in range(d_sv.shape[1]):
            rate_sv[i, j] = link_rate_bps(params, path_loss_v2v_db(d_sv[i, j]), fad_sv[i, j])
    return rate_rsu, rate_sv


def synth_highway_trace(n_cv: int, n_sv: int, length_m: float,
                        speed_range: tuple[float, float], n_slots: int,
                        seed: int, tau: float = 1.0,
                        lane_width_m: float = 4.0, n_lanes: int = 3) -> MobilityTrace:
    """Synthetic unidirectional highway: constant lanes, per-vehicle speed.

    Vehicles advance ``x += speed * tau`` per slot and wrap modulo the road
    length (steady traffic flow); the RSU sits at the road midpoint, one lane
    width off the road.  Lane assignment, initial positions and speeds are
    drawn from ``seed``.
    """
    if n_cv < 1 or n_sv < 0 or length_m <= 0 or n_slots < 1:
        raise ValueError("need n_cv >= 1, n_sv >= 0, positive length and slots")
    lo, hi = speed_range
    if lo < 0 or hi < lo:
        raise ValueError(f"bad speed range {speed_range!r}")
    rng = np.random.default_rng(seed)
    n = n_cv + n_sv
    x0 = rng.uniform(0.0, length_m, size=n)
    lanes = rng.integers(0, n_lanes, size=n)
    speeds = rng.uniform(lo, hi, size=n)
    steps = np.arange(n_slots)[:, None]
    x = (x0[None, :] + speeds[None, :] * tau * steps) % length_m
    y = np.broadcast_to((lanes * lane_width_m)[None, :], x.shape)
    xy = np.stack([x, y], axis=2)
    rsu_xy = np.array([length_m / 2.0, -lane_width_m])
    return MobilityTrace(cv_xy=xy[:, :n_cv].copy(), sv_xy=xy[:, n_cv:].copy(), rsu_xy=rsu_xy)


def load_trace_csv(path: str | Path, rsu_xy: tuple[float, float] | None = None) -> MobilityTrace:
    """Load a ``t,veh_id,role,x,y`` trace (role in {cv, sv}; t is 1-based).

    Every vehicle must appear in every slot.  If ``rsu_xy`` is omitted the RSU
    is placed at the midpoint of the observed x-range on y = 0.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"t", "veh_id", "role", "x", "y"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ValueError(f"{path}: trace header must contain {sorted(needed)}")
        for row in reader:
            rows.append((int(row["t"]), row["veh_id"], row["role"].strip().lower(),
                         float(row["x"]), float(row["y"])))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    slots = sorted({r[0] for r in rows})
    if slots != list(range(1, len(slots) + 1)):
        raise ValueError(f"{path}: slots must be contiguous from 1, got {slots[:5]}...")
    by_role: dict[str, list[str]] = {"cv": [], "sv": []}
    for _, vid, role, _, _ in rows:
        if role not in by_role:
            raise ValueError(f"{path}: unknown role {role!r} for vehicle {vid}")
        if vid not in by_role[role]:
            by_role[role].append(vid)
    pos = {(r[0], r[1]): (r[3], r[4]) for r in rows}
    arrays = {}
    for role, ids in by_role.items():
        out = np.empty((len(slots), len(ids), 2))
        for ti, t in enumerate(slots):
            for vi, vid in enumerate(ids):
                if (t, vid) not in pos:
                    raise ValueError(f"{path}: vehicle {vid} missing at slot {t}")
                out[ti, vi] = pos[(t, vid)]
        arrays[role] = out
    if not by_role["cv"]:
        raise ValueError(f"{path}: trace contains no CVs")
    if not by_role["sv"]:
        arrays["sv"] = np.empty((len(slots), 0, 2))
    if rsu_xy is None:
        xs = arrays["cv"][:, :, 0]
        rsu_xy = ((xs.min() + xs.max()) / 2.0, 0.0)
    return MobilityTrace(cv_xy=arrays["cv"], sv_xy=arrays["sv"], rsu_xy=np.asarray(rsu_xy, float))
