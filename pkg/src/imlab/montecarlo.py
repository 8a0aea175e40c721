"""Monte Carlo symbol-error-probability estimation.

Channel model: Y = sqrt(S) X + I + N with unit-power complex Gaussian noise
(two real Gaussians of variance 1/2) and optional Nakagami-m interference.
Trials run in fixed 65536-draw blocks, each with its own counter-derived RNG
stream, so results are bit-identical regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detector import DetectorKind, MlgConfig, detect
from .interference import InterferenceParams, sample_interference

__all__ = [
    "ChannelParams",
    "SepEstimate",
    "simulate_sep",
    "simulate_sep_multi",
    "sep_sweep",
    "write_sweep_csv",
]

_BLOCK = 65_536


@dataclass(frozen=True)
class ChannelParams:
    """Transmit power S (linear) against fixed unit-power noise.

    no_interference zeroes the I term of the channel equation; it exists as
    an explicit flag because Omega = 0 is outside the interference domain.
    """

    s_lin: float
    no_interference: bool = False
    noise_power: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not (self.s_lin >= 0.0 and math.isfinite(self.s_lin)):
            raise ValueError("s_lin must be finite and >= 0")

    @classmethod
    def from_snr_db(cls, snr_db, no_interference=False):
        return cls(10.0 ** (float(snr_db) / 10.0), no_interference)

    @property
    def snr_db(self):
        return 10.0 * math.log10(self.s_lin)


@dataclass(frozen=True)
class SepEstimate:
    trials: int
    errors: int
    sep: float = field(init=False)
    ci95_half: float = field(init=False)

    def __post_init__(self):
        if not (0 <= self.errors <= self.trials):
            raise ValueError("need 0 <= errors <= trials")
        p = self.errors / self.trials
        object.__setattr__(self, "sep", p)
        object.__setattr__(
            self, "ci95_half", 1.96 * math.sqrt(p * (1.0 - p) / self.trials)
        )


def _seed_key(seed):
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def _block_draws(constellation, ch, intf, n, rng):
    """One block of channel realizations: symbol indices and observations."""
    idx = rng.integers(0, len(constellation), n)
    noise_re = rng.standard_normal(n)
    noise_im = rng.standard_normal(n)
    y = (
        math.sqrt(ch.s_lin) * constellation.points[idx]
        + math.sqrt(0.5) * (noise_re + 1j * noise_im)
    )
    if not ch.no_interference:
        y = y + sample_interference(intf, rng, n)
    return idx, y


def simulate_sep_multi(
    constellation, kinds, ch, intf, trials, seed, cfgs=None, threads=1
):
    """SEP for several detectors on identical draws (common random numbers).

    kinds is a list of DetectorKind; cfgs maps list position -> MlgConfig
    (a single default config is built for all 'mlg' entries when omitted).
    Returns one SepEstimate per kind, in order.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not ch.no_interference and intf is None:
        raise ValueError("interference parameters required unless disabled")
    if cfgs is None:
        default_cfg = (
            MlgConfig(intf)
            if any(k.tag == "mlg" for k in kinds) and intf is not None
            else None
        )
        cfgs = [default_cfg if k.tag == "mlg" else None for k in kinds]

    key = _seed_key(seed)
    n_blocks = (trials + _BLOCK - 1) // _BLOCK

    def _run_block(b):
        n = min(_BLOCK, trials - b * _BLOCK)
        rng = np.random.default_rng([*key, b])
        idx, y = _block_draws(constellation, ch, intf, n, rng)
        return [
            int(np.count_nonzero(
                detect(y, constellation, ch.s_lin, kind, cfg) != idx
            ))
            for kind, cfg in zip(kinds, cfgs)
        ]

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_block = list(pool.map(_run_block, range(n_blocks)))
    else:
        per_block = [_run_block(b) for b in range(n_blocks)]

    totals = [sum(block[i] for block in per_block) for i in range(len(kinds))]
    return [SepEstimate(trials=trials, errors=e) for e in totals]


def simulate_sep(constellation, kind, ch, intf, trials, seed, cfg=None, threads=1):
    """SEP of a single detector; see simulate_sep_multi for the draw protocol."""
    cfgs = None if cfg is None else [cfg]
    return simulate_sep_multi(
        constellation, [kind], ch, intf, trials, seed, cfgs=cfgs, threads=threads
    )[0]


def _resolve_kind(tag, intf):
    if tag == "mlg":
        return DetectorKind.mlg()
    if tag == "cai":
        # benchmark convention: constant amplitude at the RMS interference level
        return DetectorKind.cai(math.sqrt(intf.omega))
    if tag == "eucl":
        return DetectorKind.euclidean()
    raise ValueError(f"unknown detector tag {tag!r}")


def sep_sweep(
    constellation,
    kinds,
    ch,
    intf_base,
    gamma_grid_db,
    trials,
    seed,
    epsilon=1e-3,
    r_max=4.0,
    threads=1,
):
    """SEP versus gamma = S/Omega, holding S fixed and setting Omega = S/gamma.

    kinds is a list of tags from {'mlg', 'cai', 'eucl'}; every detector at a
    sweep point sees identical realizations (CRN), and each point gets its
    own RNG substream of seed.  Returns a list of
    (gamma_db, {tag: SepEstimate}) rows.
    """
    if len(gamma_grid_db) == 0:
        raise ValueError("gamma grid must be non-empty")
    m = intf_base.m
    rows = []
    for i, gamma_db in enumerate(gamma_grid_db):
        inr_db = ch.snr_db - gamma_db
        intf = InterferenceParams.from_inr_db(m, inr_db)
        kind_objs = [_resolve_kind(t, intf) for t in kinds]
        cfgs = [
            MlgConfig(intf, epsilon=epsilon, r_max=r_max) if t == "mlg" else None
            for t in kinds
        ]
        ests = simulate_sep_multi(
            constellation,
            kind_objs,
            ch,
            intf,
            trials,
            seed=(*_seed_key(seed), i),
            cfgs=cfgs,
            threads=threads,
        )
        rows.append((float(gamma_db), dict(zip(kinds, ests))))
    return rows


def write_sweep_csv(rows, kinds, path):
    """CSV with `gamma_db` plus ser/ci column pairs for the requested kinds,
    in canonical mlg, cai, eucl order."""
    order = [t for t in ("mlg", "cai", "eucl") if t in kinds]
    header = "gamma_db," + ",".join(f"ser_{t},ci_{t}" for t in order)
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        for gamma_db, by_kind in rows:
            cells = [repr(float(gamma_db))]
            for t in order:
                est = by_kind[t]
                cells.append(repr(est.sep))
                cells.append(repr(est.ci95_half))
            f.write(",".join(cells) + "\n")
