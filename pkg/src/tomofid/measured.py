"""Published measurement tables used as simulation targets and check values.

Each squeezed-thermal row carries the homodyne-reconstructed variances, the
total photon number and the quoted squeezing factor / purity, every value
with its quoted uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class StsRow:
    index: int
    vxx: float
    vxx_err: float
    vpp: float
    vpp_err: float
    n_tot: float
    n_tot_err: float
    s: float
    s_err: float
    mu: float
    mu_err: float


# fmt: off
STS_ROWS: tuple[StsRow, ...] = (
    StsRow(1,  0.48, 0.03, 3.15, 0.09, 0.41, 0.02, 0.39, 0.01, 0.81, 0.03),
    StsRow(2,  0.67, 0.04, 3.33, 0.09, 0.50, 0.02, 0.45, 0.01, 0.67, 0.02),
    StsRow(3,  0.62, 0.04, 3.77, 0.11, 0.60, 0.02, 0.40, 0.02, 0.66, 0.02),
    StsRow(4,  0.69, 0.05, 3.94, 0.11, 0.66, 0.02, 0.41, 0.02, 0.61, 0.02),
    StsRow(5,  0.70, 0.05, 4.51, 0.12, 0.80, 0.03, 0.39, 0.02, 0.56, 0.02),
    StsRow(6,  0.77, 0.05, 4.54, 0.13, 0.83, 0.03, 0.41, 0.02, 0.54, 0.02),
    StsRow(7,  0.77, 0.05, 4.60, 0.13, 0.84, 0.03, 0.41, 0.02, 0.53, 0.02),
    StsRow(8,  0.93, 0.06, 5.00, 0.14, 0.98, 0.03, 0.43, 0.02, 0.46, 0.02),
    StsRow(9,  0.95, 0.06, 5.36, 0.15, 1.08, 0.03, 0.42, 0.01, 0.44, 0.02),
    StsRow(10, 0.93, 0.07, 5.56, 0.15, 1.12, 0.03, 0.41, 0.02, 0.44, 0.02),
    StsRow(11, 1.00, 0.07, 5.80, 0.17, 1.20, 0.03, 0.42, 0.02, 0.42, 0.02),
    StsRow(12, 1.13, 0.07, 5.87, 0.16, 1.25, 0.03, 0.44, 0.02, 0.39, 0.01),
    StsRow(13, 1.11, 0.08, 6.33, 0.18, 1.36, 0.04, 0.42, 0.02, 0.38, 0.01),
    StsRow(14, 1.30, 0.08, 6.16, 0.18, 1.36, 0.04, 0.46, 0.02, 0.35, 0.01),
)
# fmt: on

M_SAMPLES = 7000
N_MC = 1000

# Nonclassical reference target for the wide fidelity balloons.
BALLOON_TARGET = (0.41, 0.53)

# Werner targets of the four polarization experiments: (p, quoted error).
WERNER_TARGETS: tuple[tuple[float, float], ...] = (
    (0.32, 0.04),
    (0.35, 0.04),
    (0.28, 0.04),
    (0.44, 0.05),
)

# Ensemble statistics of the p=0.44 experiment, as (mean, error).
STATE4_EM_ENSEMBLE = (-0.07, 0.03)
STATE4_EM_WERNER = (-0.08, 0.04)
STATE4_DISCORD_ENSEMBLE = (0.14, 0.02)
STATE4_DISCORD_WERNER = (0.21, 0.04)
STATE4_FIDELITY = 0.985


def sts_row(index: int) -> StsRow:
    for row in STS_ROWS:
        if row.index == index:
            return row
    raise KeyError(f"no squeezed-thermal row {index}")
