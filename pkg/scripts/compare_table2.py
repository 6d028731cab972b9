"""Print the simulated Table-II rows next to the published values."""

import argparse
import csv

from tomofid.measured import (
    STATE4_DISCORD_ENSEMBLE,
    STATE4_DISCORD_WERNER,
    STATE4_EM_ENSEMBLE,
    STATE4_EM_WERNER,
    WERNER_TARGETS,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("table2_csv")
    args = ap.parse_args()
    with open(args.table2_csv) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    print(f"{'state':>5} {'p_w':>14} {'quoted p':>10} {'e_m':>16} {'D':>16} {'D_werner':>16}")
    for r in rows:
        k = int(r["state"])
        p, err = WERNER_TARGETS[k - 1]
        print(
            f"{k:>5} {float(r['p_w']):6.3f}+/-{float(r['p_w_err']):.3f} {p:5.2f}+/-{err:.2f}"
            f" {float(r['em_direct']):7.3f}+/-{float(r['em_direct_err']):.3f}"
            f" {float(r['D_direct']):7.3f}+/-{float(r['D_direct_err']):.3f}"
            f" {float(r['D_werner']):7.3f}+/-{float(r['D_werner_err']):.3f}"
        )
    print("published state 4: e_m %.2f+/-%.2f (Werner %.2f+/-%.2f), D %.2f+/-%.2f (Werner %.2f+/-%.2f)"
          % (*STATE4_EM_ENSEMBLE, *STATE4_EM_WERNER, *STATE4_DISCORD_ENSEMBLE, *STATE4_DISCORD_WERNER))


if __name__ == "__main__":
    main()
