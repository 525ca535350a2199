"""Estimation error against total probe time, with and without coherent noise.

For every noise strength the repetitive scheme is swept over ``m`` and the
adaptive scheme over the number of rounds.  Results go to ``scaling.csv``; the
noiseless log-log slopes and the metastable windows are printed.
"""

import argparse
from pathlib import Path

import numpy as np

from iterqpe.analysis import estimate_adaptive, estimate_repetitive, scaling_fit
from iterqpe.channel import RimSettings, channel_spectrum, noisy_rim_superop
from iterqpe.model import NoiseSpec, SpinStarParams, build_coherent_noise, build_spin_star, omegas_for_gamma
from iterqpe.sampler import AdaptivePlan, InitialState, sample_adaptive, sample_repetitive

TILTED = (0.07, 0.07, 0.99508793)


def mean_delta(run, repeats):
    return float(np.mean([run(k).delta for k in range(repeats)]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("results/scaling"))
    ap.add_argument("--gammas", type=float, nargs="+", default=[0.0, 0.02, 0.05])
    ap.add_argument("--m", type=int, nargs="+", default=[125, 250, 500, 1000, 2000, 4000])
    ap.add_argument("--rounds", type=int, nargs="+", default=list(range(5, 11)))
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=4)
    ap.add_argument("--tau", type=float, default=0.2)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    init, s = InitialState(), RimSettings(args.tau)
    rows = ["gamma,scheme,m,t,delta"]
    for gamma in args.gammas:
        p = SpinStarParams.normalized([0.52 / args.tau, 1.04 / args.tau], [TILTED, TILTED])
        v = build_spin_star(p)
        noise = NoiseSpec(coherent=build_coherent_noise(omegas_for_gamma(p, gamma, v.norm))) if gamma else None
        if noise is not None:
            sp = channel_spectrum(noisy_rim_superop(v, noise, s), v.n_distinct)
            print(f"gamma {gamma}: metastable window ({sp.m_low:.0f}, {sp.m_high:.0f})")
        rep = []
        for m in args.m:
            run = lambda k: estimate_repetitive(  # noqa: E731
                sample_repetitive(v, noise, s, m, args.samples, init, 1000 * k + m).histogram(),
                s.tau, s.phi, truth=v.eigenvalues, strict=False,
            )
            rep.append((m * s.tau, mean_delta(run, args.repeats)))
            rows.append(f"{gamma},repetitive,{m},{rep[-1][0]:.6g},{rep[-1][1]:.6g}")
        ada = []
        for r in args.rounds:
            plan = AdaptivePlan(r, 1.25 * v.norm)
            run = lambda k: estimate_adaptive(  # noqa: E731
                sample_adaptive(v, noise, plan, args.samples, init, 1000 * k + r).histogram(),
                plan.tau0, truth=v.eigenvalues, strict=False,
            )
            ada.append((plan.total_time, mean_delta(run, args.repeats)))
            rows.append(f"{gamma},adaptive,{r},{ada[-1][0]:.6g},{ada[-1][1]:.6g}")
        if gamma == 0:
            print(f"noiseless slopes: repetitive {scaling_fit(rep)[0]:.3f}, adaptive {scaling_fit(ada)[0]:.3f}")
        best = min(rep, key=lambda x: x[1])
        print(f"gamma {gamma}: repetitive min delta {best[1]:.2e} at t={best[0]:.0f}; adaptive final {ada[-1][1]:.2e}")
    (args.out_dir / "scaling.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
