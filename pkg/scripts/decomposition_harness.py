"""Mean-square gap between the exact R~_2 and its simple-cycle product form.

Weights are the free-energy Hermite weights of a Gaussian Wigner matrix.
"""

import argparse

from spinlab.ensembles import DisorderSpec, sample_wigner
from spinlab.multigraph import hermite_weights, product_decomposition_harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", nargs="*", type=float, default=[0.3, 0.5])
    ap.add_argument("--Ns", nargs="*", type=int, default=[3, 4, 5, 6])
    ap.add_argument("--draws", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for beta in args.betas:
        def sample(N, rng, beta=beta):
            return hermite_weights(sample_wigner(DisorderSpec(), N, int(rng.integers(2**62))), beta)
        rep = product_decomposition_harness(sample, tuple(args.Ns), args.draws, args.seed)
        for N, m, s in zip(rep.Ns, rep.mean_square, rep.stderr):
            print(f"beta={beta} N={N} mean_square {m:.3e} +- {s:.1e}")
        print(f"beta={beta} decreasing in N: {rep.decreasing}")


if __name__ == "__main__":
    main()
