"""Numerical verification of the error and distribution-distance bounds.

Walks the majority-vote error bound (exact binomial vs Hoeffding vs Monte
Carlo), the minimum-voter table, one total-variation chain through a noisy
labeling channel, the Hellinger/TV inequality readings, and the
generalization bound's sample-size behavior.
"""
import numpy as np

from wsganlab.theory import (
    TheoryInputs,
    generalization_bound,
    hellinger_tv_entry,
    min_lfs,
    mv_error_bound,
    mv_error_exact,
    simulate_mv_error,
    random_finite_joint,
    verify_rcgan_tv_chain,
)

print("majority vote of m voters, each wrong with rate eps = 0.5 - alpha:")
print(f"{'m':>3} {'alpha':>6} {'exact':>9} {'bound':>9} {'monte carlo (100k)':>20}")
for m in (3, 7, 15):
    for alpha in (0.1, 0.2, 0.3):
        exact = mv_error_exact(m, 0.5 - alpha)
        bound = mv_error_bound(m, alpha)
        est, se = simulate_mv_error(m, 0.5 - alpha, 100_000, seed=m * 1000 + int(alpha * 100))
        print(f"{m:>3} {alpha:>6.1f} {exact:>9.5f} {bound:>9.5f} {est:>12.5f} +/- {3 * se:.5f}")

print("\nvoters needed to push the majority-vote error below a target:")
for eps in (0.1, 0.2, 0.25, 0.3, 0.4):
    m = min_lfs(eps)
    print(f"  target {eps:.2f}: m = {m:>3}  (bound {mv_error_bound(m, 0.5 - eps):.4f}, exact {mv_error_exact(m, eps):.4f})")

print("\none total-variation chain through a 30%-noise labeling channel:")
rng = np.random.default_rng(6)
P = random_finite_joint(rng, 12)
Q = random_finite_joint(rng, 12)
entry = verify_rcgan_tv_chain(P, Q, eps=0.3, with_mv=(min_lfs(0.2), 0.2))
for check in entry.checks:
    print(f"  [{'ok' if check.passed else 'BAD'}] {check.name}: {check.lhs:.6f} <= {check.rhs:.6f}")

print("\nHellinger vs TV on 1000 random pairs:")
entry = hellinger_tv_entry(num_pairs=1000, seed=7)
print(f"  {entry.notes}")

print("\ngeneralization bound vs real-sample count (all else default):")
for n1 in (1_000, 10_000, 100_000):
    value = generalization_bound(TheoryInputs(n1=n1))
    print(f"  n1 = {n1:>7,}: bound {value:.4f}")
