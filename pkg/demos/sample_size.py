"""How big a sample does the search train on?

Prints the corrected sample size for a range of dataset sizes, then draws a
validated sample from a skewed label vector and shows the distribution gate.
"""

import numpy as np

from mixmas.sampling import class_distribution, compute_sample_size, validated_sample

print(f"{'N':>17} {'n':>10} {'N_prime':>8}")
for N in (100, 1_000, 10_000, 100_000, 10**12):
    n, n_prime = compute_sample_size(N)
    print(f"{N:>17,} {n:>10.1f} {n_prime:>8}")

rng = np.random.default_rng(0)
labels = rng.permutation(np.repeat([0, 1, 2], [5000, 3000, 2000]))
plan = validated_sample(labels, seed=7)
print(f"\ndrew {plan.N_prime} of {plan.N} in {plan.attempts} attempt(s)")
print("full  :", np.round(class_distribution(labels), 4))
print("sample:", np.round(class_distribution(labels[plan.indices]), 4))
print(f"L-inf distance {plan.distance:.4f} (gate < 0.05)")
