"""The hierarchy of communication-free joint policies.

Factorized policies sit inside shared-randomness policies, which sit inside
entangled policies; all of them are non-signaling. This script builds one of
each over a 2-agent binary space and verifies the inclusions numerically.
"""

import numpy as np

from qcoord import policies as pol
from qcoord import quantum as qt

rng = np.random.default_rng(1)
space = pol.FiniteHistorySpace((2, 2), (2, 2))

# A deterministic factorized policy: each agent answers from its own history.
fact = pol.factorized(space, [[0, 1], [1, 0]])
print("factorized policy at h=(0,1):")
print(fact.joint_distribution((0, 1)))

# A shared-randomness policy: a public coin correlates the local rules.
q = np.array([0.5, 0.5])
locals_ = [rng.standard_normal((2, 2, 2)) for _ in range(2)]
shared = pol.SharedRandomnessPolicy(space, q, locals_)
print("\nshared-randomness policy rows sum to one:",
      np.allclose([shared.joint_distribution(h).sum() for h in space.joint_histories()], 1.0))

# Every shared-randomness policy embeds as an entangled policy with a
# diagonal state and diagonal measurements; the distribution is unchanged.
embedded = pol.embed_shared_randomness(shared)
worst = max(
    np.max(np.abs(shared.joint_distribution(h) - embedded.joint_distribution(h)))
    for h in space.joint_histories()
)
print("embedding reproduces the distribution, worst cell error:", worst)

# A genuinely entangled policy: a trainable state and per-history logits.
b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
measurements = [
    [qt.PovmLogits(rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2)))
     for _ in range(2)]
    for _ in range(2)
]
entangled = pol.EntangledPolicy(space, qt.DensityFactor(b), measurements)

# All of these are non-signaling: no agent subset's marginal can depend on
# the other agents' histories.
for name, policy in [("factorized", fact), ("shared-randomness", shared), ("entangled", entangled)]:
    report = pol.check_non_signaling(policy, tolerance=1e-9)
    print(f"{name:18s} non-signaling: {report.ok} (worst deviation {report.max_violation:.2e})")

# A signaling policy fails the check: agent 1 simply copies agent 2's history.
tables = {}
for h1 in range(2):
    for h2 in range(2):
        t = np.zeros((2, 2))
        t[h2, 0] = 1.0
        tables[(h1, h2)] = t
signaling = pol.ExplicitPolicy(space, tables)
report = pol.check_non_signaling(signaling)
print(f"copying policy flagged: ok={report.ok}, deviation={report.max_violation:.2f}")
