"""The CHSH game: classical ceiling, the entangled strategy, and a Bell
certificate that the entangled behavior lies outside the shared-randomness
polytope.
"""

import numpy as np

from qcoord import bell_lp
from qcoord.games import chsh_quantum_policy, classical_optimum, exact_win_probability, make_chsh, play_batch
from qcoord.policies import factorized

game = make_chsh()

# No strategy without entanglement beats 3/4.
value, profile = classical_optimum(game)
print(f"classical optimum: {value} (e.g. both always answer {profile[0][0]})")

# The Bell-state strategy wins with probability cos^2(pi/8) ~ 0.8536.
policy = chsh_quantum_policy()
exact = exact_win_probability(game, policy)
print(f"entangled strategy exact win probability: {exact:.10f}")
print(f"cos^2(pi/8)                             : {np.cos(np.pi / 8) ** 2:.10f}")

# The referee is a black box: playing many rounds reproduces the exact value.
rng = np.random.default_rng(7)
_, _, verdicts = play_batch(game, policy, rng, 200_000)
print(f"empirical win rate over 200k rounds: {verdicts.mean():.4f}")

# Certification: the entangled behavior is a point outside the polytope of
# shared-randomness policies, witnessed by a separating hyperplane (a Bell
# inequality) that every deterministic classical strategy satisfies.
table = bell_lp.tabulate_policy(policy)
cert = bell_lp.membership(table)
print(f"\nmembership verdict: {cert.verdict}, violation {cert.violation:.6f}")
print("certificate re-verified:", bell_lp.verify_certificate(cert, table))

# Classical policies come back inside, with an explicit convex decomposition
# into deterministic strategies.
classical = factorized(game.space(), [[0, 0], [0, 0]])
cert2 = bell_lp.membership(bell_lp.tabulate_policy(classical))
print(f"always-zero policy: {cert2.verdict}, decomposition residual {cert2.residual:.2e}")
