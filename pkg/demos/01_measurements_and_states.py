"""Differentiable quantum measurements and Born-rule probabilities.

Walks through the core objects: turning unconstrained complex logit matrices
into valid measurements, preparing shared states, and computing joint outcome
probabilities, including the correlations of the two-qubit Bell state.
"""

import numpy as np

from qcoord import quantum as qt
from qcoord.cmatrix import logm_pd

rng = np.random.default_rng(0)

# Any tuple of complex square matrices becomes a valid measurement: each
# effect is positive semidefinite and the effects sum to the identity.
logits = qt.PovmLogits(rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2)))
povm, s = qt.quantum_softmax(logits)
print("effects are Hermitian PSD, completing to the identity:")
print("  min eigenvalue:", np.linalg.eigvalsh(povm.elements).min())
print("  completeness residual:", np.linalg.norm(povm.elements.sum(axis=0) - np.eye(2)))

# The transform is onto (up to closure): matrix-log logits recover any
# strictly positive target measurement, and there the normalizer S is exactly
# the identity, which is what the conditioning penalty encourages.
target, _ = qt.quantum_softmax(
    qt.PovmLogits(rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2)))
)
recovered, s_rec = qt.quantum_softmax(qt.PovmLogits(np.stack([logm_pd(p) for p in target.elements])))
print("recovery error from log-logits:", np.max(np.abs(recovered.elements - target.elements)))
print("conditioning penalty at the recovery point:", qt.conditioning_penalty(s_rec))

# With one-dimensional systems the transform is the ordinary softmax.
z = rng.standard_normal(4).reshape(4, 1, 1).astype(complex)
povm1d, _ = qt.quantum_softmax(qt.PovmLogits(z))
softmax = np.exp(z.real.ravel()) / np.exp(z.real.ravel()).sum()
print("d=1 reduces to softmax, max diff:", np.max(np.abs(povm1d.elements.ravel().real - softmax)))

# Shared states: the Bell state correlates two qubits beyond anything a
# shared coin could do. Measuring both sides in bases separated by angle
# theta gives agreement probability cos^2(theta).
bell = qt.bell_state()


def basis(theta):
    v = np.array([np.cos(theta), np.sin(theta)])
    p = np.outer(v, v)
    return qt.Povm(np.stack([p, np.eye(2) - p]).astype(complex))


for theta in (0.0, np.pi / 8, np.pi / 4):
    table = qt.born_joint(bell, [basis(0.0), basis(theta)])
    agree = table[0, 0] + table[1, 1]
    print(f"bell-state agreement at angle {theta:.3f}: {agree:.6f} (cos^2 = {np.cos(theta) ** 2:.6f})")
