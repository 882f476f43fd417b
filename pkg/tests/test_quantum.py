import numpy as np
import pytest

from qcoord import cmatrix as cm
from qcoord import quantum as qt

from fdcheck import fd_grad_complex, rel_err


def random_logits(rng, m, d, scale=1.0):
    z = scale * (rng.standard_normal((m, d, d)) + 1j * rng.standard_normal((m, d, d)))
    return qt.PovmLogits(z)


def assert_valid_povm(elements):
    e = np.asarray(elements)
    assert np.max(np.abs(e - e.conj().swapaxes(-1, -2))) <= 1e-10
    assert np.min(np.linalg.eigvalsh(e)) >= -1e-9
    assert np.linalg.norm(e.sum(axis=0) - np.eye(e.shape[-1])) <= 1e-8


class TestQuantumSoftmax:
    def test_zero_logits_split_identity(self):
        povm, s = qt.quantum_softmax(qt.PovmLogits(np.zeros((2, 2, 2), dtype=complex)))
        assert np.allclose(povm.elements[0], np.eye(2) / 2)
        assert np.allclose(povm.elements[1], np.eye(2) / 2)
        assert np.allclose(s, 2 * np.eye(2))

    def test_dim_one_reduces_to_softmax(self):
        rng = np.random.default_rng(10)
        z = (rng.standard_normal(4) + 1j * rng.standard_normal(4)).reshape(4, 1, 1)
        povm, _ = qt.quantum_softmax(qt.PovmLogits(z))
        expected = np.exp(z.real.ravel())
        expected /= expected.sum()
        assert np.allclose(povm.elements.ravel().real, expected)

    def test_log_logits_recover_strictly_positive_povm(self):
        rng = np.random.default_rng(11)
        target, _ = qt.quantum_softmax(random_logits(rng, 3, 2))
        z = np.stack([cm.logm_pd(p) for p in target.elements])
        recovered, s = qt.quantum_softmax(qt.PovmLogits(z))
        assert np.max(np.abs(recovered.elements - target.elements)) <= 1e-9
        # sum of exponentials of log effects is the identity
        assert qt.conditioning_penalty(s) <= 1e-18

    def test_random_outputs_are_valid_povms(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            m = int(rng.integers(2, 5))
            d = int(rng.integers(1, 5))
            povm, _ = qt.quantum_softmax(random_logits(rng, m, d))
            assert_valid_povm(povm.elements)

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(13)
        z = rng.standard_normal((5, 3, 2, 2)) + 1j * rng.standard_normal((5, 3, 2, 2))
        p_batch, s_batch, _ = qt.quantum_softmax_batch(z)
        for k in range(5):
            povm, s = qt.quantum_softmax(qt.PovmLogits(z[k]))
            assert np.allclose(p_batch[k], povm.elements)
            assert np.allclose(s_batch[k], s)


class TestQuantumSoftmaxVjp:
    def test_constant_loss_zero_gradient(self):
        rng = np.random.default_rng(14)
        logits = random_logits(rng, 3, 2)
        # L = tr(sum_j P_j) / m is constant d/m, so the cotangent I/m on
        # every element must backpropagate to zero.
        cot = np.broadcast_to(np.eye(2) / 3, (3, 2, 2)).astype(complex)
        g = qt.quantum_softmax_vjp(logits, cot)
        assert np.max(np.abs(g)) <= 1e-12

    @pytest.mark.parametrize("m,d", [(2, 2), (3, 2), (2, 3), (4, 1)])
    def test_matches_finite_differences(self, m, d):
        rng = np.random.default_rng(15 + m * 10 + d)
        logits = random_logits(rng, m, d)
        rho = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        rho = rho.conj().T @ rho
        rho /= np.trace(rho).real

        def loss(z):
            p, _, _ = qt.quantum_softmax_batch(z)
            return float(np.trace(rho @ p[0]).real)

        p, _, cache = qt.quantum_softmax_batch(logits.logits)
        cot = np.zeros_like(p)
        cot[0] = rho.conj().T  # d Re tr(rho P) / dP
        exact = qt.quantum_softmax_vjp_batch(cache, cot)
        approx = fd_grad_complex(loss, logits.logits)
        assert rel_err(approx, exact) <= 1e-4

    def test_s_cotangent_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        logits = random_logits(rng, 2, 2)

        def loss(z):
            _, s, _ = qt.quantum_softmax_batch(z)
            return qt.conditioning_penalty(s)

        _, s, cache = qt.quantum_softmax_batch(logits.logits)
        exact = qt.quantum_softmax_vjp_batch(
            cache, np.zeros((2, 2, 2), dtype=complex), qt.conditioning_penalty_grad(s)
        )
        approx = fd_grad_complex(loss, logits.logits)
        assert rel_err(approx, exact) <= 1e-4

    def test_dim_one_matches_softmax_jacobian(self):
        rng = np.random.default_rng(17)
        z = (rng.standard_normal(3) + 1j * rng.standard_normal(3)).reshape(3, 1, 1)
        p, _, cache = qt.quantum_softmax_batch(z)
        probs = p.ravel().real
        for j in range(3):
            cot = np.zeros((3, 1, 1), dtype=complex)
            cot[j] = 1.0
            g = qt.quantum_softmax_vjp_batch(cache, cot).ravel()
            jac = probs[j] * ((np.arange(3) == j) - probs)
            assert np.allclose(g.real, jac, atol=1e-12)
            assert np.allclose(g.imag, 0.0, atol=1e-12)

    def test_degenerate_eigenvalues_stay_finite(self):
        # equal diagonal logits force exactly degenerate spectra
        z = np.stack([np.eye(2), 2 * np.eye(2)]).astype(complex)
        logits = qt.PovmLogits(z)
        cot = np.ones((2, 2, 2), dtype=complex)
        g = qt.quantum_softmax_vjp(logits, cot)
        assert np.all(np.isfinite(g.view(np.float64)))

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(18)
        logits = random_logits(rng, 2, 2)
        with pytest.raises(ValueError):
            qt.quantum_softmax_vjp(logits, np.zeros((3, 2, 2), dtype=complex))


class TestDensityFromFactor:
    def test_identity_factor(self):
        rho = qt.density_from_factor(qt.DensityFactor(np.eye(2, dtype=complex)))
        assert np.allclose(rho.matrix, np.eye(2) / 2)

    def test_pure_state(self):
        rho = qt.density_from_factor(qt.DensityFactor(np.diag([1.0, 0.0]).astype(complex)))
        assert np.allclose(rho.matrix, np.diag([1.0, 0.0]))

    def test_bell_state_factor(self):
        b = np.zeros((4, 4), dtype=complex)
        b[0, 0] = b[0, 3] = 1.0
        rho = qt.density_from_factor(qt.DensityFactor(b))
        assert np.allclose(rho.matrix, qt.bell_state().matrix, atol=1e-12)

    def test_zero_factor_rejected(self):
        with pytest.raises(ValueError):
            qt.DensityFactor(np.zeros((2, 2), dtype=complex))

    def test_vjp_matches_finite_differences(self):
        rng = np.random.default_rng(19)
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        w = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        w = w.conj().T @ w  # hermitian weight

        def loss(bmat):
            rho = qt.density_from_factor(qt.DensityFactor(bmat))
            return float(np.trace(w @ rho.matrix).real)

        rho_bar = w.conj().T
        exact = qt.density_from_factor_vjp(b, rho_bar)
        approx = fd_grad_complex(loss, b)
        assert rel_err(approx, exact) <= 1e-4


class TestBornJoint:
    def test_maximally_mixed_uniform(self):
        rho = qt.DensityMatrix(np.eye(4, dtype=complex) / 4)
        meas = qt.Povm(np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex))
        table = qt.born_joint(rho, [meas, meas])
        assert np.allclose(table, 0.25)

    def test_bell_state_equal_bits(self):
        theta = np.pi / 8
        v = np.array([np.cos(theta), np.sin(theta)])
        proj = np.outer(v, v)
        m = qt.Povm(np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex))
        n = qt.Povm(np.stack([proj, np.eye(2) - proj]).astype(complex))
        table = qt.born_joint(qt.bell_state(), [m, n])
        p_equal = table[0, 0] + table[1, 1]
        assert p_equal == pytest.approx(np.cos(np.pi / 8) ** 2, abs=1e-12)
        assert table[0, 0] == pytest.approx(0.5 * np.cos(np.pi / 8) ** 2, abs=1e-12)

    def test_random_measurements_normalize(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            rho = qt.density_from_factor(qt.DensityFactor(b))
            povms = [qt.quantum_softmax(random_logits(rng, 3, 2))[0] for _ in range(2)]
            table = qt.born_joint(rho, povms)
            assert abs(table.sum() - 1.0) <= 1e-9
            assert np.all(table >= 0)

    def test_product_state_marginals_independent(self):
        rng = np.random.default_rng(21)
        rho_a = qt.density_from_factor(
            qt.DensityFactor(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        )
        rho_b = qt.density_from_factor(
            qt.DensityFactor(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        )
        rho = qt.DensityMatrix(cm.kron(rho_a.matrix, rho_b.matrix))
        meas_a = qt.quantum_softmax(random_logits(rng, 2, 2))[0]
        marg = None
        for _ in range(5):
            meas_b = qt.quantum_softmax(random_logits(rng, 3, 2))[0]
            table = qt.born_joint(rho, [meas_a, meas_b])
            m = table.sum(axis=1)
            if marg is None:
                marg = m
            assert np.allclose(m, marg, atol=1e-10)

    def test_dimension_mismatch(self):
        rho = qt.DensityMatrix(np.eye(4, dtype=complex) / 4)
        meas = qt.Povm(np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex))
        with pytest.raises(ValueError):
            qt.born_joint(rho, [meas, meas, meas])

    def test_three_agents(self):
        rho = qt.DensityMatrix(np.eye(8, dtype=complex) / 8)
        meas = qt.Povm(np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex))
        table = qt.born_joint(rho, [meas, meas, meas])
        assert table.shape == (2, 2, 2)
        assert np.allclose(table, 1 / 8)


class TestJointTableVjp:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_matches_finite_differences(self, n):
        rng = np.random.default_rng(30 + n)
        d = 2
        b = rng.standard_normal((d**n, d**n)) + 1j * rng.standard_normal((d**n, d**n))
        rho = qt.density_from_factor(qt.DensityFactor(b)).matrix
        stacks = []
        for _ in range(n):
            povm, _ = qt.quantum_softmax(random_logits(rng, 2, d))
            stacks.append(povm.elements)
        g = rng.standard_normal((2,) * n)

        rho_bar, stack_bars = qt.joint_table_vjp(rho, stacks, g)

        def loss_rho(r):
            return float(np.sum(g * qt.joint_table(r, stacks)))

        approx_rho = fd_grad_complex(loss_rho, rho)
        assert rel_err(approx_rho, rho_bar) <= 1e-6

        for k in range(n):
            def loss_stack(s, k=k):
                new = list(stacks)
                new[k] = s
                return float(np.sum(g * qt.joint_table(rho, new)))

            approx = fd_grad_complex(loss_stack, stacks[k])
            assert rel_err(approx, stack_bars[k]) <= 1e-6

    def test_grid_lead_matches_percell(self):
        rng = np.random.default_rng(40)
        d = 2
        rho = qt.bell_state().matrix
        s1 = np.stack([qt.quantum_softmax(random_logits(rng, 2, d))[0].elements for _ in range(3)])
        s2 = np.stack([qt.quantum_softmax(random_logits(rng, 2, d))[0].elements for _ in range(2)])
        table = qt.joint_table(rho, [s1, s2], lead="grid")
        assert table.shape == (3, 2, 2, 2)
        for i in range(3):
            for j in range(2):
                cell = qt.joint_table(rho, [s1[i], s2[j]])
                assert np.allclose(table[i, j], cell)

    def test_batch_lead_matches_percell(self):
        rng = np.random.default_rng(41)
        rho = qt.bell_state().matrix
        s1 = np.stack([qt.quantum_softmax(random_logits(rng, 2, 2))[0].elements for _ in range(4)])
        s2 = np.stack([qt.quantum_softmax(random_logits(rng, 2, 2))[0].elements for _ in range(4)])
        table = qt.joint_table(rho, [s1, s2], lead="batch")
        assert table.shape == (4, 2, 2)
        for i in range(4):
            assert np.allclose(table[i], qt.joint_table(rho, [s1[i], s2[i]]))


class TestConditioningPenalty:
    def test_identity_is_zero(self):
        assert qt.conditioning_penalty(np.eye(3)) == 0.0

    def test_doubled_identity(self):
        assert qt.conditioning_penalty(2 * np.eye(2)) == pytest.approx(2.0)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(50)
        s = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        s = s.conj().T @ s + np.eye(2)
        exact = qt.conditioning_penalty_grad(s)
        approx = fd_grad_complex(lambda m: qt.conditioning_penalty(m), s)
        assert rel_err(approx, exact) <= 1e-6


class TestTypeInvariants:
    def test_povm_rejects_incomplete(self):
        with pytest.raises(ValueError):
            qt.Povm(np.stack([np.eye(2), np.eye(2)]).astype(complex))

    def test_povm_rejects_non_psd(self):
        bad = np.stack([np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])]).astype(complex)
        with pytest.raises(ValueError):
            qt.Povm(bad)

    def test_density_rejects_wrong_trace(self):
        with pytest.raises(ValueError):
            qt.DensityMatrix(np.eye(2, dtype=complex))

    def test_density_rejects_non_hermitian(self):
        m = np.array([[0.5, 0.3], [0.0, 0.5]], dtype=complex)
        with pytest.raises(ValueError):
            qt.DensityMatrix(m)
