import numpy as np
import pytest

from qcoord import cmatrix as cm


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, d):
    return cm.hermitian_part(random_complex(rng, d, d))


class TestHermitianPart:
    def test_identity_fixed_point(self):
        assert np.allclose(cm.hermitian_part(np.eye(2)), np.eye(2))

    def test_forced_by_definition(self):
        z = np.array([[0.0, 2.0], [0.0, 0.0]])
        assert np.allclose(cm.hermitian_part(z), np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_result_is_hermitian(self):
        rng = np.random.default_rng(0)
        z = random_complex(rng, 3, 3)
        h = cm.hermitian_part(z)
        assert np.max(np.abs(h - h.conj().T)) <= 1e-15

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            cm.hermitian_part(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        z = np.full((2, 2), np.nan, dtype=complex)
        with pytest.raises(ValueError):
            cm.hermitian_part(z)


class TestEigHermitian:
    def test_diagonal_spectrum_ascending(self):
        e = cm.eig_hermitian(np.diag([3.0, 1.0]).astype(complex))
        assert np.allclose(e.eigenvalues, [1.0, 3.0])

    def test_pauli_x_spectrum(self):
        e = cm.eig_hermitian(np.array([[0, 1], [1, 0]], dtype=complex))
        assert np.allclose(e.eigenvalues, [-1.0, 1.0])

    def test_reconstruction_and_unitarity(self):
        rng = np.random.default_rng(1)
        a = random_hermitian(rng, 4)
        e = cm.eig_hermitian(a)
        rel = np.linalg.norm(e.reconstruct() - a) / np.linalg.norm(a)
        assert rel <= 1e-10
        u = e.eigenvectors
        assert np.linalg.norm(u.conj().T @ u - np.eye(4)) <= 1e-10

    def test_reconstruction_up_to_dim_16(self):
        rng = np.random.default_rng(2)
        for d in (2, 5, 9, 16):
            a = random_hermitian(rng, d)
            e = cm.eig_hermitian(a)
            assert np.linalg.norm(e.reconstruct() - a) / np.linalg.norm(a) <= 1e-10

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            cm.eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


class TestExpmHermitian:
    def test_zero_maps_to_identity(self):
        assert np.allclose(cm.expm_hermitian(np.zeros((3, 3))), np.eye(3))

    def test_diagonal_logs(self):
        a = np.diag([np.log(2.0), np.log(3.0)]).astype(complex)
        assert np.allclose(cm.expm_hermitian(a), np.diag([2.0, 3.0]))

    def test_inverse_identity(self):
        rng = np.random.default_rng(3)
        a = random_hermitian(rng, 4)
        prod = cm.expm_hermitian(a) @ cm.expm_hermitian(-a)
        assert np.linalg.norm(prod - np.eye(4)) <= 1e-9

    def test_output_positive_definite(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a = random_hermitian(rng, 3) * 3
            w = np.linalg.eigvalsh(cm.expm_hermitian(a))
            assert np.all(w > 0)

    def test_saturation_error(self):
        with pytest.raises(cm.SaturationError):
            cm.expm_hermitian(np.diag([800.0, 0.0]).astype(complex))


class TestInvSqrtPsd:
    def test_scaled_identity(self):
        assert np.allclose(cm.inv_sqrt_psd(4.0 * np.eye(2)), 0.5 * np.eye(2))

    def test_diagonal(self):
        assert np.allclose(
            cm.inv_sqrt_psd(np.diag([1.0, 4.0]).astype(complex)), np.diag([1.0, 0.5])
        )

    def test_sandwich_identity(self):
        rng = np.random.default_rng(5)
        b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a = b.conj().T @ b + np.eye(4)
        x = cm.inv_sqrt_psd(a)
        assert np.linalg.norm(x @ a @ x - np.eye(4)) <= 1e-9

    def test_ill_conditioned_carries_eigenvalue(self):
        with pytest.raises(cm.IllConditionedError) as exc:
            cm.inv_sqrt_psd(np.diag([1.0, 1e-13]).astype(complex))
        assert exc.value.min_eigenvalue <= 1e-12


class TestLogmPd:
    def test_roundtrip_with_expm(self):
        rng = np.random.default_rng(6)
        a = random_hermitian(rng, 3)
        assert np.linalg.norm(cm.logm_pd(cm.expm_hermitian(a)) - a) <= 1e-9


class TestKron:
    def test_identity(self):
        assert np.allclose(cm.kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_projectors(self):
        p = np.diag([1.0, 0.0]).astype(complex)
        assert np.allclose(cm.kron(p, p), np.diag([1.0, 0.0, 0.0, 0.0]))

    def test_trace_multiplicative(self):
        rng = np.random.default_rng(7)
        a = random_complex(rng, 3, 3)
        b = random_complex(rng, 2, 2)
        assert abs(np.trace(cm.kron(a, b)) - np.trace(a) * np.trace(b)) <= 1e-12

    def test_associative(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            a, b, c = (random_complex(rng, 2, 2) for _ in range(3))
            left = cm.kron(cm.kron(a, b), c)
            right = cm.kron(a, cm.kron(b, c))
            assert np.max(np.abs(left - right)) <= 1e-12

    def test_kron_all(self):
        mats = [np.eye(2)] * 3
        assert np.allclose(cm.kron_all(mats), np.eye(8))


class TestTraceInner:
    def test_density_against_identity(self):
        rng = np.random.default_rng(9)
        b = random_complex(rng, 3, 3)
        rho = b.conj().T @ b
        rho /= np.trace(rho).real
        assert abs(cm.trace_inner(rho, np.eye(3)) - 1.0) <= 1e-12

    def test_half_identity(self):
        assert cm.trace_inner(np.eye(2) / 2, np.diag([1.0, 0.0])) == pytest.approx(0.5)

    def test_bell_state_projector(self):
        bell = np.zeros((4, 4), dtype=complex)
        bell[0, 0] = bell[0, 3] = bell[3, 0] = bell[3, 3] = 0.5
        m = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
        assert cm.trace_inner(bell, m) == pytest.approx(0.5, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cm.trace_inner(np.eye(2), np.eye(3))
