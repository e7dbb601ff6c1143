import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from easta import shortcuts as sc
from easta.model import DriveSchedule, build_path
from easta.numerics import ContractViolation, spectral_norm, unitarity_defect
from easta.protocol import run_protocol


def cd_norm_oracle(t, B=1.0, tau=1.0):
    """||H_CD|| = |B dJ/dt| / (2 (B^2 + J^2)) for the cosine-squared two-level drive."""
    J = B * np.cos(np.pi * t / (2 * tau)) ** 2
    dJ = -B * np.pi / (2 * tau) * np.sin(np.pi * t / tau)
    return 0.5 * np.abs(B * dJ) / (B**2 + J**2)


class TestPhases:
    def test_constant_dynamical_only(self, constant):
        ph = constant.phases
        t = constant.path.times
        np.testing.assert_allclose(ph.total, t[:, None] * constant.frame.energies[0][None], atol=1e-12)
        assert np.max(np.abs(ph.geometric)) == 0.0

    def test_real_hamiltonian_has_no_geometric_part(self, qubit):
        assert np.max(np.abs(qubit.phases.geometric)) <= 1e-8

    def test_zero_at_start(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(3, 4)):
            assert np.all(proto.phases.total[0] == 0.0)

    def test_geometric_part_real(self, random_protocols):
        ph = random_protocols(4, 1).phases
        assert np.isrealobj(ph.geometric)


class TestCDHamiltonian:
    def test_constant_is_zero(self, constant):
        assert np.max(np.abs(sc.cd_hamiltonian(constant.frame, 100))) == 0.0

    def test_diagonal_vanishes(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(5, 3)):
            V = proto.frame.vectors
            diag = np.einsum("kan,kab,kbn->kn", V.conj(), proto.cd_hamiltonians, V)
            assert np.max(np.abs(diag)) <= 1e-9

    def test_norm_matches_analytic(self, qubit):
        norms = sc.operator_norms(qubit.cd_hamiltonians)
        assert np.max(np.abs(norms - cd_norm_oracle(qubit.path.times))) <= 2e-4

    def test_single_point_matches_batch(self, qubit):
        for k in (0, 1, 1000, 2000):
            np.testing.assert_allclose(sc.cd_hamiltonian(qubit.frame, k), qubit.cd_hamiltonians[k], atol=1e-15)

    def test_presymmetrization_defect_bounded(self, qubit):
        assert np.max(qubit.cd_symmetry_defects) <= 1e-6

    def test_generator_of_cd_unitary(self, qubit):
        dU = np.gradient(qubit.cd_unitaries, qubit.path.dt, axis=0, edge_order=2)
        gen = 1j * dU - (qubit.path.samples + qubit.cd_hamiltonians) @ qubit.cd_unitaries
        assert np.max(np.linalg.norm(gen, ord=2, axis=(1, 2))) <= 1e-5


class TestCDUnitary:
    def test_start_identity(self, qubit):
        np.testing.assert_allclose(sc.cd_unitary(qubit.frame, qubit.phases, 0), np.eye(2), atol=1e-15)

    def test_constant_matches_free_evolution(self, constant):
        H = constant.path.samples[0]
        for k in (50, 400):
            t = constant.path.times[k]
            np.testing.assert_allclose(sc.cd_unitary(constant.frame, constant.phases, k), expm(-1j * H * t), atol=1e-12)

    def test_unitary_and_transitionless(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(4, 0)):
            V = proto.frame.vectors
            for k in range(0, proto.steps + 1, 97):
                Ucd = sc.cd_unitary(proto.frame, proto.phases, k)
                assert unitarity_defect(Ucd) <= 1e-10
                amp = np.abs(np.einsum("an,ab,bn->n", V[k].conj(), Ucd, V[0]))
                assert np.max(np.abs(amp - 1)) <= 1e-10


class TestEastaUnitary:
    def test_start_identity(self, qubit):
        np.testing.assert_allclose(sc.easta_unitary(qubit.result, qubit.frame, qubit.phases, 0), np.eye(2), atol=1e-15)

    def test_constant_is_identity(self, constant):
        for k in (1, 200, 400):
            Up = sc.easta_unitary(constant.result, constant.frame, constant.phases, k)
            assert spectral_norm(Up - np.eye(2)) <= 1e-9

    def test_joint_state_brute_force(self, qubit):
        k = qubit.steps // 2
        U = qubit.result.unitaries[k]
        Up = sc.easta_unitary(qubit.result, qubit.frame, qubit.phases, k)
        Ucd = sc.cd_unitary(qubit.frame, qubit.phases, k)
        g0, e0 = qubit.frame.vectors[0].T
        Eg, Ee = np.eye(2)
        psi0 = (np.kron(g0, Eg) + np.kron(e0, Ee)) / math.sqrt(2)
        lhs = np.kron(U, Up) @ psi0
        rhs = np.kron(Ucd, np.eye(2)) @ psi0
        assert np.linalg.norm(lhs - rhs) <= 1e-8

    def test_two_level_entries(self, qubit):
        # U'_{g,e} = exp(-i f_g) <e(0)|U^dagger|g(t)>, written out entry by entry
        k = 777
        U = qubit.result.unitaries[k]
        f = qubit.phases.total[k]
        V0, Vk = qubit.frame.vectors[0], qubit.frame.vectors[k]
        Up = sc.easta_unitary(qubit.result, qubit.frame, qubit.phases, k)
        for m in range(2):
            for n in range(2):
                expected = np.exp(-1j * f[m]) * (V0[:, n].conj() @ U.conj().T @ Vk[:, m])
                assert Up[m, n] == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("dim", [2, 3, 4, 5])
    def test_unitary_random_paths(self, dim, random_protocols):
        for seed in range(3):
            Up = random_protocols(dim, seed).easta_unitaries
            defect = np.linalg.norm(Up @ np.conj(np.swapaxes(Up, 1, 2)) - np.eye(dim), ord=2, axis=(1, 2))
            assert np.max(defect) <= 1e-9

    def test_batch_matches_single(self, random_protocols):
        p = random_protocols(3, 0)
        for k in (0, 5, 800):
            np.testing.assert_allclose(p.easta_unitaries[k], sc.easta_unitary(p.result, p.frame, p.phases, k), atol=1e-15)

    def test_branch_count_must_match(self, qubit):
        with pytest.raises(ContractViolation):
            sc.easta_unitary(qubit.result, qubit.frame, qubit.phases, 3, n_branches=1)


class TestEnvHamiltonian:
    def test_constant_is_zero(self, constant):
        H = sc.env_hamiltonian(constant.result, constant.frame, constant.phases, 100)
        assert np.max(np.abs(H)) == 0.0

    def test_spectrum_matches_cd(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(4, 2)):
            gap = np.abs(np.linalg.eigvalsh(proto.env_hamiltonians) - np.linalg.eigvalsh(proto.cd_hamiltonians))
            assert np.max(gap) <= 1e-8

    def test_hermitian(self, qubit):
        H = qubit.env_hamiltonians
        assert np.max(np.abs(H - np.conj(np.swapaxes(H, 1, 2)))) <= 1e-9

    def test_routes_agree(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(3, 1)):
            closed, fd = proto.env_hamiltonians, proto.env_hamiltonians_fd
            gap = np.linalg.norm(closed - fd, ord=2, axis=(1, 2))
            assert np.all(gap <= 5e-4 * (1 + np.linalg.norm(closed, ord=2, axis=(1, 2))))

    def test_single_point_api(self, qubit):
        for k in (0, 1000, qubit.steps):
            H = sc.env_hamiltonian(qubit.result, qubit.frame, qubit.phases, k)
            np.testing.assert_allclose(H, qubit.env_hamiltonians[k], atol=1e-15)
            np.testing.assert_allclose(
                sc.env_hamiltonian_fd(qubit.result, qubit.frame, qubit.phases, k), qubit.env_hamiltonians_fd[k], atol=1e-9
            )

    def test_route_disagreement_raises(self, qubit):
        with pytest.raises(sc.ConsistencyError):
            sc.env_hamiltonian(qubit.result, qubit.frame, qubit.phases, 1000, tol=1e-12)


class TestSimilarity:
    def test_start_basis_change(self, qubit):
        S = sc.similarity_map(qubit.frame, qubit.phases, 0)
        V0 = qubit.frame.vectors[0]
        np.testing.assert_allclose(np.abs(np.diag(S @ V0)), 1.0, atol=1e-14)

    def test_unitary(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(5, 1)):
            for k in (0, 333, proto.steps):
                assert unitarity_defect(sc.similarity_map(proto.frame, proto.phases, k)) <= 1e-10

    def test_maps_conjugate_cd_onto_env(self, qubit, random_protocols):
        for proto in (qubit, random_protocols(3, 5)):
            for k in (proto.steps // 2, 17, proto.steps):
                S = sc.similarity_map(proto.frame, proto.phases, k)
                H = S @ proto.cd_hamiltonians[k].conj() @ S.conj().T
                assert spectral_norm(H - proto.env_hamiltonians[k]) <= 1e-8

    def test_plain_projector_form_is_not_the_map(self, qubit):
        # sum_j |E_j><psi_j| (bra-conjugated) only matches up to an entrywise conjugation
        k = qubit.steps // 2
        psi = qubit.adiabatic_states[k]
        S_plain = psi.conj().T
        assert spectral_norm(S_plain @ qubit.cd_hamiltonians[k].conj() @ S_plain.conj().T - qubit.env_hamiltonians[k]) > 0.1
        np.testing.assert_allclose(
            (S_plain @ qubit.cd_hamiltonians[k] @ S_plain.conj().T).conj(), qubit.env_hamiltonians[k], atol=1e-14
        )


class TestGeneralized:
    def test_recovers_easta(self, qubit):
        for k in (0, 1, 1000, qubit.steps):
            Up = sc.generalized_env_unitary(qubit.result, qubit.frame, qubit.adiabatic_states[k], k)
            assert np.max(np.abs(Up - qubit.easta_unitaries[k])) <= 1e-12

    def test_free_evolution_target_gives_identity(self, qubit):
        k = 1234
        targets = qubit.result.unitaries[k] @ qubit.frame.vectors[0]
        Up = sc.generalized_env_unitary(qubit.result, qubit.frame, targets, k)
        np.testing.assert_allclose(Up, np.eye(2), atol=1e-12)

    def test_random_control_reconstruction(self, random_protocols, rng):
        p = random_protocols(3, 0)
        B0 = p.frame.vectors[0]
        W, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        targets = W @ B0
        Up = sc.generalized_env_unitary(p.result, p.frame, targets, 0)
        # sum_n U'_{m,n} |n(0)> rebuilds kappa_m; U' is the transpose of W in the |n(0)> basis
        np.testing.assert_allclose(B0 @ Up.T, targets, atol=1e-12)
        np.testing.assert_allclose(Up, (B0.conj().T @ W @ B0).T, atol=1e-12)

    def test_non_orthonormal_targets_warn(self, qubit):
        targets = np.array([[1, 1], [0, 1e-3]], dtype=complex)
        with pytest.warns(UserWarning, match="not orthonormal"):
            sc.generalized_env_unitary(qubit.result, qubit.frame, targets, 10)

    def test_orthonormal_targets_silent(self, qubit):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            sc.generalized_env_unitary(qubit.result, qubit.frame, qubit.adiabatic_states[5], 5)


class TestCost:
    def test_zero_family(self):
        t = np.linspace(0, 1, 11)
        curve = sc.process_cost(t, np.zeros_like(t), 1.0)
        assert np.all(curve.cumulative == 0.0)

    def test_cd_cost_matches_closed_form(self, qubit):
        # integral of the analytic norm: (1/2) arctan(1) = pi/8 for B = tau = 1
        oracle, _ = quad(cd_norm_oracle, 0.0, 1.0, epsabs=1e-13)
        assert oracle == pytest.approx(math.pi / 8, abs=1e-12)
        assert abs(qubit.cd_cost().total - oracle) <= 1e-4

    def test_curve_shape(self, qubit):
        c = qubit.cd_cost().cumulative
        assert c[0] == 0.0 and np.all(np.diff(c) >= 0)

    def test_tau_scaling(self, qubit):
        half = run_protocol(build_path(DriveSchedule(tau=0.5), 2000))
        assert half.cd_cost().total / qubit.cd_cost().total == pytest.approx(2.0, rel=1e-3)

    @pytest.mark.parametrize("norm", ["spectral", "frobenius"])
    def test_cost_equality(self, qubit, random_protocols, norm):
        for proto in (qubit, random_protocols(4, 3)):
            c_cd = proto.cd_cost(norm).cumulative
            c_env = proto.env_cost(norm).cumulative
            assert np.max(np.abs(c_cd - c_env)) <= 1e-6 * (1 + np.max(c_cd))

    def test_rejects_non_uniform_grid(self):
        with pytest.raises(ContractViolation):
            sc.process_cost(np.array([0, 0.1, 0.3]), np.ones(3), 1.0)

    def test_unknown_norm(self):
        with pytest.raises(ValueError):
            sc.operator_norms(np.eye(2), "nuclear")


def test_gauge_invariance(qubit, random_protocols):
    for proto, offsets in ((qubit, [0.4, -2.0]), (random_protocols(3, 2), [1.0, 2.5, -0.3])):
        alt = run_protocol(proto.path, phase_offsets=offsets)
        assert np.max(np.abs(alt.cd_hamiltonians - proto.cd_hamiltonians)) <= 1e-8
        assert np.max(np.abs(alt.cd_unitaries - proto.cd_unitaries)) <= 1e-8
        for norm in ("spectral", "frobenius"):
            assert np.max(np.abs(alt.env_cost(norm).cumulative - proto.env_cost(norm).cumulative)) <= 1e-8
        V, W = proto.frame.vectors, alt.frame.vectors
        ov = np.abs(np.einsum("kan,kab,bn->kn", V.conj(), proto.result.unitaries, V[0]))
        ov_alt = np.abs(np.einsum("kan,kab,bn->kn", W.conj(), alt.result.unitaries, W[0]))
        assert np.max(np.abs(ov - ov_alt)) <= 1e-8
        np.testing.assert_allclose(
            np.linalg.eigvalsh(alt.env_hamiltonians), np.linalg.eigvalsh(proto.env_hamiltonians), atol=1e-8
        )
