import numpy as np
import pytest

from qcoord import games as gm
from qcoord.policies import FiniteHistorySpace, factorized


class TestChsh:
    def test_predicate_values(self):
        game = gm.make_chsh()
        assert game.predicate[1, 1, 0, 0] == 0  # both 1: equal bits lose
        assert game.predicate[0, 1, 0, 0] == 1
        assert game.predicate[1, 1, 0, 1] == 1

    def test_uniform_questions(self):
        game = gm.make_chsh()
        assert np.allclose(game.mu, 0.25)
        assert game.mu.sum() == pytest.approx(1.0)

    def test_classical_optimum(self):
        value, profile = gm.classical_optimum(gm.make_chsh())
        assert value == pytest.approx(0.75, abs=1e-12)
        assert len(profile) == 2

    def test_optimum_strategy_achieves_value(self):
        game = gm.make_chsh()
        value, profile = gm.classical_optimum(game)
        policy = factorized(game.space(), [list(f) for f in profile])
        assert gm.exact_win_probability(game, policy) == pytest.approx(value, abs=1e-12)


class TestGhz:
    def test_predicate_formula(self):
        game = gm.make_ghz()
        assert game.predicate[0, 0, 0, 0, 0, 0] == 1  # 0 = parity 0
        assert game.predicate[1, 1, 0, 1, 0, 0] == 1  # 1 = parity 1
        assert game.predicate[1, 1, 0, 1, 1, 0] == 0

    def test_question_support(self):
        game = gm.make_ghz()
        assert game.mu[1, 1, 1] == 0.0
        assert game.mu[0, 0, 0] == pytest.approx(0.25)
        support = [(0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)]
        assert sum(game.mu[o] for o in support) == pytest.approx(1.0)

    def test_classical_optimum(self):
        value, _ = gm.classical_optimum(gm.make_ghz())
        assert value == pytest.approx(0.75, abs=1e-12)

    def test_uniform_random_answers(self):
        game = gm.make_ghz()
        space = game.space()
        tables = {h: np.full((2, 2, 2), 1 / 8) for h in space.joint_histories()}
        from qcoord.policies import ExplicitPolicy

        # brute-force oracle: mean predicate value over the question support
        expected = sum(
            game.mu[o] * game.predicate[o].mean()
            for o in space.joint_histories()
        )
        assert gm.exact_win_probability(game, ExplicitPolicy(space, tables)) == pytest.approx(
            expected, abs=1e-12
        )


class TestRendezvous:
    def test_graphs(self):
        tetra = gm.tetra_graph()
        assert len(tetra.edges) == 6
        cube = gm.cube_graph()
        assert len(cube.edges) == 12
        assert all(len(a) == 3 for a in cube.adjacency())

    def test_win_requires_common_neighbor(self):
        game = gm.make_rendezvous(gm.tetra_graph())
        # vertices 0,1 adjacent; 2 is a common neighbor
        assert game.predicate[0, 1, 2, 2] == 1
        # landing on different vertices loses
        assert game.predicate[0, 1, 2, 3] == 0
        # moving to a non-neighbor (self) loses
        assert game.predicate[0, 1, 0, 0] == 0

    def test_classical_optima_match_published(self):
        tetra = gm.make_game("rendezvous-tetra")
        cube = gm.make_game("rendezvous-cube")
        assert gm.classical_optimum(tetra)[0] == pytest.approx(0.6250, abs=1e-12)
        assert gm.classical_optimum(cube)[0] == pytest.approx(0.3125, abs=1e-12)

    def test_slot_map_covers_neighbors(self):
        game = gm.make_game("rendezvous-tetra")
        smap = game.slot_map(0)
        adj = gm.tetra_graph().adjacency()
        for o in range(4):
            assert sorted(smap[o]) == adj[o]

    def test_graph_validation(self):
        with pytest.raises(ValueError):
            gm.GraphSpec(3, ((0, 0),))
        with pytest.raises(ValueError):
            gm.GraphSpec(3, ((0, 1),))  # vertex 2 isolated

    def test_load_graph_roundtrip(self, tmp_path):
        path = tmp_path / "graph.txt"
        path.write_text("# a triangle\n0 1\n1 2\n2 0\n")
        g = gm.load_graph(path)
        assert g.num_vertices == 3
        assert len(g.edges) == 3


class TestPlayRound:
    def test_deterministic_always_win(self):
        game = gm.make_chsh()
        policy = factorized(game.space(), [[0, 0], [0, 0]])
        rng = np.random.default_rng(0)
        for _ in range(50):
            o, a, v = gm.play_round(game, policy, rng)
            assert a == (0, 0)
            assert v in (0, 1)
            assert v == int((a[0] ^ a[1]) == (o[0] & o[1]))

    def test_empirical_matches_exact(self):
        game = gm.make_chsh()
        policy = gm.chsh_quantum_policy()
        rng = np.random.default_rng(1)
        n = 1_000_000
        _, _, verdicts = gm.play_batch(game, policy, rng, n)
        exact = gm.exact_win_probability(game, policy)
        sigma = np.sqrt(exact * (1 - exact) / n)
        assert abs(verdicts.mean() - exact) <= 3 * sigma

    def test_play_batch_matches_play_round_distribution(self):
        game = gm.make_ghz()
        policy = factorized(game.space(), [[0, 1], [1, 0], [0, 0]])
        rng = np.random.default_rng(2)
        _, _, verdicts = gm.play_batch(game, policy, rng, 8000)
        exact = gm.exact_win_probability(game, policy)
        sigma = np.sqrt(max(exact * (1 - exact), 1e-9) / 8000)
        assert abs(verdicts.mean() - exact) <= 4 * sigma + 1e-9


class TestExactWinProbability:
    def test_chsh_constant_zero_policy(self):
        game = gm.make_chsh()
        policy = factorized(game.space(), [[0, 0], [0, 0]])
        assert gm.exact_win_probability(game, policy) == pytest.approx(0.75, abs=1e-12)

    def test_chsh_quantum_value(self):
        game = gm.make_chsh()
        value = gm.exact_win_probability(game, gm.chsh_quantum_policy())
        assert value == pytest.approx(np.cos(np.pi / 8) ** 2, abs=1e-10)

    def test_rational_structure_for_uniform_mu(self):
        game = gm.make_chsh()
        rng = np.random.default_rng(3)
        for _ in range(10):
            fns = [rng.integers(0, 2, size=2), rng.integers(0, 2, size=2)]
            policy = factorized(game.space(), fns)
            w = gm.exact_win_probability(game, policy)
            assert abs(w * 16 - round(w * 16)) <= 1e-9

    def test_classical_optimum_dominates_factorized(self):
        rng = np.random.default_rng(4)
        for name in ("chsh", "ghz", "rendezvous-tetra"):
            game = gm.make_game(name)
            opt, _ = gm.classical_optimum(game)
            for _ in range(10):
                fns = [
                    rng.integers(0, game.answer_sizes[i], size=game.question_sizes[i])
                    for i in range(game.players)
                ]
                policy = factorized(game.space(), fns)
                assert gm.exact_win_probability(game, policy) <= opt + 1e-12


class TestRegistry:
    def test_known_names(self):
        for name in ("chsh", "ghz", "rendezvous-tetra", "rendezvous-cube"):
            game = gm.make_game(name)
            assert game.name == name

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            gm.make_game("tic-tac-toe")
