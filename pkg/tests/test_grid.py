import numpy as np
import pytest

from gridcaps import grid
from gridcaps.errors import NumericError, ReductionError
from gridcaps.matpower import BusTopology

from conftest import make_toy_topology


def stamp_susceptance(topology):
    """Independent assembly: sum of per-branch 2x2 stamp matrices."""
    order = list(topology.generator_buses) + list(topology.load_buses)
    pos = {b: i for i, b in enumerate(order)}
    n = len(order)
    total = np.zeros((n, n))
    for f, t, x in topology.branches:
        stamp = np.zeros((n, n))
        w = 1.0 / x
        i, j = pos[f], pos[t]
        stamp[i, i] = stamp[j, j] = w
        stamp[i, j] = stamp[j, i] = -w
        total += stamp
    return total


class TestBuildSusceptance:
    def test_two_bus_values(self):
        sus = grid.build_susceptance(make_toy_topology(x=0.1))
        assert sus.b_gg[0, 0] == pytest.approx(10.0)
        assert sus.b_gl[0, 0] == pytest.approx(-10.0)
        assert sus.b_lg[0, 0] == pytest.approx(-10.0)
        assert sus.b_ll[0, 0] == pytest.approx(10.0)

    def test_parallel_branches_add(self):
        topo = BusTopology(
            bus_ids=(1, 2), generator_buses=(1,), load_buses=(2,),
            branches=((1, 2, 0.2), (1, 2, 0.2)), base_mva=100.0,
            loads_mw={1: 0.0, 2: 10.0},
        )
        sus = grid.build_susceptance(topo)
        assert sus.b_gl[0, 0] == pytest.approx(-10.0)

    def test_ieee14_matches_stamp_oracle(self, ieee14):
        sus = grid.build_susceptance(ieee14.topology)
        oracle = stamp_susceptance(ieee14.topology)
        assert np.allclose(sus.full, oracle, atol=1e-12)
        assert np.abs(sus.full.sum(axis=1)).max() <= 1e-9

    def test_symmetry_exact(self, all_cases):
        for bundle in all_cases.values():
            full = grid.build_susceptance(bundle.topology).full
            assert np.array_equal(full, full.T)
            assert np.abs(full.sum(axis=1)).max() <= 1e-9

    def test_zero_reactance_rejected(self):
        topo = BusTopology(
            bus_ids=(1, 2), generator_buses=(1,), load_buses=(2,),
            branches=((1, 2, 0.0),), base_mva=100.0, loads_mw={},
        )
        with pytest.raises(NumericError, match="zero reactance"):
            grid.build_susceptance(topo)


class TestAssembleDynamics:
    def test_zero_attack_fixed_point(self, ieee14):
        model = grid.assemble_dynamics(ieee14.topology, ieee14.suscept, ieee14.params)
        assert np.all(model.b == 0.0)
        assert model.a.shape == (10, 10)
        # attack-free model equals the assembled matrix with explicit zeros
        ng, nl = ieee14.topology.n_gen, ieee14.topology.n_load
        same = grid.assemble_dynamics(
            ieee14.topology, ieee14.suscept, ieee14.params,
            gain_pu=np.zeros((nl, ng)), epsilon_pu=np.zeros(nl),
        )
        assert np.array_equal(model.a, same.a)

    def test_nominal_system_stable_all_cases(self, all_cases):
        for bundle in all_cases.values():
            model = grid.assemble_dynamics(bundle.topology, bundle.suscept, bundle.params)
            eigs = grid.eigenvalues(model.a)
            assert max(e.real for e in eigs) < 0.0

    def test_reduction_exactness(self, ieee14):
        """Residual of the eliminated load-bus block at random states."""
        rng = np.random.default_rng(0)
        topo, sus = ieee14.topology, ieee14.suscept
        ng, nl = topo.n_gen, topo.n_load
        gain = np.zeros((nl, ng))
        gain[3, 2] = 1.3
        eps = rng.uniform(0, 0.02, size=nl)
        model = grid.assemble_dynamics(topo, sus, ieee14.params, gain, eps)
        for _ in range(10):
            x = rng.standard_normal(2 * ng)
            theta = model.load_angles(x)
            residual = eps + sus.b_lg @ x[:ng] - gain @ x[ng:] + sus.b_ll @ theta
            assert np.abs(residual).max() <= 1e-10

    def test_fig1_gain_destabilizes_ieee57(self, ieee57):
        """92.6 pu on load bus 39 sensing the 6th generator -> growing swings."""
        topo = ieee57.topology
        gain = np.zeros((topo.n_load, topo.n_gen))
        gain[topo.load_index(39), 5] = 92.6
        eps = np.zeros(topo.n_load)
        eps[topo.load_index(24)] = 0.4 / topo.base_mva
        model = grid.assemble_dynamics(topo, ieee57.suscept, ieee57.params, gain, eps)
        report = grid.classify_stability(grid.eigenvalues(model.a))
        assert report.status in (grid.UNSTABLE, grid.SEMI_UNSTABLE)

        from gridcaps.sim import simulate
        traj = simulate(model, duration=3.0, dt=0.001)
        early = np.abs(traj.omega[:, :1000]).max()
        late = np.abs(traj.omega[:, 2000:]).max()
        assert late > 2.0 * early

    def test_singular_load_block(self):
        topo = make_toy_topology()
        sus = grid.build_susceptance(topo)
        bad = grid.SusceptancePartition(sus.b_gg, sus.b_gl, sus.b_lg, np.zeros((1, 1)))
        params = grid.DynamicParams(
            inertia=np.array([0.1]), damping=np.array([0.1]),
            gov_kp=np.array([0.1]), gov_ki=np.array([0.3]),
            load_damping=np.array([0.01]),
        )
        with pytest.raises(ReductionError, match="singular"):
            grid.assemble_dynamics(topo, bad, params, case="toy2")


class TestEigenvalues:
    def test_diagonal(self):
        eigs = grid.eigenvalues(np.diag([1.0, -2.0, 3.0]))
        assert sorted(e.real for e in eigs) == pytest.approx([-2.0, 1.0, 3.0])
        assert all(e.imag == 0 for e in eigs)

    def test_damped_pair(self):
        zeta, wn = 0.02, 5.0
        a = np.array([[0.0, 1.0], [-wn ** 2, -2 * zeta * wn]])
        eigs = grid.eigenvalues(a)
        expect_re = -zeta * wn
        expect_im = wn * np.sqrt(1 - zeta ** 2)
        assert eigs[0].real == pytest.approx(expect_re, abs=1e-9)
        assert abs(eigs[0].imag) == pytest.approx(expect_im, abs=1e-9)

    def test_matches_characteristic_roots(self):
        """Oracle: eigenvalues as companion-matrix roots of the char poly."""
        rng = np.random.default_rng(42)
        a = rng.standard_normal((20, 20))
        eigs = np.array(grid.eigenvalues(a))
        roots = np.roots(np.poly(a))
        eigs_sorted = np.sort_complex(eigs)
        roots_sorted = np.sort_complex(roots)
        assert np.abs(eigs_sorted - roots_sorted).max() < 1e-4

    def test_residual_bound_all_cases(self, all_cases):
        for bundle in all_cases.values():
            model = grid.assemble_dynamics(bundle.topology, bundle.suscept, bundle.params)
            vals, vecs = np.linalg.eig(model.a)
            norm_a = np.linalg.norm(model.a, 2)
            for k in range(vals.size):
                v = vecs[:, k] / np.linalg.norm(vecs[:, k])
                assert np.linalg.norm(model.a @ v - vals[k] * v) <= 1e-6 * norm_a

    def test_rejects_non_square(self):
        with pytest.raises(NumericError, match="square"):
            grid.eigenvalues(np.zeros((2, 3)))


class TestClassifyStability:
    def test_all_damped_is_stable(self):
        report = grid.classify_stability([-1.0, -2.0 + 3.0j, -2.0 - 3.0j])
        assert report.status == grid.STABLE

    def test_right_half_plane_is_unstable(self):
        report = grid.classify_stability([0.01 + 5j, 0.01 - 5j, -1.0])
        assert report.status == grid.UNSTABLE
        assert report.witness.real == pytest.approx(0.01)

    def test_banded_low_damping_is_semi_unstable(self):
        zeta, wn = 0.02, 6.0
        pair = complex(-zeta * wn, wn * np.sqrt(1 - zeta ** 2))
        report = grid.classify_stability([pair, pair.conjugate(), -3.0])
        assert report.status == grid.SEMI_UNSTABLE
        assert report.witness in (pair, pair.conjugate())

    def test_band_edges(self):
        def pair(zeta, wn):
            return complex(-zeta * wn, wn * np.sqrt(1 - zeta ** 2))

        # outside the frequency band -> stable even at low damping
        report = grid.classify_stability([pair(0.02, 20.0), pair(0.02, 20.0).conjugate()])
        assert report.status == grid.STABLE
        # damping above 3% -> stable
        report = grid.classify_stability([pair(0.05, 6.0), pair(0.05, 6.0).conjugate()])
        assert report.status == grid.STABLE

    def test_empty_rejected(self):
        with pytest.raises(NumericError):
            grid.classify_stability([])


def test_gain_sweep_max_real_part_is_continuous(ieee14):
    """No jump in the spectral abscissa along a fine single-entry gain sweep."""
    topo, sus, params = ieee14.topology, ieee14.suscept, ieee14.params
    ng, nl = topo.n_gen, topo.n_load
    gains = np.linspace(0.0, 2.0, 81)
    worst = []
    for g in gains:
        gain = np.zeros((nl, ng))
        gain[4, 1] = g
        model = grid.assemble_dynamics(topo, sus, params, gain_pu=gain)
        worst.append(max(e.real for e in grid.eigenvalues(model.a)))
    jumps = np.abs(np.diff(worst))
    assert jumps.max() <= 10.0 * jumps.mean() + 1e-9
