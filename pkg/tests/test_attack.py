import numpy as np
import pytest

from gridcaps import attack, grid
from gridcaps.errors import SamplingError, StructuralError
from gridcaps.sim import Trajectory, simulate


def make_trajectory(omega, dt=0.001):
    steps = omega.shape[1]
    return Trajectory(
        times=np.arange(steps) * dt,
        delta=np.zeros_like(omega),
        omega=omega,
    )


class TestSampleScenario:
    def test_fig1_gain_passes_screen(self, ieee57):
        """The published 57-bus attack point is accepted by the eigen screen."""
        topo = ieee57.topology
        gain = np.zeros((topo.n_load, topo.n_gen))
        gain[topo.load_index(39), 5] = 92.6
        model = grid.assemble_dynamics(topo, ieee57.suscept, ieee57.params, gain_pu=gain)
        report = grid.classify_stability(grid.eigenvalues(model.a))
        assert report.status != grid.STABLE

    def test_zero_gain_range_rejected(self, ieee14):
        cfg = attack.ScenarioConfig(gain_pu=(0.0, 0.0), max_rejections=25)
        rng = np.random.default_rng(0)
        with pytest.raises(SamplingError) as err:
            attack.sample_scenario(rng, ieee14.topology, ieee14.suscept,
                                   ieee14.params, cfg, label_bus=9)
        assert err.value.bus == 9

    def test_accepted_gains_form_up_closed_interval(self, ieee14):
        """Brute-force sweep: once destabilizing, larger gains stay destabilizing."""
        topo, sus, params = ieee14.topology, ieee14.suscept, ieee14.params
        statuses = []
        for g in np.linspace(0.05, 6.0, 90):
            gain = np.zeros((topo.n_load, topo.n_gen))
            gain[2, 4] = g
            model = grid.assemble_dynamics(topo, sus, params, gain_pu=gain)
            statuses.append(
                grid.classify_stability(grid.eigenvalues(model.a)).status != grid.STABLE
            )
        first = statuses.index(True)
        assert all(statuses[first:])

    def test_single_point_shape(self, ieee14):
        rng = np.random.default_rng(3)
        cfg = attack.ScenarioConfig()
        sc = attack.sample_scenario(rng, ieee14.topology, ieee14.suscept,
                                    ieee14.params, cfg)
        row = ieee14.topology.load_index(sc.label_bus)
        assert sc.kind == attack.SINGLE_POINT
        assert np.count_nonzero(sc.gain_pu) == 1
        assert set(np.nonzero(sc.gain_pu)[0]) == {row}
        assert set(np.nonzero(sc.epsilon_mw)[0]) == {row}
        lo, hi = cfg.eps_mw
        assert lo <= sc.epsilon_mw[row] <= hi

    def test_multi_point_shape(self, ieee14):
        rng = np.random.default_rng(4)
        cfg = attack.ScenarioConfig(kind=attack.MULTI_POINT)
        sc = attack.sample_scenario(rng, ieee14.topology, ieee14.suscept,
                                    ieee14.params, cfg)
        row = ieee14.topology.load_index(sc.label_bus)
        assert sc.kind == attack.MULTI_POINT
        assert set(np.nonzero(sc.gain_pu)[0]) == {row}
        eps_rows = set(np.nonzero(sc.epsilon_mw)[0])
        assert row not in eps_rows
        assert 1 <= len(eps_rows) <= 3

    def test_scenario_screen_status(self, ieee14):
        rng = np.random.default_rng(5)
        cfg = attack.ScenarioConfig()
        for _ in range(5):
            sc = attack.sample_scenario(rng, ieee14.topology, ieee14.suscept,
                                        ieee14.params, cfg)
            model = attack.scenario_model(ieee14.topology, ieee14.suscept,
                                          ieee14.params, sc)
            report = grid.classify_stability(grid.eigenvalues(model.a))
            assert report.status in (grid.UNSTABLE, grid.SEMI_UNSTABLE)


class TestValidateLimit:
    def test_zero_gain_always_true(self, ieee14):
        nl, ng = ieee14.topology.n_load, ieee14.topology.n_gen
        sc = attack.AttackScenario(np.zeros(nl), np.zeros((nl, ng)), 9)
        traj = make_trajectory(np.ones((ng, 50)))
        p_lv = np.full(nl, 10.0)
        assert attack.validate_limit(sc, traj, p_lv, 100.0)

    def test_step_consuming_whole_budget_fails(self, ieee14):
        nl, ng = ieee14.topology.n_load, ieee14.topology.n_gen
        eps = np.zeros(nl)
        gain = np.zeros((nl, ng))
        eps[2] = 10.0
        gain[2, 0] = 1.0
        sc = attack.AttackScenario(eps, gain, ieee14.topology.load_buses[2])
        traj = make_trajectory(1e-4 * np.ones((ng, 50)))
        p_lv = np.full(nl, 10.0)
        assert not attack.validate_limit(sc, traj, p_lv, 100.0)

    def test_step_above_vulnerable_load_is_error(self, ieee14):
        nl, ng = ieee14.topology.n_load, ieee14.topology.n_gen
        eps = np.zeros(nl)
        eps[1] = 11.0
        sc = attack.AttackScenario(eps, np.zeros((nl, ng)), ieee14.topology.load_buses[1])
        traj = make_trajectory(np.zeros((ng, 10)))
        with pytest.raises(StructuralError, match="vulnerable load"):
            attack.validate_limit(sc, traj, np.full(nl, 10.0), 100.0)

    def test_margin_matches_pointwise_recomputation(self, ieee14):
        """The bound check agrees with a direct max-over-time recomputation."""
        rng = np.random.default_rng(6)
        cfg = attack.ScenarioConfig()
        sc = attack.sample_scenario(rng, ieee14.topology, ieee14.suscept,
                                    ieee14.params, cfg)
        model = attack.scenario_model(ieee14.topology, ieee14.suscept,
                                      ieee14.params, sc)
        traj = simulate(model, duration=3.0, dt=0.001)
        rows = np.unique(np.nonzero(sc.gain_pu)[0])
        by_hand = max(
            abs(float(sc.gain_pu[r] @ traj.omega[:, k])) * ieee14.topology.base_mva
            for r in rows for k in range(traj.omega.shape[1])
        )
        peak = attack.feedback_power_mw(sc, traj, ieee14.topology.base_mva).max()
        assert peak == pytest.approx(by_hand, rel=1e-12)


def test_vulnerable_load_floor(ieee14):
    cfg = attack.ScenarioConfig(vulnerable_fraction=0.5, vulnerable_floor_mw=10.0)
    p_lv = attack.vulnerable_load_mw(ieee14.topology, cfg)
    loads = np.array([ieee14.topology.loads_mw[b] for b in ieee14.topology.load_buses])
    assert np.all(p_lv >= 10.0)
    assert np.all(p_lv >= 0.5 * loads)
    # bus 7 carries no load; the floor keeps it attackable
    assert p_lv[ieee14.topology.load_index(7)] == 10.0


def test_validate_scenario_invariants(ieee14):
    nl, ng = ieee14.topology.n_load, ieee14.topology.n_gen
    gain = np.zeros((nl, ng))
    gain[0, 0] = 1.0
    sc = attack.AttackScenario(np.zeros(nl), gain, ieee14.topology.load_buses[1])
    with pytest.raises(StructuralError, match="non-label"):
        sc.validate(ieee14.topology)
