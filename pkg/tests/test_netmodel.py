import numpy as np
import pytest

from glsim.netmodel import (DynamicsTrace, LinearDynamicsParams, PerturbationProcess,
                            build_topology, export_trace_csv, load_trace_csv,
                            sample_measurements, simulate_linear)


class TestBuildTopology:
    def test_empty_edge_list_gives_zero_adjacency(self):
        topo = build_topology([], 3, generators=[0])
        assert topo.adjacency.sum() == 0
        assert topo.load_nodes == (1, 2)

    def test_undirected_path_has_both_directions(self):
        edges = [(i, i + 1) for i in range(4)]
        topo = build_topology(edges, 5, generators=[0], undirected=True)
        assert int(topo.adjacency.sum()) == 8
        assert np.array_equal(topo.adjacency, topo.adjacency.T)

    def test_directed_edge_orientation(self):
        topo = build_topology([(0, 2)], 3, generators=[])
        # link 0 -> 2 lands in row 2, column 0
        assert topo.adjacency[2, 0] == 1 and topo.adjacency[0, 2] == 0

    @pytest.mark.parametrize("edges,err", [
        ([(0, 5)], "out of range"),
        ([(1, 1)], "self-loop"),
        ([(0, 1), (0, 1)], "duplicate"),
    ])
    def test_bad_edges_rejected(self, edges, err):
        with pytest.raises(ValueError, match=err):
            build_topology(edges, 3, generators=[])

    def test_partition_must_cover_nodes(self):
        with pytest.raises(ValueError, match="generator index"):
            build_topology([], 3, generators=[7])


class TestSimulateLinear:
    def test_identity_with_no_input_is_constant(self):
        v = np.array([1.0, -2.0, 0.5])
        params = LinearDynamicsParams(np.eye(3), v)
        trace = simulate_linear(params, PerturbationProcess.none(3), 20)
        assert np.array_equal(trace.values, np.tile(v[:, None], 20))

    def test_matches_matrix_power_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(5, 5))
        a *= 0.8 / np.max(np.abs(np.linalg.eigvals(a)))
        x0 = rng.normal(size=5)
        trace = simulate_linear(LinearDynamicsParams(a, x0), PerturbationProcess.none(5), 40)
        for k in range(40):
            expected = np.linalg.matrix_power(a, k) @ x0
            np.testing.assert_allclose(trace.values[:, k], expected, rtol=1e-12, atol=1e-15)

    def test_matches_recursion_oracle_with_injections(self):
        # entry-wise agreement with the straightforward recursion, N<=10, K<=100
        rng = np.random.default_rng(1)
        n, k = 10, 100
        a = rng.normal(size=(n, n)) * 0.2
        x0 = rng.normal(size=n)
        times = np.array([5, 17, 60])
        amps = rng.normal(size=(3, n))
        proc = PerturbationProcess(times, amps)
        trace = simulate_linear(LinearDynamicsParams(a, x0), proc, k)
        x = x0.copy()
        for step in range(k - 1):
            x = a @ x
            if step in set(times.tolist()):
                x = x + amps[list(times).index(step)]
            np.testing.assert_allclose(trace.values[:, step + 1], x, rtol=1e-12, atol=1e-15)

    def test_causality_before_first_injection(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(4, 4)) * 0.3
        x0 = rng.normal(size=4)
        params = LinearDynamicsParams(a, x0)
        base = simulate_linear(params, PerturbationProcess.none(4), 30)
        for amp_seed in (3, 4):
            amps = np.random.default_rng(amp_seed).normal(size=(1, 4)) * 10
            proc = PerturbationProcess(np.array([10]), amps)
            run = simulate_linear(params, proc, 30)
            # columns up to and including the injection step are untouched
            np.testing.assert_array_equal(run.values[:, :11], base.values[:, :11])
            assert not np.allclose(run.values[:, 11], base.values[:, 11])


class TestSampleMeasurements:
    def test_zero_variance_is_identity(self):
        trace = DynamicsTrace(np.arange(12.0).reshape(3, 4), 1.0)
        out = sample_measurements(trace, 0.0, seed=1)
        assert np.array_equal(out.values, trace.values)

    def test_empirical_variance_matches(self):
        trace = DynamicsTrace(np.zeros((39, 5000)), 1e-3)
        out = sample_measurements(trace, 1e-5, seed=2)
        measured = np.var(out.values - trace.values)
        assert abs(measured - 1e-5) < 0.05 * 1e-5

    def test_same_seed_bit_identical(self):
        trace = DynamicsTrace(np.random.default_rng(3).normal(size=(5, 100)), 1.0)
        a = sample_measurements(trace, 1e-4, seed=9)
        b = sample_measurements(trace, 1e-4, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_negative_variance_rejected(self):
        trace = DynamicsTrace(np.zeros((2, 3)), 1.0)
        with pytest.raises(ValueError):
            sample_measurements(trace, -1.0, seed=0)

    def test_node_streams_independent(self):
        # cross-covariance between any two node noise rows within 3 standard
        # errors of zero at K=5000
        k = 5000
        trace = DynamicsTrace(np.zeros((6, k)), 1e-3)
        noise = sample_measurements(trace, 1.0, seed=11).values
        se = 1.0 / np.sqrt(k)
        for i in range(6):
            for j in range(i + 1, 6):
                cov = np.mean(noise[i] * noise[j])
                assert abs(cov) < 3 * se


class TestPerturbationProcess:
    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            PerturbationProcess(np.array([3, 3]), np.zeros((2, 4)))

    def test_amplitude_rows_must_match_times(self):
        with pytest.raises(ValueError, match="amplitude"):
            PerturbationProcess(np.array([1]), np.zeros((2, 4)))

    def test_sample_is_deterministic(self):
        a = PerturbationProcess.sample(5.0, 2.0, 8, 1000, 1e-3, seed=4)
        b = PerturbationProcess.sample(5.0, 2.0, 8, 1000, 1e-3, seed=4)
        assert np.array_equal(a.injection_times, b.injection_times)
        assert np.array_equal(a.injection_amplitudes, b.injection_amplitudes)

    def test_sample_targets_only_hit_nodes(self):
        proc = PerturbationProcess.sample(50.0, 1.0, 6, 2000, 1e-3, seed=5,
                                          target_nodes=(1, 4))
        off_target = np.delete(proc.injection_amplitudes, [1, 4], axis=1)
        assert np.all(off_target == 0)


def test_trace_csv_round_trip(tmp_path):
    values = np.random.default_rng(6).normal(size=(4, 25))
    trace = DynamicsTrace(values, 1e-3)
    path = tmp_path / "trace.csv"
    export_trace_csv(trace, path)
    back = load_trace_csv(path)
    np.testing.assert_allclose(back.values, values, rtol=0, atol=0)
    assert back.sample_period == pytest.approx(1e-3)
