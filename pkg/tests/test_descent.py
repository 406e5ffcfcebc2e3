"""The descent loop: initialization, re-init, switch mechanics, metrics."""
import numpy as np
import pytest

from overcp import descent, model
from overcp.randomness import substream


def tiny_hyper(**overrides):
    base = dict(d=4, l=3, r=1, m=5, lam=0.001, delta=1e-3, eta=2e-3,
                H=30, K=2, epsilon=1e-3, seed=7)
    base.update(overrides)
    return model.Hyperparams(**base)


class TestInitParams:
    def test_geometry_and_couplings(self):
        h = tiny_hyper(m=8)
        p = descent.init_params(h)
        norms = p.column_norms()
        np.testing.assert_allclose(norms, h.delta, rtol=1e-12)
        np.testing.assert_allclose(p.c * norms, h.scale, rtol=1e-12)
        np.testing.assert_allclose(p.chat * norms, 1.0, rtol=1e-12)
        assert set(np.unique(p.a)) <= {-1.0, 1.0}
        assert not p.switched.any()
        p.validate(scale=h.scale)

    def test_component_streams_are_stable_under_m(self):
        """Adding components never changes the columns already drawn."""
        p5 = descent.init_params(tiny_hyper(m=5))
        p8 = descent.init_params(tiny_hyper(m=8))
        np.testing.assert_array_equal(p5.U, p8.U[:, :5])
        np.testing.assert_array_equal(p5.a, p8.a[:5])

    def test_seed_determinism(self):
        a = descent.init_params(tiny_hyper(), seed=3)
        b = descent.init_params(tiny_hyper(), seed=3)
        c = descent.init_params(tiny_hyper(), seed=4)
        np.testing.assert_array_equal(a.U, b.U)
        assert not np.array_equal(a.U, c.U)


class TestReinitSmallest:
    def test_redraws_minimum_norm_column(self):
        h = tiny_hyper(m=4)
        p = descent.init_params(h)
        p.U[:, 2] *= 0.1  # make column 2 the clear minimum
        p.c[2] *= 10.0
        p.chat[2] *= 10.0
        before = p.U.copy()
        out, idx = descent.reinit_smallest(p, h, substream(0, "t"))
        assert idx == 2
        assert np.linalg.norm(out.U[:, 2]) == pytest.approx(h.delta, rel=1e-12)
        assert not np.array_equal(out.U[:, 2], before[:, 2])
        np.testing.assert_array_equal(np.delete(out.U, 2, axis=1), np.delete(before, 2, axis=1))
        assert out.c[2] * np.linalg.norm(out.U[:, 2]) == pytest.approx(h.scale, rel=1e-12)
        assert not out.switched[2]

    def test_tie_breaks_to_lowest_index(self):
        h = tiny_hyper(m=4)
        p = descent.init_params(h)
        U = np.zeros((4, 4))
        for i in range(4):
            U[i, i] = 1.0  # all norms exactly equal
        p.U = U
        p.c = np.ones(4) * h.scale
        p.chat = np.ones(4)
        out, idx = descent.reinit_smallest(p, h, substream(1, "t"))
        assert idx == 0

    def test_original_params_untouched(self):
        h = tiny_hyper()
        p = descent.init_params(h)
        snapshot = p.U.copy()
        descent.reinit_smallest(p, h, substream(2, "t"))
        np.testing.assert_array_equal(p.U, snapshot)


class TestGdStep:
    def test_couplings_preserved_by_rescale(self):
        h = tiny_hyper()
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=0)
        p = descent.init_params(h)
        q, events = descent.gd_step(p, gt, h)
        norms = q.column_norms()
        # no switch at the first step from a δ-init
        assert events.switches == []
        np.testing.assert_allclose(q.c * norms, h.scale, rtol=1e-9)
        np.testing.assert_allclose(q.chat * norms, 1.0, rtol=1e-9)
        q.validate(scale=h.scale)

    def test_switch_fires_exactly_on_crossing(self):
        """A column crossing 2√(m+K)δ flips its flag once and drops c by √(d(m+K))."""
        h = tiny_hyper(m=2, K=2, eta=1e-2)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=1)
        thr = h.switch_threshold
        p = descent.init_params(h)
        # place column 0 just below the threshold, pointing at the target span
        direction = gt.components[:, 0]
        p.U[:, 0] = direction * (thr * 0.999999)
        n0 = np.linalg.norm(p.U[:, 0])
        p.c[0] = h.scale / n0
        p.chat[0] = 1.0 / n0
        p.a[0] = -np.sign(gt.weights[0]) if gt.weights[0] != 0 else 1.0
        # a step large enough to push it over: raise eta artificially
        grown = None
        q = p
        for _ in range(200):
            prev_norms = q.column_norms()
            q, events = descent.gd_step(q, gt, h)
            if events.switches:
                grown = (prev_norms.copy(), q)
                break
        assert grown is not None, "component never crossed the threshold"
        prev_norms, q = grown
        new_norms = q.column_norms()
        fired = np.nonzero(q.switched)[0]
        assert len(fired) >= 1
        j = fired[0]
        assert prev_norms[j] <= thr < new_norms[j]
        # post-switch coupling: c ||u|| = 1
        assert q.c[j] * new_norms[j] == pytest.approx(1.0, rel=1e-9)

    def test_switch_fires_at_most_once(self):
        h = tiny_hyper(m=3, eta=5e-3)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=2)
        p = descent.init_params(h)
        fired = set()
        for _ in range(400):
            p, events = descent.gd_step(p, gt, h)
            for i in events.switches:
                assert i not in fired, "switch fired twice for one component"
                fired.add(i)

    def test_column_collapse_detected(self):
        """A step sending a column to exactly zero norm raises."""
        gt = model.ground_truth_from_decomposition(
            np.array([0.0]), np.eye(4)[:, 1:2], 3
        )
        U = np.zeros((4, 1))
        U[0, 0] = 1.0
        p = model.ModelParams(d=4, l=3, U=U, c=np.ones(1), chat=np.ones(1),
                              a=np.ones(1), switched=np.ones(1, dtype=bool))
        # gradient column = l * u (unit e1); eta = 1/l hits exactly zero
        h = tiny_hyper(m=1, lam=0.0, eta=1.0 / 3.0)
        with pytest.raises(descent.ColumnCollapseError):
            descent.gd_step(p, gt, h)


class TestRun:
    def test_byte_for_byte_determinism(self):
        h = tiny_hyper(H=25, K=2)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=5)
        _, m1, o1 = descent.run(h, gt, seed=11)
        _, m2, o2 = descent.run(h, gt, seed=11)
        np.testing.assert_array_equal(m1.loss, m2.loss)
        np.testing.assert_array_equal(m1.residual, m2.residual)
        np.testing.assert_array_equal(m1.pbu_sq, m2.pbu_sq)
        assert o1 == o2

    def test_metrics_bookkeeping(self):
        h = tiny_hyper(H=20, K=3, epsilon=1e-9)  # will not converge
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=6)
        _, metrics, outcome = descent.run(h, gt, seed=12)
        n = len(metrics.iteration)
        assert n == 1 + h.K * h.H
        np.testing.assert_array_equal(metrics.iteration, np.arange(n))
        assert metrics.epoch[0] == 0 and metrics.path_len[0] == 0.0
        assert np.isnan(metrics.tracked_norm[0]) and np.isnan(metrics.tracked_corr[0])
        assert np.all(np.isfinite(metrics.tracked_corr[1:]))
        assert len(metrics.reinit_index) == len(metrics.reinit_correlation) == h.K
        assert metrics.epoch_start_iter == [1 + e * h.H for e in range(h.K)]
        assert outcome.epochs_used == h.K and not outcome.success
        assert outcome.iterations == n - 1
        # path length accumulates within an epoch and resets across epochs
        for e in range(h.K):
            seg = metrics.path_len[1 + e * h.H : 1 + (e + 1) * h.H]
            assert np.all(np.diff(seg) >= 0)

    def test_vacuous_threshold_succeeds_immediately(self):
        h = tiny_hyper(epsilon=10.0)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=7)
        _, metrics, outcome = descent.run(h, gt, seed=13)
        assert outcome.success and outcome.iterations == 0
        assert len(metrics.iteration) == 1 and outcome.epochs_used == 0

    def test_on_iteration_stream_matches_metrics(self):
        h = tiny_hyper(H=15, K=2, epsilon=1e-9)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=8)
        rows = []
        _, metrics, _ = descent.run(h, gt, seed=14, on_iteration=rows.append)
        assert len(rows) == len(metrics.iteration)
        np.testing.assert_array_equal([r["iter"] for r in rows], metrics.iteration)
        np.testing.assert_array_equal([r["loss"] for r in rows], metrics.loss)
        np.testing.assert_array_equal([r["pbu_sq"] for r in rows], metrics.pbu_sq)
        assert all(tuple(r) == ("iter", "epoch", "loss", "residual", "pbu_sq", "path_len")
                   for r in rows)

    def test_params0_resumes_from_given_point(self):
        h = tiny_hyper(H=10, K=1, epsilon=1e-12)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=9)
        p0 = descent.init_params(h, seed=21)
        _, metrics, _ = descent.run(h, gt, seed=22, params0=p0)
        start_loss = model.loss(p0, gt, h.lam)
        assert metrics.loss[0] == pytest.approx(start_loss, rel=1e-12)


class TestCorrelation:
    def test_projected_and_residual_paths_agree(self):
        """The definition (mode-wise projection) and the in-run shortcut
        (plain residual contraction) are the same number."""
        h = tiny_hyper(m=6)
        gt = model.generate_ground_truth(h.d, 2, h.l, seed=10)
        p = descent.init_params(h, seed=23)
        res = model.residual_flat(p, gt)
        for i in range(p.m):
            a = descent.correlation(p, i, gt)
            b = descent._correlation_from_residual(res, p, i, gt)
            assert a == pytest.approx(b, rel=1e-9, abs=1e-12)

    def test_orthogonal_component_raises(self):
        gt = model.ground_truth_from_decomposition(
            np.array([1.0]), np.eye(4)[:, :1], 3
        )
        U = np.zeros((4, 2))
        U[0, 0] = 1e-3
        U[1, 1] = 1e-3  # column 1 is orthogonal to span{e1}
        p = model.ModelParams(d=4, l=3, U=U, c=np.ones(2) * 1e3,
                              chat=np.ones(2) * 1e3, a=np.ones(2),
                              switched=np.zeros(2, dtype=bool))
        with pytest.raises(ValueError):
            descent.correlation(p, 1, gt)


class TestVanillaRun:
    def test_series_length_and_callback(self):
        gt = model.generate_ground_truth(4, 2, 3, seed=11)
        rng = np.random.default_rng(0)
        U0 = 1e-3 * rng.standard_normal((4, 6))
        c0 = np.ones(6)
        seen = []
        out = descent.vanilla_run(U0, c0, gt, eta=1e-3, steps=25,
                                  on_step=lambda t, v: seen.append((t, v)))
        assert out.losses.shape == (26,)
        assert [t for t, _ in seen] == list(range(26))
        np.testing.assert_allclose([v for _, v in seen], out.losses, rtol=0)

    def test_divergence_guard(self):
        gt = model.generate_ground_truth(3, 1, 3, seed=12)
        rng = np.random.default_rng(1)
        U0 = rng.standard_normal((3, 4))
        with pytest.raises(descent.DivergenceError):
            descent.vanilla_run(U0, np.ones(4), gt, eta=10.0, steps=50)


class TestGrowthWindows:
    def _metrics(self, epochs, corrs, norms):
        n = len(epochs)
        nan = np.full(n, np.nan)
        return descent.RunMetrics(
            iteration=np.arange(n), epoch=np.asarray(epochs),
            loss=nan, residual=nan, pbu_sq=nan, path_len=nan,
            tracked_norm=np.asarray(norms, dtype=float),
            tracked_corr=np.asarray(corrs, dtype=float),
            reinit_index=[], reinit_correlation=[], epoch_start_iter=[],
            switch_events=[],
        )

    def test_windows_found_and_scored(self):
        m = self._metrics(
            epochs=[0, 1, 1, 1, 1, 1],
            corrs=[np.nan, -1.0, -1.0, -1.0, 0.2, -1.0],
            norms=[np.nan, 1.0, 1.1, 1.25, 1.2, 1.3],
        )
        wins = descent.growth_windows(m, threshold=-0.5, eta=0.1)
        assert len(wins) == 1
        w = wins[0]
        assert (w.start, w.end, w.epoch) == (1, 3, 1)
        assert w.strictly_increasing
        expected_gamma = min((1.1 / 1.0) ** 2 - 1, (1.25 / 1.1) ** 2 - 1) / 0.1
        assert w.gamma == pytest.approx(expected_gamma, rel=1e-12)

    def test_windows_do_not_cross_epochs(self):
        m = self._metrics(
            epochs=[1, 1, 2, 2],
            corrs=[-1.0, -1.0, -1.0, -1.0],
            norms=[1.0, 1.1, 0.9, 1.0],
        )
        wins = descent.growth_windows(m, threshold=-0.5, eta=1.0)
        assert len(wins) == 2
        assert wins[0].epoch == 1 and wins[1].epoch == 2

    def test_short_stretches_skipped(self):
        m = self._metrics(
            epochs=[1, 1, 1],
            corrs=[-1.0, 0.5, -1.0],
            norms=[1.0, 1.0, 1.0],
        )
        assert descent.growth_windows(m, threshold=-0.5, eta=1.0, min_length=2) == []

    def test_real_run_produces_consistent_windows(self):
        h = tiny_hyper(H=40, K=2, epsilon=1e-9)
        gt = model.generate_ground_truth(h.d, h.r, h.l, seed=13)
        _, metrics, _ = descent.run(h, gt, seed=31)
        for w in descent.growth_windows(metrics, threshold=-0.01, eta=h.eta):
            assert w.end > w.start
            seg = metrics.tracked_corr[w.start : w.end + 1]
            assert np.all(seg < -0.01)
            assert np.isfinite(w.gamma)
