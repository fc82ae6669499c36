from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmouse.analysis import (
    AnalysisError,
    DegenerateSessionError,
    RankDeficientError,
    TaskConfig,
    Trial,
    ZeroLengthPathError,
    best_subset,
    block_summary,
    blocks_csv,
    fitts_fit,
    friedman_test,
    ideal_path_start,
    mean_ci,
    path_deviation,
    screen_outliers,
    segment_deviations,
    sessions_csv,
    summarize_session,
    target_order,
    task_geometry,
)


def straight_trial(start, target, click=None, mt=0.6, n=25, lateral=0.0):
    """Path from start to click with optional constant-ish lateral offsets."""
    click = click if click is not None else target
    ts = np.linspace(0.0, mt, n)
    frac = np.linspace(0.0, 1.0, n)
    x = start[0] + frac * (click[0] - start[0])
    y = start[1] + frac * (click[1] - start[1])
    if lateral:
        dx = click[0] - start[0]
        dy = click[1] - start[1]
        norm = math.hypot(dx, dy)
        bump = lateral * np.sin(np.pi * frac)
        x += bump * (-dy / norm)
        y += bump * (dx / norm)
    path = np.column_stack([ts, x, y])
    return Trial(prev_target=start, target=target, click=click, path=path, mt=mt)


class TestGeometry:
    def test_radius(self):
        cfg = TaskConfig(d_px=300, w_px=20)
        centers = task_geometry(cfg)
        r = np.hypot(centers[:, 0] - cfg.center[0], centers[:, 1] - cfg.center[1])
        np.testing.assert_allclose(r, 150.0, rtol=1e-12)

    def test_consecutive_distance_chord(self):
        cfg = TaskConfig(d_px=300, w_px=20)
        centers = task_geometry(cfg)
        order = target_order(cfg)
        d = [np.hypot(*(centers[order[i + 1]] - centers[order[i]])) for i in range(15)]
        expected = 300 * math.sin(8 * math.pi / 15)
        np.testing.assert_allclose(d, expected, rtol=1e-9)
        assert expected == pytest.approx(0.9945 * 300, rel=1e-3)

    def test_order_visits_all_and_returns(self):
        cfg = TaskConfig(d_px=300, w_px=20)
        order = target_order(cfg)
        assert len(order) == 16
        assert order[0] == order[-1] == 0
        assert sorted(order[:-1]) == list(range(15))

    def test_invalid_config(self):
        with pytest.raises(AnalysisError):
            TaskConfig(d_px=20, w_px=20)
        with pytest.raises(AnalysisError):
            TaskConfig(d_px=100, w_px=0)


class TestOutliers:
    cfg = TaskConfig(d_px=300, w_px=20)

    def test_slow_trial_removed(self):
        # ID = log2(16) = 4 bits; 4.5 s exceeds it
        t = straight_trial((0, 0), (300, 0), mt=4.5)
        kept, removed = screen_outliers([t], self.cfg)
        assert not kept
        assert "movement time" in removed[0][1]

    def test_fast_clean_trial_kept(self):
        t = straight_trial((0, 0), (300, 0), mt=0.5)
        kept, removed = screen_outliers([t], self.cfg)
        assert kept and not removed

    def test_far_click_removed(self):
        t = straight_trial((0, 0), (300, 0), click=(350, 0), mt=0.5)
        kept, removed = screen_outliers([t], self.cfg)
        assert not kept
        assert "2W" in removed[0][1]

    def test_short_movement_removed(self):
        t = straight_trial((0, 0), (100, 0), click=(100, 0), mt=0.5)
        t = Trial(t.prev_target, (300, 0), t.click, t.path, t.mt)
        kept, removed = screen_outliers([t], self.cfg)
        assert not kept
        assert "D/2" in removed[0][1]

    def test_idempotent(self):
        trials = [
            straight_trial((0, 0), (300, 0), mt=0.5),
            straight_trial((0, 0), (300, 0), mt=4.5),
            straight_trial((0, 0), (300, 0), click=(350, 0), mt=0.5),
        ]
        kept1, _ = screen_outliers(trials, self.cfg)
        kept2, removed2 = screen_outliers(kept1, self.cfg)
        assert kept2 == kept1 and not removed2


class TestSummarize:
    def test_degenerate_endpoints_rejected(self):
        cfg = TaskConfig(d_px=300, w_px=20)
        trials = [straight_trial((0, 0), (300, 0), mt=0.5) for _ in range(5)]
        with pytest.raises(DegenerateSessionError):
            summarize_session(trials, cfg)

    def test_calculator_example(self):
        # D_e=900, W_e=90, MT=0.6 -> ID_e = log2(11), TP = log2(11)/0.6
        cfg = TaskConfig(d_px=900, w_px=90)
        sd_target = 90.0 / 4.133
        # ten zero-mean deviations with sum of squares 10 v^2 = 9 sd^2
        v = sd_target * math.sqrt(9.0 / 10.0)
        devs = [(v, 0), (-v, 0), (0, v), (0, -v), (v, 0),
                (-v, 0), (0, v), (0, -v), (v, 0), (-v, 0)]
        trials = []
        for dev in devs:
            target = (1000.0, 500.0)
            click = (target[0] + dev[0], target[1] + dev[1])
            start = (click[0] - 900.0, click[1])
            trials.append(straight_trial(start, target, click=click, mt=0.6))
        s = summarize_session(trials, cfg)
        assert s.sd_xy == pytest.approx(sd_target, rel=1e-9)
        assert s.w_e == pytest.approx(90.0, rel=1e-9)
        assert s.d_e == pytest.approx(900.0, rel=1e-9)
        assert s.id_e == pytest.approx(math.log2(11.0), rel=1e-9)
        assert s.tp == pytest.approx(math.log2(11.0) / 0.6, rel=1e-9)

    def test_needs_two_trials(self):
        cfg = TaskConfig(d_px=300, w_px=20)
        with pytest.raises(AnalysisError):
            summarize_session([straight_trial((0, 0), (300, 0))], cfg)

    def test_tp_invariant_under_rigid_rotation(self):
        cfg = TaskConfig(d_px=300, w_px=30)
        rng = np.random.default_rng(4)
        trials = []
        for i in range(12):
            ang = 2 * math.pi * i / 12
            target = (500 + 150 * math.cos(ang), 500 + 150 * math.sin(ang))
            dev = rng.normal(scale=6, size=2)
            click = (target[0] + dev[0], target[1] + dev[1])
            start = (500 - 150 * math.cos(ang), 500 - 150 * math.sin(ang))
            trials.append(straight_trial(start, target, click=click, mt=0.7))
        s1 = summarize_session(trials, cfg)

        rot = 0.7
        c, s = math.cos(rot), math.sin(rot)

        def rotate(pt):
            return (c * pt[0] - s * pt[1], s * pt[0] + c * pt[1])

        rotated = []
        for t in trials:
            path = t.path.copy()
            xy = path[:, 1:3] @ np.array([[c, s], [-s, c]])
            path[:, 1:3] = xy
            rotated.append(Trial(rotate(t.prev_target), rotate(t.target),
                                 rotate(t.click), path, t.mt))
        s2 = summarize_session(rotated, cfg)
        assert s2.id_e == pytest.approx(s1.id_e, rel=1e-9)
        assert s2.tp == pytest.approx(s1.tp, rel=1e-9)


class TestPathDeviation:
    def test_on_segment_zero(self):
        t = straight_trial((0, 0), (300, 0), mt=0.5)
        mae, rmse, pdr = path_deviation(t)
        assert mae == pytest.approx(0.0, abs=1e-9)
        assert rmse == pytest.approx(0.0, abs=1e-9)
        assert pdr == pytest.approx(0.0, abs=1e-12)

    def test_constant_offset_primitive(self):
        pts = np.column_stack([np.linspace(0, 100, 21), np.full(21, 3.0)])
        err = segment_deviations(pts, (0.0, 0.0), (100.0, 0.0))
        np.testing.assert_allclose(np.abs(err), 3.0, rtol=1e-12)
        assert np.abs(err).mean() == pytest.approx(3.0)
        assert np.sqrt((err**2).mean()) == pytest.approx(3.0)

    def test_triangular_deviation_hand_sum(self):
        # offsets 0,1,2,3,4,5,4,3,2,1,0 over a straight 100px movement:
        # sum = 25 over 11 points
        offsets = np.array([0, 1, 2, 3, 4, 5, 4, 3, 2, 1, 0], float)
        xs = np.linspace(0, 100, 11)
        path = np.column_stack([np.linspace(0, 0.5, 11), xs, offsets])
        t = Trial((0, 0), (100, 0), (100.0, 0.0), path, 0.5)
        mae, rmse, pdr = path_deviation(t)
        assert mae == pytest.approx(25.0 / 11.0, rel=1e-9)
        assert rmse == pytest.approx(math.sqrt(float((offsets**2).mean())), rel=1e-9)
        assert pdr == pytest.approx(mae / 100.0, rel=1e-9)

    def test_zero_length_ideal_path(self):
        path = np.array([[0.0, 5.0, 5.0], [0.1, 5.0, 5.0]])
        t = Trial((5, 5), (5, 5), (5.0, 5.0), path, 0.1)
        with pytest.raises(ZeroLengthPathError):
            path_deviation(t)

    def test_largest_submovement_start_detection(self):
        # small jitter burst, dwell, then the main movement
        t1 = np.column_stack([np.linspace(0, 0.1, 6),
                              np.linspace(0, 4, 6), np.zeros(6)])
        dwell = np.column_stack([np.linspace(0.12, 0.3, 10),
                                 np.full(10, 4.0), np.zeros(10)])
        t2 = np.column_stack([np.linspace(0.32, 0.8, 25),
                              np.linspace(4, 300, 25), np.zeros(25)])
        path = np.vstack([t1, dwell, t2])
        start = ideal_path_start(path)
        assert start[0] == pytest.approx(4.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_mae_never_exceeds_rmse(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(3, 40)
        xs = np.cumsum(rng.uniform(0.5, 5, n))
        ys = rng.normal(scale=5, size=n)
        path = np.column_stack([np.linspace(0, 1, n), xs, ys])
        t = Trial((xs[0], ys[0]), (xs[-1], ys[-1]),
                  (float(xs[-1]), float(ys[-1])), path, 1.0)
        try:
            mae, rmse, _ = path_deviation(t)
        except ZeroLengthPathError:
            return
        assert mae <= rmse + 1e-12


class TestFittsFit:
    def test_exact_line(self):
        sessions = []
        for ide in (1.0, 2.0, 3.0, 4.0):
            s = _summary_stub(id_e=ide, mt=0.1 + 0.2 * ide)
            sessions.append(s)
        fit = fitts_fit(sessions)
        assert fit.a == pytest.approx(0.1, abs=1e-12)
        assert fit.b == pytest.approx(0.2, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0)

    def test_constant_mt(self):
        sessions = [_summary_stub(id_e=i, mt=0.5) for i in (1, 2, 3)]
        fit = fitts_fit(sessions)
        assert fit.b == pytest.approx(0.0, abs=1e-12)
        assert fit.r2 == pytest.approx(0.0, abs=1e-12)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            fitts_fit([_summary_stub(2.0, 0.5), _summary_stub(2.0, 0.6)])
        with pytest.raises(RankDeficientError):
            fitts_fit([_summary_stub(2.0, 0.5)] * 4)


def _summary_stub(id_e, mt):
    from vmouse.analysis import SessionSummary

    return SessionSummary(
        d_px=300, w_px=20, n_trials=15, d_e=300, sd_xy=5, w_e=20.665,
        id_e=id_e, mt_mean=mt, tp=id_e / mt, mae=5, rmse=6, pdr=0.02)


def _rank_row_bruteforce(row):
    # independent average-rank computation by counting
    out = []
    for v in row:
        less = sum(1 for w in row if w < v)
        equal = sum(1 for w in row if w == v)
        out.append(less + (equal + 1) / 2.0)
    return out


class TestFriedman:
    def test_identical_rankings_max_statistic(self):
        m = [[1, 2, 3], [10, 20, 30], [2, 4, 8]]
        chi2, df = friedman_test(m)
        assert chi2 == pytest.approx(6.0, rel=1e-12)
        assert df == 2

    def test_all_equal_zero(self):
        chi2, df = friedman_test(np.ones((4, 5)))
        assert chi2 == 0.0
        assert df == 4

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            m = rng.integers(0, 6, size=(18, 7)).astype(float)  # ties likely
            chi2, df = friedman_test(m)
            n, k = m.shape
            ranks = np.array([_rank_row_bruteforce(row) for row in m])
            mean_ranks = ranks.mean(axis=0)
            expected = 12.0 * n / (k * (k + 1)) * float(
                ((mean_ranks - (k + 1) / 2.0) ** 2).sum())
            assert chi2 == pytest.approx(expected, abs=1e-9)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(10, 4))
        chi2a, _ = friedman_test(m)
        chi2b, _ = friedman_test(np.exp(m))
        assert chi2b == pytest.approx(chi2a, rel=1e-12)

    def test_degenerate_input(self):
        with pytest.raises(AnalysisError):
            friedman_test([[1, 2, 3]])


class TestMeanCI:
    def test_constant_values(self):
        assert mean_ci([5, 5, 5, 5]) == (5.0, 0.0)

    def test_hand_computed(self):
        mean, half = mean_ci([1, 2, 3, 4, 5])
        assert mean == 3.0
        assert half == pytest.approx(1.963, abs=1e-3)

    def test_halfwidth_shrinks_with_n(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=400)
        _, h1 = mean_ci(v[:100])
        _, h2 = mean_ci(v)
        assert h2 < h1

    def test_needs_two(self):
        with pytest.raises(AnalysisError):
            mean_ci([1.0])


class TestBlocks:
    def _block(self, p, tps):
        sessions = [_summary_stub(id_e=2 + 0.1 * i, mt=(2 + 0.1 * i) / tp)
                    for i, tp in enumerate(tps)]
        return block_summary(p, sessions)

    def test_best_subset_overlap_rule(self):
        rng = np.random.default_rng(0)
        blocks = [
            self._block(20, 5.0 + rng.normal(scale=0.01, size=6)),
            self._block(50, 6.0 + rng.normal(scale=0.01, size=6)),
            self._block(60, 5.99 + rng.normal(scale=0.01, size=6)),
            self._block(80, 5.1 + rng.normal(scale=0.01, size=6)),
        ]
        subset = best_subset(blocks)
        ps = sorted(b.p_percent for b in subset)
        assert 50 in ps and 80 not in ps and 20 not in ps

    def test_csv_round(self):
        blocks = [self._block(40, [5.0, 5.2, 5.1, 5.3, 5.0, 5.2])]
        text = blocks_csv(blocks)
        assert text.splitlines()[0].startswith("p_percent,")
        text2 = sessions_csv(blocks[0].sessions)
        assert text2.splitlines()[0].startswith("d_px,")
