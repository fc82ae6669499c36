from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from vmouse import analysis
from vmouse.service import create_app


def make_client(state_dir=None):
    return TestClient(create_app(state_dir=state_dir))


def synthetic_trial_bodies(d=300.0, w=40.0, n=15, seed=0, center=(960.0, 540.0)):
    """Plausible trial payloads around the ISO circle."""
    rng = np.random.default_rng(seed)
    cfg = analysis.TaskConfig(d_px=d, w_px=w, center=center)
    centers = analysis.task_geometry(cfg)
    order = analysis.target_order(cfg)
    bodies = []
    for j in range(1, n + 1):
        prev = centers[order[j - 1]]
        tgt = centers[order[j]]
        click = tgt + rng.normal(scale=w / 8, size=2)
        path = []
        for i, f in enumerate(np.linspace(0.0, 1.0, 20)):
            x = prev[0] + f * (click[0] - prev[0])
            y = prev[1] + f * (click[1] - prev[1])
            path.append([i * 30.0, float(x), float(y)])
        bodies.append({
            "prev_target": [float(prev[0]), float(prev[1])],
            "target": [float(tgt[0]), float(tgt[1])],
            "click": [float(click[0]), float(click[1])],
            "path": path,
        })
    return bodies


def start_session(client, **kw):
    body = {"d_px": 300.0, "w_px": 40.0, "p_percent": 50, "cpi": 800.0}
    body.update(kw)
    r = client.post("/session/start", json=body)
    assert r.status_code == 200
    return r.json()


class TestSessions:
    def test_start_returns_geometry(self):
        client = make_client()
        out = start_session(client)
        assert out["v"] == 1
        assert len(out["targets"]) == 15
        assert len(out["order"]) == 16
        cfg = analysis.TaskConfig(d_px=300, w_px=40)
        np.testing.assert_allclose(out["targets"], analysis.task_geometry(cfg))

    def test_unknown_session_404(self):
        client = make_client()
        assert client.get("/session/nope/summary").status_code == 404
        assert client.post("/session/nope/trial", json={}).status_code in (404, 422)

    def test_malformed_body_field_diagnostics(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        r = client.post(f"/session/{sid}/trial", json={"prev_target": [0, 0]})
        assert r.status_code == 422
        detail = r.json()["detail"]
        missing = {d["loc"][-1] for d in detail}
        assert {"target", "click", "path"} <= missing

    def test_summary_matches_offline_analysis(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        bodies = synthetic_trial_bodies()
        for b in bodies:
            r = client.post(f"/session/{sid}/trial", json=b)
            assert r.status_code == 200
        summary = client.get(f"/session/{sid}/summary").json()["summary"]

        cfg = analysis.TaskConfig(d_px=300, w_px=40)
        trials = []
        for b in bodies:
            path = np.asarray(b["path"], dtype=float)
            path[:, 0] /= 1000.0
            trials.append(analysis.Trial(
                prev_target=tuple(b["prev_target"]),
                target=tuple(b["target"]),
                click=tuple(b["click"]),
                path=path,
                mt=float(path[-1, 0] - path[0, 0]),
            ))
        kept, _ = analysis.screen_outliers(trials, cfg)
        offline = analysis.summarize_session(kept, cfg)
        for key in analysis.SESSION_CSV_COLUMNS:
            assert summary[key] == pytest.approx(getattr(offline, key), abs=1e-12)

    def test_degenerate_summary_is_400(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        r = client.get(f"/session/{sid}/summary")
        assert r.status_code == 400


class TestOptimizerEndpoints:
    def test_first_step_returns_seed(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        out = client.post(f"/optimizer/{sid}/step", json={}).json()
        assert out["next_p"] == 30
        assert out["n_obs"] == 0

    def test_pdr_observations_advance_seeds_then_ei(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        suggestions = [client.post(f"/optimizer/{sid}/step", json={}).json()["next_p"]]
        for _ in range(3):
            out = client.post(
                f"/optimizer/{sid}/step",
                json={"pdr": 0.02 + 0.0001 * suggestions[-1]},
            ).json()
            suggestions.append(out["next_p"])
        assert suggestions[:3] == [30, 50, 70]
        assert all(20 <= s <= 80 for s in suggestions)
        state = client.get(f"/optimizer/{sid}/state").json()
        assert state["v"] == 1
        assert len(state["observations"]) == 3
        assert len(state["posterior"]["grid"]) == 61

    def test_override_source_tagged(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        client.post(f"/optimizer/{sid}/step", json={})
        client.post(f"/optimizer/{sid}/step",
                    json={"pdr": 0.02, "p_percent": 44, "source": "override"})
        state = client.get(f"/optimizer/{sid}/state").json()
        assert state["observations"][0]["p_percent"] == 44
        assert state["observations"][0]["source"] == "override"

    def test_step_consumes_session_trials(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        client.post(f"/optimizer/{sid}/step", json={})  # suggest seed 30
        for b in synthetic_trial_bodies(seed=5):
            client.post(f"/session/{sid}/trial", json=b)
        out = client.post(f"/optimizer/{sid}/step", json={}).json()
        assert out["n_obs"] == 1
        assert out["observed"]["p_percent"] == 30
        assert out["observed"]["pdr"] > 0


class TestSyntheticClientLoop:
    def test_twelve_steps_recover_client_preference(self):
        # a scripted synthetic client plays a block at each suggested p and
        # reports the measured PDR back through the HTTP surface
        from vmouse.arm import ArmModel, SyntheticUser

        p_ref = 0.40
        user = SyntheticUser(ArmModel(p_ref=p_ref), seed=17)
        client = make_client()
        sid = start_session(client)["session_id"]
        next_p = client.post(f"/optimizer/{sid}/step", json={}).json()["next_p"]
        for _ in range(12):
            pdr = user.aim_pdr(next_p, 60.0)
            out = client.post(f"/optimizer/{sid}/step", json={"pdr": pdr}).json()
            next_p = out["next_p"]
        state = client.get(f"/optimizer/{sid}/state").json()
        assert abs(state["posterior_argmin"] - p_ref * 100) <= 10.0
        assert 20 <= next_p <= 80


class TestPushChannel:
    def test_trial_and_cursor_pushes(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        with client.websocket_connect(f"/session/{sid}/stream") as ws:
            client.post(f"/session/{sid}/cursor",
                        json={"samples": [[1.0, 2.0, 3.0]]})
            msg = ws.receive_json()
            assert msg["v"] == 1
            assert msg["type"] == "cursor"
            assert msg["samples"] == [[1.0, 2.0, 3.0]]
            client.post(f"/session/{sid}/trial",
                        json=synthetic_trial_bodies(seed=2)[0])
            msg = ws.receive_json()
            assert msg["type"] == "trial"

    def test_unknown_session_ws_rejected(self):
        client = make_client()
        with pytest.raises(Exception):
            with client.websocket_connect("/session/zzz/stream") as ws:
                ws.receive_json()

    def test_optimizer_step_pushes_p_changed(self):
        client = make_client()
        sid = start_session(client)["session_id"]
        with client.websocket_connect(f"/session/{sid}/stream") as ws:
            client.post(f"/optimizer/{sid}/step", json={})
            msg = ws.receive_json()
            assert msg["type"] == "p_changed"
            assert msg["p_percent"] == 30


class TestCrashRestart:
    def test_sessions_and_optimizer_reconstructed(self, tmp_path):
        state = tmp_path / "svc"
        client = make_client(state_dir=state)
        sid = start_session(client, p_percent=40)["session_id"]
        for b in synthetic_trial_bodies(seed=9):
            client.post(f"/session/{sid}/trial", json=b)
        client.post(f"/optimizer/{sid}/step", json={})
        client.post(f"/optimizer/{sid}/step", json={"pdr": 0.021})
        client.post(f"/optimizer/{sid}/step", json={"pdr": 0.018})
        summary_before = client.get(f"/session/{sid}/summary").content
        opt_before = client.get(f"/optimizer/{sid}/state").content

        fresh = make_client(state_dir=state)  # simulated restart
        summary_after = fresh.get(f"/session/{sid}/summary").content
        opt_after = fresh.get(f"/optimizer/{sid}/state").content
        assert summary_after == summary_before
        assert opt_after == opt_before
