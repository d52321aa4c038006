"""Release acceptance gate.

Each test pins one shipping criterion at a fixed tolerance and prints a
single verdict line, so a verbose run reads as a checklist. Tolerances
here are contracts: loosening one is a release decision, not a test fix.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from microloc import cli, filters
from microloc.errors import DegenerateGeometry, NoIntersection
from microloc.evaluate import accuracy, error_histogram, precision, ranging_report
from microloc.codec import EddystoneTlmFrame, decode, encode
from microloc.model import RssiSample, Trace
from microloc.position import (
    Anchor,
    Fingerprint,
    FingerprintDb,
    fingerprint_locate,
    tdoa_locate,
    triangulate,
    trilaterate,
)
from microloc.ranging import SPEED_OF_LIGHT, PathLossModel, distance_to_rssi
from microloc.sim import Scenario, SimConfig, ranging_experiment, simulate

from conftest import FRAME_VARIANTS, random_frame


@contextmanager
def verdict(capsys, n: int, description: str):
    ok = False
    try:
        yield
        ok = True
    finally:
        with capsys.disabled():
            print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {description}")


def _single_beacon_trace(zs: np.ndarray) -> Trace:
    return Trace(tuple(
        RssiSample(timestamp_ms=i * 200, beacon_id="b", rssi_dbm=float(z))
        for i, z in enumerate(zs)
    ))


def _batched_kalman_reference(seqs, dt: float, q: float, r: float, p0: float) -> list[np.ndarray]:
    """Dense-matrix reference filter, all sequences advanced in lockstep.

    Written against the filter contract (2-state constant-velocity model,
    position-only measurement, output after the update) using plain numpy
    linear algebra, sharing no code with the scalar implementation.
    """
    n = len(seqs)
    max_len = max(len(s) for s in seqs)
    z = np.zeros((n, max_len))
    for i, s in enumerate(seqs):
        z[i, :len(s)] = s
    F = np.array([[1.0, dt], [0.0, 1.0]])
    Q = q * np.eye(2)
    x = np.zeros((n, 2))
    x[:, 0] = z[:, 0]
    P = np.broadcast_to(p0 * np.eye(2), (n, 2, 2)).copy()
    out = np.zeros((n, max_len))
    for t in range(max_len):
        x = x @ F.T
        P = F @ P @ F.T + Q
        S = P[:, 0, 0] + r
        K = P[:, :, 0] / S[:, None]
        x = x + K * (z[:, t] - x[:, 0])[:, None]
        P = P - K[:, :, None] * P[:, 0:1, :]
        out[:, t] = x[:, 0]
    return [out[i, :len(s)] for i, s in enumerate(seqs)]


def test_criterion_01_filter_matches_dense_reference(capsys):
    with verdict(capsys, 1, "smoothed rssi matches dense-matrix reference, "
                            "1000 random streams, rel 1e-9, under 5 s"):
        rng = np.random.default_rng(101)
        seqs = []
        for _ in range(1000):
            n = int(rng.integers(2, 501))
            level = float(rng.uniform(-90.0, -40.0))
            sigma = float(rng.uniform(0.0, 5.0))
            seqs.append(np.clip(level + sigma * rng.standard_normal(n), -110.0, -10.0))
        p = filters.default_params()
        t0 = time.perf_counter()
        expected = _batched_kalman_reference(seqs, p.dt, p.Q[0][0], p.R, p.P0[0][0])
        for zs, want in zip(seqs, expected):
            got = filters.smooth_trace(_single_beacon_trace(zs), p).rssi_values()
            assert np.allclose(got, want, rtol=1e-9, atol=1e-9)
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_criterion_02_default_parameters_are_exact(capsys):
    with verdict(capsys, 2, "default filter and channel parameters carry "
                            "their exact pinned values"):
        p = filters.default_params()
        assert p.dt == 0.2
        assert p.F == ((1.0, 0.2), (0.0, 1.0))
        assert p.H == (1.0, 0.0)
        assert p.Q == ((0.001, 0.0), (0.0, 0.001))
        assert p.R == 0.10
        assert p.P0 == ((100.0, 0.0), (0.0, 100.0))
        st = filters.initial_state(-60.0, p)
        assert st.x == (-60.0, 0.0) and st.P == p.P0
        plm = PathLossModel()
        assert plm.ref_power_dbm == -59.0 and plm.exponent == 2.0
        cfg = SimConfig(seed=0)
        assert cfg.advertising_interval_ms == 100
        assert cfg.duration_ms == 120_000
        assert cfg.shadow_sigma_db == 4.0
        assert cfg.channels == (37, 38, 39)
        assert SPEED_OF_LIGHT == 299_792_458.0
        for key, value in [("dt", 0.2), ("q", 0.001), ("r", 0.10), ("p0", 100.0),
                           ("ref_power_dbm", -59.0), ("exponent", 2.0),
                           ("window_n", 10), ("immediate_m", 0.5), ("near_m", 4.0)]:
            assert cli.DEFAULT_CONFIG[key] == value


def test_criterion_03_ranging_sweep_error_envelopes(capsys):
    with verdict(capsys, 3, "ten-spot sweep over 20 seeds: raw worst-spot rms in "
                            "[2,5] m with filtered <= raw/2 and <= 1.5 m in >= "
                            "18/20 seeds, under 60 s"):
        t0 = time.perf_counter()
        good = 0
        for seed in range(20):
            summary = ranging_report(SimConfig(seed=seed)).summary
            raw = summary["raw"]["max_spot_rms_m"]
            filt = summary["filtered"]["max_spot_rms_m"]
            if 2.0 <= raw <= 5.0 and filt <= 0.5 * raw and filt <= 1.5:
                good += 1
        elapsed = time.perf_counter() - t0
        assert good >= 18, f"envelopes held in only {good}/20 seeds"
        assert elapsed < 60.0, f"took {elapsed:.2f}s"


def test_criterion_04_geometry_solvers_recover_truth(capsys):
    with verdict(capsys, 4, "1000 random geometries per solver (lateration, "
                            "angulation, range-difference) recover the true "
                            "point to 1e-6 m, under 10 s"):
        rng = np.random.default_rng(404)
        t0 = time.perf_counter()

        for _ in range(1000):
            while True:
                pts = rng.uniform(0.0, 10.0, size=(int(rng.integers(3, 6)), 2))
                centered = pts - pts.mean(axis=0)
                if float(np.linalg.eigvalsh(centered.T @ centered)[0]) > 0.5:
                    break
            truth = rng.uniform(0.0, 10.0, size=2)
            anchors = [Anchor(f"a{i}", (float(x), float(y)))
                       for i, (x, y) in enumerate(pts)]
            dists = [float(np.hypot(*(truth - p))) for p in pts]
            est = trilaterate(anchors, dists)
            assert math.hypot(est.position[0] - truth[0],
                              est.position[1] - truth[1]) <= 1e-6

        for _ in range(1000):
            a1 = rng.uniform(0.0, 2.0, size=2)
            a2 = a1 + np.array([float(rng.uniform(4.0, 8.0)),
                                float(rng.uniform(-1.0, 1.0))])
            base = a2 - a1
            while True:
                truth = rng.uniform(-2.0, 12.0, size=2)
                off = truth - a1
                if abs(base[0] * off[1] - base[1] * off[0]) > 1.0:
                    break
            anchors = [Anchor("a", (float(a1[0]), float(a1[1]))),
                       Anchor("b", (float(a2[0]), float(a2[1])))]
            bearings = [math.atan2(truth[1] - a1[1], truth[0] - a1[0]),
                        math.atan2(truth[1] - a2[1], truth[0] - a2[0])]
            est = triangulate(anchors, bearings)
            assert math.hypot(est.position[0] - truth[0],
                              est.position[1] - truth[1]) <= 1e-6

        for _ in range(1000):
            m = int(rng.integers(3, 5))
            w, h = float(rng.uniform(6.0, 12.0)), float(rng.uniform(6.0, 12.0))
            corners = np.array([(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)][:m])
            corners = corners + rng.uniform(-0.5, 0.5, size=corners.shape)
            truth = np.array([float(rng.uniform(0.15, 0.85)) * w,
                              float(rng.uniform(0.15, 0.85)) * h])
            receivers = [Anchor(f"r{i}", (float(x), float(y)))
                         for i, (x, y) in enumerate(corners)]
            d = [float(np.hypot(*(truth - c))) for c in corners]
            diffs = [di - d[0] for di in d[1:]]
            est = tdoa_locate(receivers, diffs)
            assert math.hypot(est.position[0] - truth[0],
                              est.position[1] - truth[1]) <= 1e-6

        collinear = [Anchor("a", (0.0, 0.0)), Anchor("b", (4.0, 0.0)),
                     Anchor("c", (8.0, 0.0))]
        with pytest.raises(DegenerateGeometry):
            trilaterate(collinear, [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateGeometry):
            tdoa_locate(collinear, [1.0, 2.0])
        with pytest.raises(NoIntersection):
            triangulate(collinear[:2], [0.5, 0.5])

        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"took {elapsed:.2f}s"


_POWER_BYTE = {"ibeacon": 24, "altbeacon": 22, "uid": 3, "url": 3, "eid": 3}


def _frame_power(frame, variant: str) -> int:
    return (frame.power if variant == "ibeacon" else
            frame.ref_rssi if variant == "altbeacon" else frame.tx_power)


def test_criterion_05_codec_round_trips_all_variants(capsys):
    with verdict(capsys, 5, "10000 random frames per variant survive both "
                            "encode/decode identities; power bytes follow two's "
                            "complement over all of [-128,-1]; under 5 s"):
        rng = np.random.default_rng(505)
        t0 = time.perf_counter()
        for variant in FRAME_VARIANTS:
            for _ in range(10_000):
                frame = random_frame(rng, variant)
                payload = encode(frame)
                assert decode(payload) == frame
                assert encode(decode(payload)) == payload
                if variant in _POWER_BYTE:
                    value = _frame_power(frame, variant)
                    assert payload[_POWER_BYTE[variant]] == value & 0xFF
                else:
                    assert isinstance(frame, EddystoneTlmFrame)

        for variant, idx in _POWER_BYTE.items():
            base = random_frame(rng, variant)
            field = ("power" if variant == "ibeacon" else
                     "ref_rssi" if variant == "altbeacon" else "tx_power")
            for value in range(-128, 0):
                frame = replace(base, **{field: value})
                payload = encode(frame)
                assert payload[idx] == value + 256
                assert _frame_power(decode(payload), variant) == value

        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_criterion_06_window_ops_match_list_reference(capsys):
    with verdict(capsys, 6, "2000 random push sequences (100000 pushes) match "
                            "the list reference model; variance matches "
                            "two-pass numpy to 1e-12"):
        rng = np.random.default_rng(606)
        total = 0
        for _ in range(2000):
            cap = int(rng.integers(2, 61))
            win = filters.RssiWindow(cap)
            ref: list[float] = []
            for v in rng.uniform(-100.0, -30.0, size=50):
                v = float(v)
                win = filters.window_push(win, v)
                ref = (ref + [v])[-cap:]
                assert win.values == tuple(ref)
                if len(ref) >= 2:
                    assert math.isclose(filters.window_variance(win),
                                        float(np.var(ref)),
                                        rel_tol=1e-12, abs_tol=1e-12)
                total += 1
        assert total == 100_000


def test_criterion_07_dynamic_filter_is_quiet_on_quiet_input(capsys):
    with verdict(capsys, 7, "20 noise-free constant streams of 500 samples: "
                            "post-warm-up dynamic-Q output variance never "
                            "exceeds static-Q output variance"):
        params = filters.default_params()
        window_n = 10
        for seed in range(20):
            d = 0.5 + (seed % 10) * 0.5
            cfg = SimConfig(seed=seed, shadow_sigma_db=0.0, interval_jitter_ms=0,
                            duration_ms=50_000)
            scenario = Scenario(beacons=(Anchor("b0", (0.0, 0.0)),),
                                device_path=((0, (d, 0.0)),))
            trace = simulate(scenario, cfg)
            assert len(trace.samples) == 500
            settled_static = filters.smooth_trace(trace, params).rssi_values()[window_n:]
            settled_dynamic = filters.smooth_trace_dynamic(
                trace, params, window_n, 1.0).rssi_values()[window_n:]
            v_static = float(np.var(settled_static))
            v_dynamic = float(np.var(settled_dynamic))
            assert v_dynamic <= v_static, f"seed {seed}: {v_dynamic} > {v_static}"
            assert v_dynamic <= 1e-18, f"seed {seed}: dynamic output not flat"


def test_criterion_08_fingerprint_grid_accuracy(capsys):
    with verdict(capsys, 8, "5x5 survey grid: 25/25 exact self-queries and "
                            "mean error of 200 interior queries <= 1.0 m"):
        plm = PathLossModel()
        beacons = {"c0": (0.0, 0.0), "c1": (4.0, 0.0), "c2": (0.0, 4.0), "c3": (4.0, 4.0)}

        def signature(x: float, y: float) -> dict[str, float]:
            return {
                b: distance_to_rssi(max(math.hypot(x - bx, y - by), 0.01), plm)
                for b, (bx, by) in beacons.items()
            }

        grid = [(float(x), float(y)) for y in range(5) for x in range(5)]
        db = FingerprintDb(entries=tuple(
            Fingerprint(position=p, signature=signature(*p)) for p in grid
        ))

        for p in grid:
            est = fingerprint_locate(db, signature(*p), k=1)
            assert est.position == p

        rng = np.random.default_rng(808)
        errors = []
        for _ in range(200):
            x, y = float(rng.uniform(0.0, 4.0)), float(rng.uniform(0.0, 4.0))
            est = fingerprint_locate(db, signature(x, y), k=1)
            errors.append(math.hypot(est.position[0] - x, est.position[1] - y))
        mean_error = sum(errors) / len(errors)
        assert mean_error <= 1.0, f"mean interior error {mean_error:.3f} m"


def test_criterion_09_metrics_match_reference_arithmetic(capsys):
    with verdict(capsys, 9, "1000 random inputs: accuracy/precision match "
                            "reference arithmetic to 1e-12 and histogram "
                            "counts match brute-force binning"):
        rng = np.random.default_rng(909)
        for _ in range(1000):
            n = int(rng.integers(2, 101))
            ests = rng.uniform(0.0, 8.0, size=n)
            truth = float(rng.uniform(0.0, 8.0))
            assert math.isclose(accuracy(ests, truth),
                                float(np.mean(np.abs(ests - truth))),
                                rel_tol=1e-12, abs_tol=1e-12)
            assert math.isclose(precision(ests), float(np.std(ests)),
                                rel_tol=1e-12, abs_tol=1e-12)
            errors = np.abs(ests - truth)
            width = float(rng.choice([0.1, 0.25, 0.5]))
            hist = error_histogram(errors, width)
            assert sum(hist.counts) == n
            for i, count in enumerate(hist.counts):
                lo, hi = hist.edges[i], hist.edges[i + 1]
                assert count == int(np.sum((errors >= lo) & (errors < hi)))


def test_criterion_10_reproduction_is_byte_deterministic(capsys, tmp_path):
    with verdict(capsys, 10, "two reproduction runs with one seed write "
                             "byte-identical reports with the pinned CSV schemas"):
        d1, d2 = tmp_path / "run1", tmp_path / "run2"
        assert cli.main(["--seed", "123", "reproduce", str(d1)]) == 0
        assert cli.main(["--seed", "123", "reproduce", str(d2)]) == 0
        for name in ("report.json", "spot_summary.csv", "error_hist.csv"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

        spot_lines = (d1 / "spot_summary.csv").read_text().splitlines()
        assert spot_lines[0] == "true_m,pipeline,mean_m,accuracy_m,precision_m,n"
        assert len(spot_lines) == 1 + 10 * 3

        hist_lines = (d1 / "error_hist.csv").read_text().splitlines()
        assert hist_lines[0] == "pipeline,bin_lo,bin_hi,count"
        assert len(hist_lines) > 1

        doc = json.loads((d1 / "report.json").read_text())
        assert set(doc["summary"]) == {"raw", "filtered", "dynamic"}
        assert len(doc["spots"]) == 10
        assert doc["config"]["seed"] == 123
