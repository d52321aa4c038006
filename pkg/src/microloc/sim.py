"""Deterministic advertisement-stream simulator.

Generates the trace a scanner would record from fixed beacons while the
device follows a piecewise-constant path. All randomness comes from one
master seed through per-beacon derived substreams, so a (scenario, config)
pair maps to exactly one trace, byte for byte, on any platform.

Per advertisement event the generator consumes exactly four 64-bit draws,
in a fixed order, whether or not the packet survives:

    1. timing jitter        (one draw)
    2. packet loss gate     (one draw)
    3. shadowing deviate    (two draws)

Keeping the draw count fixed means toggling the loss probability or the
noise level never shifts the random sequence of later events.

Received power is log-distance path loss plus zero-mean Gaussian
shadowing, clamped to the representable RSSI range. Advertising channels
rotate 37, 38, 39 per event, matching how a beacon hops between the three
advertising channels.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, replace

from .errors import InvalidScenario
from .model import RSSI_MAX_DBM, RSSI_MIN_DBM, RssiSample, Trace, VALID_CHANNELS
from .position import Anchor
from .ranging import PathLossModel, distance_to_rssi
from .rng import SplitMix64, derive_seed

GENERATOR_ID = "splitmix64-boxmuller-v1"

MIN_SIM_DISTANCE_M = 0.01  # floor keeps the path loss model finite at contact

EXPERIMENT_SPOT_COUNT = 10
EXPERIMENT_SPOT_STEP_M = 0.5
EXPERIMENT_DURATION_MS = 120_000


@dataclass(frozen=True)
class SimConfig:
    """Channel model and timing parameters for a simulation run."""

    seed: int
    path_loss: PathLossModel = PathLossModel()
    shadow_sigma_db: float = 4.0
    advertising_interval_ms: int = 100
    interval_jitter_ms: int = 10
    packet_loss_prob: float = 0.0
    duration_ms: int = 120_000
    channels: tuple[int, ...] = VALID_CHANNELS

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValueError(f"seed must be an int, got {self.seed!r}")
        if not isinstance(self.path_loss, PathLossModel):
            raise ValueError("path_loss must be a PathLossModel")
        if not math.isfinite(self.shadow_sigma_db) or self.shadow_sigma_db < 0.0:
            raise ValueError(f"shadow_sigma_db must be >= 0, got {self.shadow_sigma_db!r}")
        if not isinstance(self.advertising_interval_ms, int) or self.advertising_interval_ms <= 0:
            raise ValueError(f"advertising_interval_ms must be a positive int")
        if (not isinstance(self.interval_jitter_ms, int) or self.interval_jitter_ms < 0
                or self.interval_jitter_ms >= self.advertising_interval_ms):
            raise ValueError("interval_jitter_ms must be in [0, advertising_interval_ms)")
        if not 0.0 <= self.packet_loss_prob < 1.0:
            raise ValueError(f"packet_loss_prob must be in [0, 1), got {self.packet_loss_prob!r}")
        if not isinstance(self.duration_ms, int) or self.duration_ms <= 0:
            raise ValueError(f"duration_ms must be a positive int")
        chans = tuple(self.channels)
        if not chans or any(c not in VALID_CHANNELS for c in chans):
            raise ValueError(f"channels must be a non-empty subset of {VALID_CHANNELS}")
        object.__setattr__(self, "channels", chans)


@dataclass(frozen=True)
class Scenario:
    """Beacon placement plus the device's piecewise-constant path.

    device_path lists (start_ms, (x, y)) entries; the device sits at the
    entry whose start time is the latest one not after the current time.
    The first entry must start at 0 and starts must strictly increase.
    """

    beacons: tuple[Anchor, ...]
    device_path: tuple[tuple[int, tuple[float, float]], ...]

    def __post_init__(self):
        beacons = tuple(self.beacons)
        if not beacons:
            raise InvalidScenario("scenario needs at least one beacon")
        ids = [b.beacon_id for b in beacons]
        if len(set(ids)) != len(ids):
            raise InvalidScenario(f"duplicate beacon ids in scenario: {ids}")
        object.__setattr__(self, "beacons", beacons)
        path = []
        for entry in self.device_path:
            try:
                start, (x, y) = entry
                start = int(start)
                pos = (float(x), float(y))
            except (TypeError, ValueError) as exc:
                raise InvalidScenario(f"bad device_path entry {entry!r}") from exc
            if not (math.isfinite(pos[0]) and math.isfinite(pos[1])):
                raise InvalidScenario(f"non-finite device position {entry!r}")
            path.append((start, pos))
        if not path:
            raise InvalidScenario("device_path must have at least one entry")
        if path[0][0] != 0:
            raise InvalidScenario(f"device_path must start at 0 ms, got {path[0][0]}")
        for a, b in zip(path, path[1:]):
            if b[0] <= a[0]:
                raise InvalidScenario("device_path start times must strictly increase")
        object.__setattr__(self, "device_path", tuple(path))

    def position_at(self, t_ms: int) -> tuple[float, float]:
        starts = [s for s, _ in self.device_path]
        return self.device_path[bisect_right(starts, t_ms) - 1][1]


def _clamp_rssi(v: float) -> float:
    return min(RSSI_MAX_DBM, max(RSSI_MIN_DBM, v))


def simulate(scenario: Scenario, config: SimConfig) -> Trace:
    """Generate the advertisement trace for a scenario.

    Each beacon advertises on its own schedule: event k is nominally at
    k * advertising_interval_ms, shifted by uniform jitter and clamped so
    per-beacon timestamps never run backwards. Events whose nominal time
    reaches duration_ms are not generated. Lost packets leave no sample
    but still consume their draws.
    """
    starts = [s for s, _ in scenario.device_path]
    positions = [p for _, p in scenario.device_path]
    samples: list[RssiSample] = []
    jitter = config.interval_jitter_ms
    interval = config.advertising_interval_ms
    sigma = config.shadow_sigma_db
    model = config.path_loss
    n_chan = len(config.channels)
    for b_index, beacon in enumerate(scenario.beacons):
        rng = SplitMix64(derive_seed(config.seed, b_index))
        bx, by = beacon.position
        last_t = 0
        k = 0
        while True:
            nominal = k * interval
            if nominal >= config.duration_ms:
                break
            t = nominal + rng.randint(-jitter, jitter)
            t = max(t, last_t, 0)
            lost = rng.random() < config.packet_loss_prob
            g = rng.normal()
            if not lost:
                px, py = positions[bisect_right(starts, t) - 1]
                d = max(math.hypot(px - bx, py - by), MIN_SIM_DISTANCE_M)
                rssi = _clamp_rssi(distance_to_rssi(d, model) + sigma * g)
                samples.append(RssiSample(
                    timestamp_ms=t,
                    beacon_id=beacon.beacon_id,
                    rssi_dbm=rssi,
                    tx_power_dbm=beacon.tx_power_dbm,
                    channel=config.channels[k % n_chan],
                ))
            last_t = t
            k += 1
    metadata = {
        "generator": GENERATOR_ID,
        "seed": str(config.seed),
        "duration_ms": str(config.duration_ms),
        "advertising_interval_ms": str(interval),
        "interval_jitter_ms": str(jitter),
        "packet_loss_prob": repr(config.packet_loss_prob),
        "shadow_sigma_db": repr(sigma),
        "ref_power_dbm": repr(model.ref_power_dbm),
        "exponent": repr(model.exponent),
        "device_path": json.dumps(
            [[s, p[0], p[1]] for s, p in scenario.device_path], separators=(",", ":")
        ),
    }
    return Trace(tuple(samples), metadata)


def experiment_distances() -> tuple[float, ...]:
    """The ten ranging spots: 0.5 m to 5.0 m in half-metre steps."""
    return tuple((i + 1) * EXPERIMENT_SPOT_STEP_M for i in range(EXPERIMENT_SPOT_COUNT))


def ranging_experiment(config: SimConfig) -> tuple[tuple[float, Trace], ...]:
    """Simulate the static ranging sweep: one trace per distance spot.

    A single beacon sits at the origin; the device holds still at each
    spot for two minutes of advertising. Every spot runs on a seed derived
    from (config.seed, spot index), so spots are independent streams and
    the whole sweep is reproducible from one number. duration_ms in the
    config is ignored here; the sweep always records 120 s per spot.
    """
    out = []
    for i, d in enumerate(experiment_distances()):
        beacon = Anchor("b0", (0.0, 0.0), tx_power_dbm=config.path_loss.ref_power_dbm)
        scenario = Scenario(beacons=(beacon,), device_path=((0, (d, 0.0)),))
        spot_cfg = replace(config, seed=derive_seed(config.seed, i),
                           duration_ms=EXPERIMENT_DURATION_MS)
        trace = simulate(scenario, spot_cfg)
        metadata = dict(trace.metadata)
        metadata["true_distance_m"] = repr(d)
        metadata["spot_index"] = str(i)
        metadata["experiment_seed"] = str(config.seed)
        out.append((d, Trace(trace.samples, metadata)))
    return tuple(out)


def scenario_from_json(doc: dict) -> Scenario:
    """Parse {"beacons": [...], "device_path": [{"start_ms", "x", "y"}]}."""
    if not isinstance(doc, dict):
        raise InvalidScenario("scenario must be a JSON object")
    raw_beacons = doc.get("beacons")
    raw_path = doc.get("device_path")
    if not isinstance(raw_beacons, list) or not isinstance(raw_path, list):
        raise InvalidScenario("scenario needs 'beacons' and 'device_path' arrays")
    beacons = []
    for i, item in enumerate(raw_beacons):
        if not isinstance(item, dict):
            raise InvalidScenario(f"beacon {i}: must be an object")
        try:
            tx = item.get("tx_power_dbm")
            beacons.append(Anchor(
                beacon_id=str(item["beacon_id"]),
                position=(float(item["x"]), float(item["y"])),
                tx_power_dbm=None if tx is None else float(tx),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"beacon {i}: {exc}") from exc
    path = []
    for i, item in enumerate(raw_path):
        if not isinstance(item, dict):
            raise InvalidScenario(f"device_path {i}: must be an object")
        try:
            path.append((int(item["start_ms"]), (float(item["x"]), float(item["y"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"device_path {i}: {exc}") from exc
    return Scenario(beacons=tuple(beacons), device_path=tuple(path))


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidScenario(f"{path}: {exc}") from exc
    return scenario_from_json(doc)
