"""Seedable generator of plausible solar-thermal day traces with
injectable faults.

The simulation is phenomenological: a seasonal/diurnal ambient, a
clipped solar bell with cloud noise, a first-order collector lag, a
hysteresis pump controller and a lossy heat store. It exists to give
the detectors a ground-truth oracle, not to model real collectors.
Measurement noise on the collector scales with irradiance, so the data
are heteroscedastic by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .data import MINUTES_PER_DAY, DayLabel, DayTrace, Schema
from .errors import ParameterError

CHANNELS = ("TSA1", "TSE", "TW", "TSV", "TAM", "VF", "pwm", "ctr")
STATUSES = ("merk", "sto")

DEFAULT_SCHEMA = Schema(
    channels=CHANNELS,
    statuses=STATUSES,
    fault_status="sto",
    merk_status="merk",
    znorm_channels=("TSA1", "TSE", "TW", "TSV", "TAM"),
    smooth_channels=("VF", "pwm", "ctr"),
)

SCHEMA_FILE_TEXT = """\
# solarfault synthetic dataset schema
channel TSA1 znorm
channel TSE znorm
channel TW znorm
channel TSV znorm
channel TAM znorm
channel VF minmax smooth
channel pwm minmax smooth
channel ctr minmax smooth
status merk merk
status sto fault
"""

FAULT_KINDS = ("stuck_sensor", "pump_locked_on", "night_circulation",
               "sensor_offset", "no_flow")


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    onset: int
    duration: int
    channel: str | None = None  # stuck_sensor / sensor_offset
    value: float = 0.0  # stuck value or offset delta

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ParameterError(f"unknown fault kind {self.kind!r}")
        if not (0 <= self.onset and self.onset + self.duration <= MINUTES_PER_DAY):
            raise ParameterError(
                f"fault window [{self.onset}, {self.onset + self.duration}) "
                f"outside the day")
        if self.duration <= 0:
            raise ParameterError("fault duration must be positive")

    @property
    def window(self) -> slice:
        return slice(self.onset, self.onset + self.duration)


@dataclass(frozen=True)
class SystemParams:
    collector_gain: float = 0.055  # deg C per W/m^2 at equilibrium
    collector_rate: float = 0.08  # first-order lag per minute
    pump_pull: float = 0.06  # collector cooling by circulating flow
    store_eta: float = 0.0025  # store heating per unit pump drive
    store_loss: float = 0.0006  # passive loss per minute
    max_flow: float = 8.0  # l/min at full pump drive
    hyst_on: float = 8.0
    hyst_off: float = 2.0
    store_init: float = 35.0
    climate_phase: float = 0.0  # shifts the seasonal cycle, days
    noise_scale: float = 1.0  # 0 disables all stochastic terms


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_train_systems: int = 10
    n_val_systems: int = 5
    n_test_systems: int = 5
    days_per_system: int = 20
    fault_prevalence: float = 0.3
    start_date: date = date(2022, 1, 1)
    fault_kinds: tuple[str, ...] = FAULT_KINDS

    def __post_init__(self):
        if not 0.0 <= self.fault_prevalence <= 1.0:
            raise ParameterError("fault_prevalence must be in [0, 1]")
        for name in ("n_train_systems", "n_val_systems", "n_test_systems",
                     "days_per_system"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")


@dataclass
class _NoiseBundle:
    """All stochastic inputs of one day, drawn up front so a faulty
    re-simulation sees identical noise."""

    cloud: np.ndarray  # (T,)
    meas: np.ndarray  # (T, F)


@dataclass
class _SimContext:
    params: SystemParams
    day_of_year: int
    noise: _NoiseBundle


def _draw_noise(params: SystemParams, rng: np.random.Generator) -> _NoiseBundle:
    t = MINUTES_PER_DAY
    if params.noise_scale == 0.0:
        return _NoiseBundle(cloud=np.ones(t), meas=np.zeros((t, len(CHANNELS))))
    # mean-reverting cloud cover so irradiance stays mostly sunny but wanders
    cloud = np.empty(t)
    c = rng.uniform(0.6, 1.0)
    for i in range(t):
        c += 0.01 * (0.85 - c) + 0.03 * rng.normal()
        c = min(max(c, 0.2), 1.0)
        cloud[i] = c
    meas = rng.normal(0.0, 1.0, size=(t, len(CHANNELS))) * params.noise_scale
    return _NoiseBundle(cloud=cloud, meas=meas)


def _simulate(params: SystemParams, day_of_year: int, noise: _NoiseBundle,
              fault: FaultSpec | None = None) -> np.ndarray:
    """Minute loop producing the (1440, 8) channel matrix."""
    p = params
    season = 0.5 - 0.5 * math.cos(2 * math.pi * (day_of_year - 15 + p.climate_phase) / 365.0)
    irr_max = 200.0 + 800.0 * season
    rise = 8.0 - 2.5 * season
    sset = 16.0 + 2.5 * season

    values = np.zeros((MINUTES_PER_DAY, len(CHANNELS)))
    tsa = p.store_init  # collector starts in equilibrium with the loop
    store = p.store_init
    pump_on = False

    def in_window(t):
        return fault is not None and fault.onset <= t < fault.onset + fault.duration

    for t in range(MINUTES_PER_DAY):
        hour = t / 60.0
        tam = -2.0 + 18.0 * season + 6.0 * math.sin(2 * math.pi * (hour - 8.0) / 24.0)
        if rise < hour < sset:
            bell = math.sin(math.pi * (hour - rise) / (sset - rise))
        else:
            bell = 0.0
        irr = irr_max * bell * noise.cloud[t]

        # hysteresis controller on the collector/store differential
        diff = tsa - store
        if pump_on:
            pump_on = diff > p.hyst_off
        else:
            pump_on = diff > p.hyst_on
        pwm = min(1.0, max(0.15, diff / 25.0)) if pump_on else 0.0

        forced = False
        if fault is not None and in_window(t):
            if fault.kind == "pump_locked_on":
                pwm, forced = 1.0, True
            elif fault.kind == "night_circulation" and bell == 0.0:
                pwm, forced = 1.0, True
            elif fault.kind == "no_flow":
                pwm, forced = 0.0, True
        if forced:
            pump_on = pwm > 0.0

        # collector: first-order lag toward ambient + gain, cooled by flow
        target = tam + p.collector_gain * irr
        tsa += p.collector_rate * (target - tsa)
        tsa -= p.pump_pull * pwm * (tsa - store)
        tsa = min(max(tsa, -20.0), 200.0)

        # store: heated by circulation, passive losses toward the cellar
        store += p.store_eta * pwm * (tsa - store)
        store -= p.store_loss * (store - 20.0)
        store = min(max(store, -20.0), 200.0)

        ctr = min(1.0, max(0.0, (0.5 - tam) / 5.0))  # frost protection drive
        vf = p.max_flow * pwm

        n = noise.meas[t]
        # collector noise grows with actual irradiance (cloud included), so
        # the variance is input-dependent, not just a function of the minute
        values[t, 0] = tsa + n[0] * (0.3 + 3.0 * irr / 1000.0)  # TSA1
        values[t, 1] = store + 1.5 + n[1] * 0.2  # TSE
        values[t, 2] = 0.9 * store + 8.0 + n[2] * 0.3  # TW
        values[t, 3] = store - 4.0 - 3.0 * pwm + n[3] * 0.25  # TSV
        values[t, 4] = tam + n[4] * 2.0  # TAM, noisy but rarely fault-relevant
        values[t, 5] = max(0.0, vf * (1.0 + 0.02 * n[5]))  # VF
        values[t, 6] = pwm
        values[t, 7] = ctr

    # sensor-level faults overwrite readings only
    if fault is not None and fault.kind in ("stuck_sensor", "sensor_offset"):
        if fault.channel not in CHANNELS:
            raise ParameterError(f"unknown fault channel {fault.channel!r}")
        j = CHANNELS.index(fault.channel)
        if fault.kind == "stuck_sensor":
            values[fault.window, j] = fault.value
        else:
            values[fault.window, j] += fault.value

    np.clip(values[:, :5], -20.0, 200.0, out=values[:, :5])
    return values


def generate_nominal_day(rng: np.random.Generator, params: SystemParams,
                         day_of_year: int, system_id: str = "syn-000",
                         day: date | None = None) -> DayTrace:
    """One fault-free day; deterministic given the rng state."""
    if day is None:
        day = date(2022, 1, 1) + timedelta(days=day_of_year - 1)
    noise = _draw_noise(params, rng)
    values = _simulate(params, day_of_year, noise)
    trace = DayTrace(
        system_id=system_id,
        day=day,
        channel_names=CHANNELS,
        values=values,
        statuses=np.zeros((MINUTES_PER_DAY, len(STATUSES)), dtype=np.int64),
        label=DayLabel.NORMAL,
    )
    trace.sim_context = _SimContext(params=params, day_of_year=day_of_year, noise=noise)
    return trace


def inject_fault(day: DayTrace, spec: FaultSpec, rng: np.random.Generator | None = None) -> DayTrace:
    """Overwrite or re-simulate the fault window; label becomes Fault.

    Pump-side faults need the simulation context attached by
    generate_nominal_day so downstream channels stay consistent.
    """
    ctx = getattr(day, "sim_context", None)
    if ctx is None:
        raise ParameterError("day was not produced by generate_nominal_day")
    values = _simulate(ctx.params, ctx.day_of_year, ctx.noise, fault=spec)
    statuses = day.statuses.copy()
    statuses[spec.window, STATUSES.index("sto")] = 1
    faulty = DayTrace(
        system_id=day.system_id,
        day=day.day,
        channel_names=day.channel_names,
        values=values,
        statuses=statuses,
        label=DayLabel.FAULT,
    )
    faulty.sim_context = ctx
    faulty.fault_spec = spec
    return faulty


def random_fault(rng: np.random.Generator, kinds=FAULT_KINDS) -> FaultSpec:
    kind = kinds[rng.integers(len(kinds))]
    if kind == "pump_locked_on":
        return FaultSpec(kind=kind, onset=0, duration=MINUTES_PER_DAY)
    if kind == "night_circulation":
        return FaultSpec(kind=kind, onset=0, duration=360)
    if kind == "no_flow":
        onset = int(rng.integers(480, 600))
        return FaultSpec(kind=kind, onset=onset, duration=int(rng.integers(300, 480)))
    channel = ("TSA1", "TSE", "TW")[rng.integers(3)]
    onset = int(rng.integers(0, 600))
    duration = int(rng.integers(400, MINUTES_PER_DAY - onset + 1))
    if kind == "stuck_sensor":
        return FaultSpec(kind=kind, onset=onset, duration=duration,
                         channel=channel, value=float(rng.uniform(70, 110)))
    return FaultSpec(kind=kind, onset=onset, duration=duration,
                     channel=channel, value=float(rng.choice([-1, 1]) * rng.uniform(12, 25)))


def _system_params(rng: np.random.Generator) -> SystemParams:
    base = SystemParams()
    jitter = lambda x: float(x * rng.uniform(0.8, 1.2))  # noqa: E731
    return replace(
        base,
        collector_gain=jitter(base.collector_gain),
        pump_pull=jitter(base.pump_pull),
        store_eta=jitter(base.store_eta),
        store_loss=jitter(base.store_loss),
        max_flow=jitter(base.max_flow),
        store_init=float(base.store_init + rng.uniform(-5, 5)),
        climate_phase=float(rng.uniform(-10, 10)),
    )


@dataclass
class SynthDataset:
    train: list[DayTrace]
    validation: list[DayTrace]
    test: list[DayTrace]
    train_systems: list[str]
    val_systems: list[str]
    test_systems: list[str]


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Nominal train/validation systems plus a mixed test set."""
    n_total = cfg.n_train_systems + cfg.n_val_systems + cfg.n_test_systems
    train, val, test = [], [], []
    train_ids, val_ids, test_ids = [], [], []
    for i in range(n_total):
        sid = f"syn-{i:03d}"
        rng = np.random.default_rng([cfg.seed, i])
        params = _system_params(rng)
        is_test = i >= cfg.n_train_systems + cfg.n_val_systems
        # spread days over the year so all seasons appear
        stride = max(1, 365 // cfg.days_per_system)
        for d in range(cfg.days_per_system):
            doy = 1 + (i * 7 + d * stride) % 365
            day_date = date(cfg.start_date.year, 1, 1) + timedelta(days=doy - 1)
            trace = generate_nominal_day(rng, params, doy, system_id=sid, day=day_date)
            if is_test and rng.random() < cfg.fault_prevalence:
                trace = inject_fault(trace, random_fault(rng, cfg.fault_kinds), rng)
            if i < cfg.n_train_systems:
                train.append(trace)
            elif not is_test:
                val.append(trace)
            else:
                test.append(trace)
        if i < cfg.n_train_systems:
            train_ids.append(sid)
        elif not is_test:
            val_ids.append(sid)
        else:
            test_ids.append(sid)
    return SynthDataset(train=train, validation=val, test=test,
                        train_systems=train_ids, val_systems=val_ids,
                        test_systems=test_ids)


def write_dataset_csv(dataset: SynthDataset, out_dir) -> None:
    """Emit per-system CSVs in the ingestion format, the schema file,
    the split file and a ground-truth label CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "schema.txt").write_text(SCHEMA_FILE_TEXT)

    by_system: dict[str, list[DayTrace]] = {}
    for trace in dataset.train + dataset.validation + dataset.test:
        by_system.setdefault(trace.system_id, []).append(trace)

    for sid, traces in sorted(by_system.items()):
        with open(out / f"{sid}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "system_id", *CHANNELS, *STATUSES])
            for trace in sorted(traces, key=lambda tr: tr.day):
                for t in range(MINUTES_PER_DAY):
                    ts = f"{trace.day.isoformat()}T{t // 60:02d}:{t % 60:02d}"
                    writer.writerow([ts, sid,
                                     *[repr(float(v)) for v in trace.values[t]],
                                     *[int(s) for s in trace.statuses[t]]])

    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id", "date", "label", "fault_kind"])
        for sid, traces in sorted(by_system.items()):
            for trace in sorted(traces, key=lambda tr: tr.day):
                kind = getattr(trace, "fault_spec", None)
                writer.writerow([sid, trace.day.isoformat(), trace.label.value,
                                 kind.kind if kind else ""])

    with open(out / "split.txt", "w") as fh:
        fh.write("[train]\n" + "\n".join(dataset.train_systems) + "\n")
        fh.write("[validation]\n" + "\n".join(dataset.val_systems) + "\n")
        fh.write("[test]\n" + "\n".join(dataset.test_systems) + "\n")
