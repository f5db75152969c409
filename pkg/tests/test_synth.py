import numpy as np
import pytest

from solarfault.data import DayLabel, Schema, load_directory
from solarfault.errors import ParameterError
from solarfault.synth import (
    CHANNELS,
    DEFAULT_SCHEMA,
    FaultSpec,
    SynthConfig,
    SystemParams,
    generate_dataset,
    generate_nominal_day,
    inject_fault,
    random_fault,
    write_dataset_csv,
)

PWM = CHANNELS.index("pwm")
VF = CHANNELS.index("VF")
TSA1 = CHANNELS.index("TSA1")
TSE = CHANNELS.index("TSE")
TAM = CHANNELS.index("TAM")


def nominal(seed=0, doy=180, **params):
    rng = np.random.default_rng(seed)
    return generate_nominal_day(rng, SystemParams(**params), doy)


def test_shapes_and_labels():
    day = nominal()
    assert day.values.shape == (1440, 8)
    assert day.label is DayLabel.NORMAL
    assert day.statuses.sum() == 0
    assert np.isfinite(day.values).all()


def test_determinism_per_seed():
    a, b, c = nominal(5), nominal(5), nominal(6)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_pump_off_at_night():
    day = nominal()
    # deep night: no irradiance, the differential controller stays off
    assert day.values[:240, PWM].max() == 0.0
    assert day.values[:240, VF].max() == 0.0


def test_summer_day_runs_the_pump():
    day = nominal(doy=180)
    assert day.values[:, PWM].max() > 0.5
    assert day.values[:, VF].max() > 1.0


def test_flow_proportional_to_drive_without_noise():
    day = nominal(noise_scale=0.0, max_flow=8.0)
    np.testing.assert_allclose(day.values[:, VF], 8.0 * day.values[:, PWM],
                               atol=1e-12)


def test_noise_free_store_behaviour():
    day = nominal(noise_scale=0.0, doy=200)
    tse = day.values[:, TSE]
    # before sunrise the store only loses heat; monotone non-increasing
    assert (np.diff(tse[:300]) <= 1e-12).all()
    # a sunny noise-free day ends warmer than it started
    assert tse[-1] > tse[0]


def test_noise_free_repeatable_across_rng():
    a = nominal(seed=1, noise_scale=0.0)
    b = nominal(seed=2, noise_scale=0.0)
    np.testing.assert_array_equal(a.values, b.values)


def test_winter_colder_than_summer():
    winter = nominal(noise_scale=0.0, doy=15)
    summer = nominal(noise_scale=0.0, doy=196)
    assert winter.values[:, TAM].mean() < summer.values[:, TAM].mean()
    assert winter.values[:, TSA1].max() < summer.values[:, TSA1].max()


def test_collector_noise_grows_with_sun(rng):
    days = [nominal(seed=s, doy=180) for s in range(40)]
    resid = np.stack([d.values[:, TSA1] for d in days])
    night_sd = resid[:, :240].std(axis=0).mean()
    noon_sd = resid[:, 700:740].std(axis=0).mean()
    assert noon_sd > 2 * night_sd


def test_fault_spec_validation():
    with pytest.raises(ParameterError):
        FaultSpec(kind="mystery", onset=0, duration=10)
    with pytest.raises(ParameterError):
        FaultSpec(kind="no_flow", onset=1000, duration=600)
    with pytest.raises(ParameterError):
        FaultSpec(kind="no_flow", onset=10, duration=0)


def test_stuck_sensor_overwrites_exact_window():
    day = nominal()
    spec = FaultSpec(kind="stuck_sensor", onset=100, duration=200,
                     channel="TSE", value=90.0)
    faulty = inject_fault(day, spec)
    assert faulty.label is DayLabel.FAULT
    np.testing.assert_array_equal(faulty.values[100:300, TSE], 90.0)
    np.testing.assert_array_equal(faulty.values[:100], day.values[:100])
    np.testing.assert_array_equal(faulty.values[300:], day.values[300:])
    np.testing.assert_array_equal(faulty.statuses[100:300, 1], 1)
    assert faulty.statuses[:100, 1].sum() == 0


def test_sensor_offset_shifts_readings():
    day = nominal()
    spec = FaultSpec(kind="sensor_offset", onset=0, duration=1440,
                     channel="TW", value=15.0)
    faulty = inject_fault(day, spec)
    j = CHANNELS.index("TW")
    unclipped = day.values[:, j] + 15.0 < 200.0
    np.testing.assert_allclose(faulty.values[unclipped, j],
                               day.values[unclipped, j] + 15.0, rtol=1e-12)


def test_night_circulation_forces_flow_at_night():
    day = nominal()
    # stop well before sunrise; the forcing only applies while the sun
    # is down, matching a thermosiphon that needs no irradiance
    spec = FaultSpec(kind="night_circulation", onset=0, duration=300)
    faulty = inject_fault(day, spec)
    assert day.values[:300, PWM].max() == 0.0
    np.testing.assert_array_equal(faulty.values[:300, PWM], 1.0)
    # circulating against a cold collector drains the store
    assert faulty.values[300, TSE] < day.values[300, TSE] - 1.0


def test_no_flow_day_separates_from_nominal():
    day = nominal(doy=180)
    spec = FaultSpec(kind="no_flow", onset=480, duration=480)
    faulty = inject_fault(day, spec)
    # stagnating collector runs hot while the store stops gaining
    assert faulty.values[700:900, TSA1].mean() > day.values[700:900, TSA1].mean() + 5
    assert faulty.values[959, TSE] < day.values[959, TSE]


def test_faulty_resimulation_reuses_noise():
    day = nominal()
    spec = FaultSpec(kind="no_flow", onset=600, duration=300)
    faulty = inject_fault(day, spec)
    # identical pre-drawn noise: everything before onset is bit-equal
    np.testing.assert_array_equal(faulty.values[:600], day.values[:600])


def test_inject_requires_sim_context():
    day = nominal()
    bare = type(day)(system_id=day.system_id, day=day.day,
                     channel_names=day.channel_names, values=day.values,
                     statuses=day.statuses, label=day.label)
    with pytest.raises(ParameterError):
        inject_fault(bare, FaultSpec(kind="no_flow", onset=600, duration=100))


def test_random_fault_windows_are_valid(rng):
    for _ in range(300):
        spec = random_fault(rng)
        assert spec.kind in SynthConfig().fault_kinds
        assert 0 <= spec.onset
        assert spec.onset + spec.duration <= 1440


def test_dataset_counts_and_splits():
    cfg = SynthConfig(seed=1, n_train_systems=3, n_val_systems=2,
                      n_test_systems=2, days_per_system=4)
    ds = generate_dataset(cfg)
    assert len(ds.train) == 12 and len(ds.validation) == 8 and len(ds.test) == 8
    assert len(ds.train_systems) == 3
    assert set(d.system_id for d in ds.test) == set(ds.test_systems)
    assert all(d.label is DayLabel.NORMAL for d in ds.train + ds.validation)


def test_dataset_prevalence_extremes():
    cfg = SynthConfig(seed=2, n_train_systems=1, n_val_systems=1,
                      n_test_systems=2, days_per_system=10, fault_prevalence=0.0)
    ds = generate_dataset(cfg)
    assert all(d.label is DayLabel.NORMAL for d in ds.test)
    cfg = SynthConfig(seed=2, n_train_systems=1, n_val_systems=1,
                      n_test_systems=2, days_per_system=10, fault_prevalence=1.0)
    ds = generate_dataset(cfg)
    assert all(d.label is DayLabel.FAULT for d in ds.test)


def test_dataset_generation_is_deterministic():
    cfg = SynthConfig(seed=7, n_train_systems=1, n_val_systems=1,
                      n_test_systems=1, days_per_system=3)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    for da, db in zip(a.test, b.test):
        np.testing.assert_array_equal(da.values, db.values)
        assert da.label == db.label


def test_config_validation():
    with pytest.raises(ParameterError):
        SynthConfig(fault_prevalence=1.5)
    with pytest.raises(ParameterError):
        SynthConfig(days_per_system=0)


def test_csv_round_trip_is_lossless(tmp_path):
    cfg = SynthConfig(seed=3, n_train_systems=1, n_val_systems=1,
                      n_test_systems=1, days_per_system=2, fault_prevalence=1.0)
    ds = generate_dataset(cfg)
    write_dataset_csv(ds, tmp_path)
    schema = Schema.from_file(tmp_path / "schema.txt")
    assert schema.channels == DEFAULT_SCHEMA.channels
    days_by_system, report = load_directory(tmp_path, schema)
    originals = {(d.system_id, d.day): d for d in ds.train + ds.validation + ds.test}
    loaded = [d for days in days_by_system.values() for d in days]
    assert len(loaded) == len(originals)
    for d in loaded:
        orig = originals[(d.system_id, d.day)]
        np.testing.assert_array_equal(d.values, orig.values)
        np.testing.assert_array_equal(d.statuses, orig.statuses)
        assert d.label == orig.label
    assert all(r[2] == 0 for r in report)  # nothing dropped


def test_labels_csv_lists_fault_kinds(tmp_path):
    cfg = SynthConfig(seed=3, n_train_systems=1, n_val_systems=1,
                      n_test_systems=1, days_per_system=3, fault_prevalence=1.0)
    write_dataset_csv(generate_dataset(cfg), tmp_path)
    lines = (tmp_path / "labels.csv").read_text().strip().splitlines()
    assert lines[0] == "system_id,date,label,fault_kind"
    fault_rows = [l for l in lines[1:] if ",fault," in l]
    assert len(fault_rows) == 3
    assert all(l.rsplit(",", 1)[1] in SynthConfig().fault_kinds for l in fault_rows)


def test_split_file_sections(tmp_path):
    cfg = SynthConfig(seed=4, n_train_systems=2, n_val_systems=1,
                      n_test_systems=1, days_per_system=1)
    write_dataset_csv(generate_dataset(cfg), tmp_path)
    text = (tmp_path / "split.txt").read_text()
    assert text.index("[train]") < text.index("[validation]") < text.index("[test]")
    assert "syn-000" in text and "syn-003" in text
