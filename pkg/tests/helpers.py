from datetime import date

import numpy as np

from solarfault.data import MINUTES_PER_DAY, DayLabel, DayTrace


def make_day(values, system_id="sys-a", day=None, label=DayLabel.NORMAL,
             channel_names=None, statuses=None):
    values = np.asarray(values, dtype=np.float64)
    t, f = values.shape
    assert t == MINUTES_PER_DAY
    if channel_names is None:
        channel_names = tuple(f"c{i}" for i in range(f))
    if statuses is None:
        statuses = np.zeros((t, 2), dtype=np.int64)
    return DayTrace(system_id=system_id, day=day or date(2022, 1, 1),
                    channel_names=tuple(channel_names), values=values,
                    statuses=statuses, label=label)
