"""
Synthetic SHS fleets with known ground truth.

Every household draws a dominant archetype, appliance metadata consistent
with it, a pay-as-you-go credit trajectory with economic outages and,
optionally, a long-term consumption drift. Daily profiles are rendered as
change-triggered telemetry with a backstop interval so the whole pipeline
can run from raw files.
"""

import collections
import concurrent.futures
import datetime
import logging
import os

import numpy as np

import pandas as pd

import loadlab.ingest as ingest
import loadlab.profiles as profiles
import loadlab.utils as utils

_log = logging.getLogger(__name__)

ECONOMIC_OUTAGE = 'economic_outage'
TRUTH_COLUMNS = ['household_id', 'date', 'true_archetype']
DEFAULT_START = datetime.date(2019, 1, 1)
NOMINAL_VOLTAGE = 12.0
CREDIT_CAP_DAYS = 30
COUNTRIES = [('KE', 180), ('UG', 180), ('RW', 120), ('TG', 0), ('NG', 60)]


class ArchetypeTemplate(object):
    """
    A daily load shape scaled to a target mean daily energy.

    :ivar name: archetype name
    :ivar base_shape: 24 hourly Wh values summing to ``target_mean_wh``
    :ivar target_mean_wh: mean daily energy in Wh
    :ivar appliance_power_w: typical appliance power of households
                             dominated by this archetype
    """

    def __init__(self, name, bumps, floor, target_mean_wh,
                 appliance_power_w):
        hours = np.arange(24)
        shape = np.full(24, float(floor))
        for centre, width, height in bumps:
            gap = np.abs(hours - centre)
            gap = np.minimum(gap, 24 - gap)
            shape += height * np.exp(-0.5 * (gap / float(width)) ** 2)
        self.name = name
        self.target_mean_wh = float(target_mean_wh)
        self.base_shape = shape * self.target_mean_wh / shape.sum()
        self.appliance_power_w = float(appliance_power_w)

    @property
    def has_peaks(self):
        return self.name in ('single_peak', 'double_peak')

    def __repr__(self):
        return 'ArchetypeTemplate({}, {:.0f} Wh)'.format(
            self.name, self.target_mean_wh)


ARCHETYPES = [
    ArchetypeTemplate('low_use', [(20, 1.5, 1.0)], 0.6, 12.0, 70.0),
    ArchetypeTemplate('moderate_use', [(14, 2.5, 0.5), (20, 2.0, 1.0)], 0.1,
                      39.0, 45.0),
    ArchetypeTemplate('nighttime_use', [(0, 5.0, 1.0)], 0.05, 73.0, 55.0),
    ArchetypeTemplate('single_peak', [(20, 1.2, 1.0)], 0.05, 102.0, 100.0),
    ArchetypeTemplate('double_peak', [(7, 1.2, 0.8), (20, 1.2, 1.0)], 0.08,
                      122.0, 100.0),
]
ARCHETYPE_MIX = np.array([0.06, 0.24, 0.28, 0.14, 0.10]) / 0.82


def template_matrix():
    """``(5, 24)`` base shapes of :data:`ARCHETYPES`."""
    return np.vstack([a.base_shape for a in ARCHETYPES])


Scenario = collections.namedtuple('Scenario', [
    'name', 'noise_sigma', 'shift_hours', 'outage_propensity',
    'outage_spell_days', 'outage_ramp_days', 'outage_spread', 'drift',
    'homogeneity', 'tv_share', 'ownership', 'backstop_minutes'])
Scenario.__doc__ = """
Generator parameters.

:ivar noise_sigma: relative amplitude jitter per hour
:ivar shift_hours: largest time shift of a day's shape, in hours
:ivar outage_propensity: long-run fraction of outage days
:ivar outage_spell_days: mean length of an outage spell
:ivar outage_ramp_days: outages ramp up over this many days, 0 for none
:ivar outage_spread: gamma shape of per-household propensities, None for a
                     common propensity
:ivar drift: scale consumption with ownership age
:ivar homogeneity: probability that a day follows the dominant archetype
:ivar tv_share: share of non-peak households that own a TV anyway
:ivar ownership: ``(low, high)`` ownership length as fractions of the
                 horizon
:ivar backstop_minutes: longest silence between telemetry samples
"""

SCENARIOS = {
    'clean': Scenario('clean', 0.0, 0, 0.05, 5.0, 0, None, False, 0.8, 0.0,
                      (1.0, 1.0), 10),
    'paper-like': Scenario('paper-like', 0.12, 2, 0.18, 6.0, 365, 2.0, True,
                           0.55, 0.2, (0.4, 1.0), 10),
}


def get_scenario(name, **overrides):
    """
    Look up a scenario preset and override some of its parameters.

    :raises ValueError: for an unknown scenario or parameter
    """
    if isinstance(name, Scenario):
        scenario = name
    elif name in SCENARIOS:
        scenario = SCENARIOS[name]
    else:
        raise ValueError('unknown scenario "{}", choose from {}'.format(
            name, ', '.join(sorted(SCENARIOS))))
    unknown = set(overrides) - set(Scenario._fields)
    if unknown:
        raise ValueError('unknown scenario parameters: {}'.format(
            ', '.join(sorted(unknown))))
    return scenario._replace(**overrides)


SyntheticHousehold = collections.namedtuple(
    'SyntheticHousehold', ['meta', 'hours', 'truth', 'days_remaining'])
SyntheticHousehold.__doc__ = """
One generated household.

:ivar meta: :class:`loadlab.ingest.HouseholdMeta`
:ivar hours: ``(n_days, 24)`` Wh per local hour
:ivar truth: generating archetype name per day, ``economic_outage`` on
             outage days
:ivar days_remaining: credit in days per day, zero exactly on outage days
"""


class Fleet(object):
    """Summary of a generated fleet and the files written for it."""

    def __init__(self, out_dir, scenario, seed, households, days, samples,
                 outage_days):
        self.out_dir = out_dir
        self.scenario = scenario
        self.seed = seed
        self.households = households
        self.days = days
        self.samples = samples
        self.outage_days = outage_days

    def path(self, name):
        return os.path.join(self.out_dir, name + '.csv')

    @property
    def utilisation_rate(self):
        return 1.0 - self.outage_days / float(self.days) if self.days else 0.0

    def to_dict(self):
        return {
            'out_dir': self.out_dir,
            'scenario': self.scenario.name,
            'seed': self.seed,
            'households': self.households,
            'days': self.days,
            'samples': self.samples,
            'outage_days': self.outage_days,
        }

    def __repr__(self):
        return 'Fleet({} households, {} days, {})'.format(
            self.households, self.days, self.scenario.name)


def drift_curve(ages, peak_day=96, horizon=730, rise=0.25, decline=0.33):
    """
    Consumption multiplier per ownership age: a rise to 1 at ``peak_day``
    followed by a linear decline of ``decline`` by ``horizon``.
    """
    ages = np.asarray(ages, dtype=np.float64)
    early = 1.0 - rise * (1.0 - np.minimum(ages, peak_day) / peak_day)
    late = 1.0 - decline * np.clip((ages - peak_day) / (horizon - peak_day),
                                   0.0, 1.0)
    return np.where(ages <= peak_day, early, late)


def simulate_outages(n_days, propensity, spell_days, ramp_days, rng):
    """
    Two-state Markov chain of outage days; the activation day is paid.

    The entry probability is chosen so the stationary outage share equals
    ``propensity`` (ramped linearly from zero over ``ramp_days``).
    """
    outage = np.zeros(n_days, dtype=bool)
    if propensity <= 0 or n_days < 2:
        return outage
    leave = 1.0 / max(spell_days, 1.0)
    ages = np.arange(n_days)
    ramp = (np.minimum(1.0, ages / float(ramp_days)) if ramp_days
            else np.ones(n_days))
    share = np.minimum(propensity, 0.95) * ramp
    enter = np.minimum(share * leave / (1.0 - share), 1.0)
    draws = rng.random(n_days)
    for d in range(1, n_days):
        if outage[d - 1]:
            outage[d] = draws[d] >= leave
        else:
            outage[d] = draws[d] < enter[d]
    return outage


def credit_countdown(outage, cap=CREDIT_CAP_DAYS):
    """Days remaining per day: zero on outage days, otherwise the days
    until the next outage, capped at ``cap``."""
    n = len(outage)
    remaining = np.empty(n)
    upcoming = cap
    for d in range(n - 1, -1, -1):
        upcoming = 0 if outage[d] else min(upcoming + 1, cap)
        remaining[d] = upcoming
    return remaining


def simulate_household(household_id, scenario, horizon_days, rng,
                       start_date=DEFAULT_START):
    """Draw one :class:`SyntheticHousehold`."""
    n_arch = len(ARCHETYPES)
    dominant = int(rng.choice(n_arch, p=ARCHETYPE_MIX))
    peak = np.array([a.has_peaks for a in ARCHETYPES])
    has_tv = bool(peak[dominant] or rng.random() < scenario.tv_share)

    low, high = scenario.ownership
    n_days = int(rng.integers(max(1, int(round(low * horizon_days))),
                              max(1, int(round(high * horizon_days))) + 1))
    activation = start_date + datetime.timedelta(horizon_days - n_days)
    country, offset = COUNTRIES[int(rng.integers(len(COUNTRIES)))]

    mix = np.where(peak & (not has_tv), 0.0, ARCHETYPE_MIX)
    others = rng.choice(n_arch, size=n_days, p=mix / mix.sum())
    archetype = np.where(rng.random(n_days) < scenario.homogeneity,
                         dominant, others)

    propensity = scenario.outage_propensity
    if scenario.outage_spread:
        propensity *= rng.gamma(scenario.outage_spread,
                                1.0 / scenario.outage_spread)
    outage = simulate_outages(n_days, propensity, scenario.outage_spell_days,
                              scenario.outage_ramp_days, rng)

    hours = template_matrix()[archetype]
    if scenario.shift_hours:
        shift = rng.integers(-scenario.shift_hours, scenario.shift_hours + 1,
                             n_days)
        index = (np.arange(24)[None, :] - shift[:, None]) % 24
        hours = np.take_along_axis(hours, index, axis=1)
    if scenario.noise_sigma:
        hours = hours * np.clip(
            1.0 + scenario.noise_sigma * rng.standard_normal(hours.shape),
            0.0, None)
    if scenario.drift:
        hours = hours * drift_curve(np.arange(n_days))[:, None]
    hours[outage] = 0.0

    names = np.array([a.name for a in ARCHETYPES], dtype=object)
    truth = np.where(outage, ECONOMIC_OUTAGE, names[archetype])
    power = max(5.0, ARCHETYPES[dominant].appliance_power_w +
                10.0 * rng.standard_normal())
    flexible = int(rng.poisson(1.8 if has_tv else 0.7))
    meta = ingest.HouseholdMeta(household_id, country, offset, activation,
                                round(power, 1), has_tv, flexible)
    return SyntheticHousehold(meta, hours, truth, credit_countdown(outage))


def household_telemetry(household, rng, backstop_s=ingest.BACKSTOP_SECONDS,
                        voltage=NOMINAL_VOLTAGE):
    """
    Render a household's hourly energies as change-triggered samples.

    Each hour is split at a random second into two constant-power segments
    whose energies add up to the hour's; a sample is emitted on every power
    change and at least every ``backstop_s`` seconds.

    :returns: frame with :data:`loadlab.ingest.TELEMETRY_COLUMNS`
    """
    meta = household.meta
    energy = household.hours.ravel()
    n = len(energy)
    hour = utils.SECONDS_PER_HOUR
    midnight = (meta.activation_date - datetime.date(1970, 1, 1)).days * \
        utils.SECONDS_PER_DAY
    starts = midnight + hour * np.arange(n, dtype=np.int64)

    split = rng.integers(1, hour, n)
    tilt = rng.uniform(-0.5, 0.5, n)
    frac = split / float(hour)
    # second segment power must stay >= 0
    first = energy * np.minimum(1.0 + tilt, 1.0 / frac)
    second = np.maximum((energy - frac * first) / (1.0 - frac), 0.0)

    seg_start = np.column_stack([starts, starts + split]).ravel()
    seg_power = np.column_stack([first, second]).ravel()
    changed = np.concatenate(([True], seg_power[1:] != seg_power[:-1]))
    seg_start, seg_power = seg_start[changed], seg_power[changed]
    seg_len = np.diff(np.append(seg_start, starts[-1] + hour))

    repeats = -(-seg_len // backstop_s)
    offsets = np.arange(repeats.sum()) - np.repeat(
        np.cumsum(repeats) - repeats, repeats)
    seconds = np.repeat(seg_start, repeats) + offsets * backstop_s
    power = np.repeat(seg_power, repeats)

    volts = voltage + 0.3 * rng.standard_normal(len(seconds))
    utc = (seconds - meta.utc_offset_minutes * 60).astype('datetime64[s]')
    return pd.DataFrame({
        'household_id': meta.household_id,
        'timestamp_utc': np.char.add(np.datetime_as_string(utc, unit='s'),
                                     'Z'),
        'voltage_v': volts,
        'current_a': power / volts,
    }, columns=ingest.TELEMETRY_COLUMNS)


def _dates(household):
    return pd.date_range(household.meta.activation_date,
                         periods=len(household.truth), freq='D')


def _render(household_id, scenario, horizon_days, seed_seq, start_date):
    rng = np.random.default_rng(seed_seq)
    household = simulate_household(household_id, scenario, horizon_days, rng,
                                   start_date)
    telemetry = household_telemetry(household, rng,
                                    scenario.backstop_minutes * 60)
    return household, telemetry


def generate_fleet(n_households, horizon_days, seed=0, scenario='clean',
                   out_dir='.', threads=None, start_date=DEFAULT_START,
                   **overrides):
    """
    Generate a fleet and write ``telemetry.csv``, ``credit.csv``,
    ``meta.csv`` and ``truth.csv`` to ``out_dir``.

    Households are generated in a thread pool from independent streams
    spawned off ``seed``; the files do not depend on the thread count.

    :param scenario: preset name or :class:`Scenario`
    :param overrides: scenario parameters to replace
    :returns: :class:`Fleet`
    """
    if n_households < 1:
        raise ValueError('need at least one household')
    if horizon_days < 1:
        raise ValueError('need at least one day')
    scenario = get_scenario(scenario, **overrides)
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    fleet = Fleet(out_dir, scenario, seed, n_households, 0, 0, 0)
    streams = np.random.SeedSequence(seed).spawn(n_households)
    ids = ['SHS{:05d}'.format(i) for i in range(n_households)]
    threads = utils.resolve_threads(threads)

    meta_rows, credit_parts, truth_parts = [], [], []
    with open(fleet.path('telemetry'), 'w', newline='') as telemetry_file:
        telemetry_file.write(','.join(ingest.TELEMETRY_COLUMNS) + '\n')
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            for lo, hi in utils.chunk_bounds(n_households,
                                             -(-n_households // threads)):
                results = pool.map(
                    lambda i: _render(ids[i], scenario, horizon_days,
                                      streams[i], start_date),
                    range(lo, hi))
                for household, telemetry in results:
                    telemetry.to_csv(telemetry_file, index=False,
                                     header=False)
                    fleet.samples += len(telemetry)
                    fleet.days += len(household.truth)
                    fleet.outage_days += int(
                        (household.truth == ECONOMIC_OUTAGE).sum())
                    meta_rows.append(household.meta)
                    dates = _dates(household).strftime(profiles.DATE_FORMAT)
                    credit_parts.append(pd.DataFrame({
                        'household_id': household.meta.household_id,
                        'date': dates,
                        'days_remaining': household.days_remaining.astype(
                            np.int64),
                    }, columns=ingest.CREDIT_COLUMNS))
                    truth_parts.append(pd.DataFrame({
                        'household_id': household.meta.household_id,
                        'date': dates,
                        'true_archetype': household.truth,
                    }, columns=TRUTH_COLUMNS))

    meta = pd.DataFrame(meta_rows, columns=ingest.META_COLUMNS)
    meta['activation_date'] = pd.to_datetime(
        meta['activation_date']).dt.strftime(profiles.DATE_FORMAT)
    meta['has_tv'] = meta['has_tv'].map({True: 'true', False: 'false'})
    meta.to_csv(fleet.path('meta'), index=False)
    pd.concat(credit_parts).to_csv(fleet.path('credit'), index=False)
    pd.concat(truth_parts).to_csv(fleet.path('truth'), index=False)
    _log.info('generated %d households, %d days, %d samples (%s) in %s',
              fleet.households, fleet.days, fleet.samples, scenario.name,
              out_dir)
    return fleet


def read_truth(path):
    truth = pd.read_csv(path, dtype={'household_id': str,
                                     'true_archetype': str})
    truth['date'] = pd.to_datetime(truth['date'], format=profiles.DATE_FORMAT)
    return truth
