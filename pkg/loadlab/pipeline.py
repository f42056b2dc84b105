"""
Pipeline stages and the manifest that makes them resumable.

Each stage reads files and writes files. :func:`run_pipeline` chains them
under one artifact directory and records, per stage, the SHA-256 of every
input, the outputs, the hash of the config it ran with and its duration in
``manifest.json``. A stage whose outputs exist and whose inputs and config
are unchanged is skipped.
"""

import importlib
import json
import logging
import os
import platform
import time

import numpy as np

import pandas as pd

import loadlab
import loadlab.analytics as analytics
import loadlab.assign as assign
import loadlab.cluster as cluster
import loadlab.config as config_module
import loadlab.dtw as dtw
import loadlab.exceptions as exceptions
import loadlab.ingest as ingest
import loadlab.profiles as profiles
import loadlab.sampling as sampling
import loadlab.utils as utils

_log = logging.getLogger(__name__)

ARTIFACTS = {
    'profiles': 'profiles.csv',
    'sample': 'sample.csv',
    'distances': 'distances.bin',
    'model': 'model.json',
    'sweep': 'sweep.csv',
    'medoids': 'medoids.svg',
    'labels': 'labels.csv',
    'analysis': 'analysis',
}
MANIFEST = 'manifest.json'
STAGES = ['ingest', 'sample', 'distances', 'cluster', 'assign', 'analyze']
PROVENANCE_SUFFIX = '.provenance.json'
LIBRARIES = ['jsonschema', 'numba', 'numpy', 'pandas', 'scipy', 'sklearn']


def provenance(inputs, settings=None, seed=None):
    """
    Describe where an output came from.

    Inputs are keyed by file name, so the same inputs under another
    directory give the same block.

    :param inputs: paths of the files the output was computed from; None
                   entries are skipped
    :param settings: the options that shape the output
    :param seed: RNG seed, None for deterministic stages
    :returns: dict with the package and library versions, the seed, the
              settings hash and the SHA-256 of every input
    """
    return {
        'loadlab': loadlab.__version__,
        'python': platform.python_version(),
        'libraries': {name: importlib.import_module(name).__version__
                      for name in LIBRARIES},
        'seed': seed,
        'settings_hash': config_module.config_hash(settings or {}),
        'inputs': {os.path.basename(path): utils.file_sha256(path)
                   for path in inputs if path is not None},
    }


def write_provenance(out, block):
    """Write ``block`` next to ``out`` as ``<out>.provenance.json``."""
    path = out + PROVENANCE_SUFFIX
    with open(path, 'w') as f:
        json.dump(block, f, indent=2, sort_keys=True)
    return path


def read_provenance(out):
    with open(out + PROVENANCE_SUFFIX) as f:
        return json.load(f)


def run_ingest(telemetry, credit, meta, out, strict=True, max_hold_s=None,
               min_ownership_days=0, threads=None):
    """
    Parse the raw CSVs and write the daily profile table.

    :returns: the profile table
    """
    households = ingest.parse_meta(meta, strict=strict)
    blocks, errors = ingest.parse_telemetry(telemetry, households,
                                            strict=strict)
    _, credit_errors = ingest.parse_credit(credit, strict=strict)
    errors = errors + credit_errors
    if errors:
        _log.warning('skipped %d malformed rows, first: %s', len(errors),
                     errors[0])
    frame = ingest.ingest_fleet(blocks, households, threads=threads,
                                max_hold_s=max_hold_s)
    frame = ingest.drop_young_households(frame, min_ownership_days)
    profiles.write_profiles(profiles.sort_frame(frame), out)
    write_provenance(out, provenance(
        [telemetry, credit, meta],
        {'strict': strict, 'max_hold_s': max_hold_s,
         'min_ownership_days': min_ownership_days}))
    return frame


def run_sample(profiles_path, out, days_per_household=10, target=2000,
               bins=sampling.DEFAULT_BINS, seed=0):
    """Draw the clustering sample and write its ``household_id,date``
    keys."""
    frame = profiles.read_profiles(profiles_path)
    _, _, final = sampling.two_stage_sample(frame, days_per_household,
                                            target, bins, seed)
    profiles.profile_keys(final).to_csv(out, index=False)
    write_provenance(out, provenance(
        [profiles_path],
        {'days_per_household': days_per_household, 'target': target,
         'bins': bins}, seed))
    return final


def select_profiles(frame, keys):
    """
    Rows of ``frame`` in the order of ``keys``.

    :raises DataError: when a key has no profile
    """
    keys = pd.DataFrame({
        'household_id': keys['household_id'].astype(str).to_numpy(),
        'date': pd.to_datetime(keys['date'], format=profiles.DATE_FORMAT),
    })
    selected = keys.merge(frame, on=profiles.KEY_COLUMNS, how='left',
                          indicator=True)
    missing = selected['_merge'] != 'both'
    if missing.any():
        raise exceptions.DataError(
            '{} sampled profiles are missing from the profile table'.format(
                int(missing.sum())))
    return selected.drop(columns='_merge')


def _read_keys(path):
    return pd.read_csv(path, dtype=str)


def run_distances(profiles_path, sample_path, out, threads=None,
                  export_csv=False):
    """DTW distance matrix over the sampled profiles."""
    frame = select_profiles(profiles.read_profiles(profiles_path),
                            _read_keys(sample_path))
    matrix = dtw.distance_matrix(frame, threads=threads)
    matrix.save(out)
    if export_csv:
        matrix.to_csv(os.path.splitext(out)[0] + '.csv')
    write_provenance(out, provenance([profiles_path, sample_path]))
    return matrix


def run_cluster(distances_path, profiles_path, out, sweep_out=None,
                k_min=2, k_max=8, select_k=None, solver='exact',
                time_limit=cluster.DEFAULT_TIME_LIMIT,
                restarts=cluster.DEFAULT_RESTARTS, seed=0,
                require_proof=False, plot=None):
    """
    Sweep k, keep the chosen model, name its clusters and attach the medoid
    profiles.

    :raises SolverTimeout: when ``require_proof`` is set and the chosen
                           model has no optimality proof; the outputs are
                           written first
    """
    matrix = dtw.DistanceMatrix.load(distances_path)
    if matrix.keys is None:
        raise exceptions.DataError(
            '{} has no profile keys'.format(distances_path))
    frame = select_profiles(profiles.read_profiles(profiles_path),
                            matrix.keys)
    hours = profiles.hours_matrix(frame)
    best, models = cluster.k_sweep(matrix.values, k_min, k_max, time_limit,
                                   solver, select_k, seed, restarts)
    model = models[best]
    cluster.name_clusters(model, hours)
    model.attach_profiles(matrix.keys, hours)
    model.provenance = provenance(
        [distances_path, profiles_path],
        {'k_min': k_min, 'k_max': k_max, 'select_k': select_k,
         'solver': solver, 'time_limit': time_limit,
         'restarts': restarts}, seed)
    model.to_json(out)
    if sweep_out is not None:
        cluster.sweep_frame(models).to_csv(sweep_out, index=False,
                                           float_format='%.6f')
        write_provenance(sweep_out, model.provenance)
    if plot is not None:
        import loadlab.plots as plots
        plots.plot_medoids(model, hours, plot)
    _log.info('chose k=%d (silhouette %s, proven optimal %s)', best,
              model.silhouette, model.proven_optimal)
    if require_proof and not model.proven_optimal:
        raise exceptions.SolverTimeout(model)
    return model


def run_assign(profiles_path, model_path, out, batch_size=50000,
               threads=None):
    model = cluster.ClusterModel.from_json(model_path)
    written = assign.assign_to_csv(profiles_path, model, out, batch_size,
                                   threads)
    write_provenance(out, provenance([profiles_path, model_path]))
    return written


def subset_labels(model, keys, frame):
    """Cluster name and daily energy of each clustered profile."""
    selected = select_profiles(frame, keys)
    return pd.DataFrame({
        'household_id': selected['household_id'].to_numpy(),
        'date': selected['date'].to_numpy(),
        'cluster': model.label_names(),
        'daily_wh': profiles.daily_totals(selected),
    })


def run_analyze(labels_path, profiles_path, credit, meta, out_dir,
                settings=None, model_path=None, distances_path=None,
                plots=False, strict=True):
    """Analytics over the labelled dataset; see
    :func:`loadlab.analytics.analyze`."""
    labels = assign.read_labels(labels_path)
    frame = profiles.read_profiles(profiles_path)
    records, _ = ingest.parse_credit(credit, strict=strict)
    households = ingest.parse_meta(meta, strict=strict)
    subset = None
    if model_path is not None and distances_path is not None:
        keys = pd.read_csv(distances_path + dtw.KEYS_SUFFIX, dtype=str)
        subset = subset_labels(cluster.ClusterModel.from_json(model_path),
                               keys, frame)
    block = provenance([labels_path, profiles_path, credit, meta, model_path,
                        distances_path], settings)
    return analytics.analyze(labels, frame, records, households, out_dir,
                             settings, subset, plots, block)


class Manifest(object):
    """
    Provenance of an artifact directory.

    :ivar path: location of ``manifest.json``
    :ivar data: ``{'version', 'config_hash', 'seed', 'stages': {...}}``
    """

    def __init__(self, path, data=None):
        self.path = path
        self.data = data or {'stages': {}}

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            return cls(path)
        try:
            with open(path) as f:
                return cls(path, json.load(f))
        except ValueError:
            _log.warning('%s is corrupt, starting a new manifest', path)
            return cls(path)

    def stage(self, name):
        return self.data['stages'].get(name)

    def record(self, name, inputs, outputs, config_hash, seconds):
        self.data['stages'][name] = {
            'inputs': inputs,
            'outputs': outputs,
            'config_hash': config_hash,
            'seconds': round(seconds, 3),
        }

    def save(self):
        tmp = self.path + '.tmp'
        with open(tmp, 'w') as f:
            json.dump(self.data, f, indent=2, sort_keys=True)
        os.replace(tmp, self.path)


def _hash_inputs(paths):
    hashes = {}
    for path in paths:
        if not os.path.exists(path):
            raise exceptions.DataError('missing input {}'.format(path))
        hashes[path] = utils.file_sha256(path)
    return hashes


class Pipeline(object):
    """
    The six stages over one artifact directory.

    :param config: validated config dict
    :param force: rebuild stages whose inputs changed instead of refusing
    """

    def __init__(self, config, force=False):
        self.config = config
        self.force = force
        self.root = config['artifact_dir']
        self.threads = config.get('threads')
        self.manifest = Manifest.load(os.path.join(self.root, MANIFEST))

    def artifact(self, name):
        return os.path.join(self.root, ARTIFACTS[name])

    def _settings(self, stage):
        return {'seed': self.config['seed'],
                'section': self.config.get(stage, {})}

    def _plan(self, stage):
        inputs = self.config['inputs']
        a = self.artifact
        if stage == 'ingest':
            return ([inputs['telemetry'], inputs['credit'], inputs['meta']],
                    [a('profiles')])
        if stage == 'sample':
            return [a('profiles')], [a('sample')]
        if stage == 'distances':
            return ([a('profiles'), a('sample')],
                    [a('distances'), a('distances') + dtw.KEYS_SUFFIX])
        if stage == 'cluster':
            outputs = [a('model'), a('sweep')]
            if self.config['analyze']['plots']:
                outputs.append(a('medoids'))
            return [a('distances'), a('profiles')], outputs
        if stage == 'assign':
            return [a('profiles'), a('model')], [a('labels')]
        return ([a('labels'), a('profiles'), a('model'), a('distances'),
                 inputs['credit'], inputs['meta']],
                [os.path.join(a('analysis'), 'summary.json')])

    def _execute(self, stage):
        c = self.config
        a = self.artifact
        if stage == 'ingest':
            hold = c['ingest']['max_hold_minutes']
            run_ingest(c['inputs']['telemetry'], c['inputs']['credit'],
                       c['inputs']['meta'], a('profiles'),
                       c['inputs'].get('strict', True),
                       hold * 60 if hold is not None else None,
                       c['ingest']['min_ownership_days'], self.threads)
        elif stage == 'sample':
            s = c['sample']
            run_sample(a('profiles'), a('sample'), s['days_per_household'],
                       s['target'], s['bins'], c['seed'])
        elif stage == 'distances':
            run_distances(a('profiles'), a('sample'), a('distances'),
                          self.threads)
        elif stage == 'cluster':
            s = c['cluster']
            run_cluster(a('distances'), a('profiles'), a('model'),
                        a('sweep'), s['k_min'], s['k_max'], s['select_k'],
                        s['solver'], s['time_limit_s'], s['restarts'],
                        c['seed'], s['require_proof'],
                        a('medoids') if c['analyze']['plots'] else None)
        elif stage == 'assign':
            run_assign(a('profiles'), a('model'), a('labels'),
                       c['assign']['batch_size'], self.threads)
        else:
            run_analyze(a('labels'), a('profiles'), c['inputs']['credit'],
                        c['inputs']['meta'], a('analysis'), c['analyze'],
                        a('model'), a('distances'), c['analyze']['plots'],
                        c['inputs'].get('strict', True))

    def run_stage(self, stage):
        """
        Run one stage unless its recorded state is current.

        :returns: True when the stage ran, False when skipped
        :raises StaleIntermediateError: when outputs exist but were built
                                        from other inputs or settings
        """
        inputs, outputs = self._plan(stage)
        hashes = _hash_inputs(inputs)
        settings_hash = config_module.config_hash(self._settings(stage))
        recorded = self.manifest.stage(stage)
        if recorded is not None and all(os.path.exists(p) for p in outputs):
            changed = sorted(
                p for p in set(hashes) | set(recorded['inputs'])
                if hashes.get(p) != recorded['inputs'].get(p))
            if recorded['config_hash'] != settings_hash:
                changed.append('config')
            if not changed:
                _log.info('stage %s is up to date', stage,
                          extra={'stage': stage, 'skipped': True})
                return False
            if not self.force:
                raise exceptions.StaleIntermediateError(stage, changed)
            _log.warning('stage %s: rebuilding after changes to %s', stage,
                         ', '.join(changed))

        started = time.monotonic()
        try:
            self._execute(stage)
        except exceptions.SolverTimeout:
            self._record(stage, hashes, outputs, settings_hash, started)
            raise
        self._record(stage, hashes, outputs, settings_hash, started)
        return True

    def _record(self, stage, hashes, outputs, settings_hash, started):
        seconds = time.monotonic() - started
        self.manifest.record(stage, hashes, outputs, settings_hash, seconds)
        self.manifest.save()
        _log.info('stage %s finished in %.1f s', stage, seconds,
                  extra={'stage': stage, 'seconds': round(seconds, 3)})

    def run(self, stages=None):
        """Run ``stages`` (all by default) in pipeline order."""
        if not os.path.isdir(self.root):
            os.makedirs(self.root)
        self.manifest.data.update({
            'version': loadlab.__version__,
            'config_hash': config_module.config_hash(self.config),
            'seed': self.config['seed'],
            'threads': utils.resolve_threads(self.threads),
        })
        ran = []
        for stage in stages or STAGES:
            try:
                if self.run_stage(stage):
                    ran.append(stage)
            except Exception:
                _log.error('stage %s failed', stage, extra={'stage': stage})
                raise
        self.manifest.save()
        return ran


def run_pipeline(config, force=False, stages=None):
    """
    Run the whole pipeline described by ``config``.

    :returns: the artifact directory
    """
    Pipeline(config, force).run(stages)
    return config['artifact_dir']


def load_summary(artifact_dir):
    with open(os.path.join(artifact_dir, ARTIFACTS['analysis'],
                           'summary.json')) as f:
        return json.load(f)


def label_agreement(labels, truth):
    """
    Share of labelled days whose cluster matches the generating archetype.

    Days labelled ``unassigned`` are left out; an economic outage day is a
    match when labelled low use.
    """
    joined = labels.merge(truth, on=['household_id', 'date'])
    joined = joined[joined['cluster'] != assign.UNASSIGNED]
    if joined.empty:
        return np.nan
    expected = joined['true_archetype'].replace(analytics.ECONOMIC_OUTAGE,
                                                analytics.LOW_USE)
    return float((joined['cluster'] == expected).mean())
