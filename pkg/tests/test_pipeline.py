"""
End-to-end tests for `loadlab.pipeline`.
"""

import json
import os

import numpy as np

import pandas as pd

import pytest

import loadlab
import loadlab.assign as assign
import loadlab.cluster as cluster
import loadlab.config as config
import loadlab.exceptions as exceptions
import loadlab.pipeline as pipeline
import loadlab.profiles as profiles
import loadlab.synth as synth
import loadlab.utils as utils

OUTPUTS = ['profiles.csv', 'sample.csv', 'model.json', 'sweep.csv',
           'labels.csv', 'analysis/table1.csv', 'analysis/table2.csv',
           'analysis/table3.csv', 'analysis/trend_consumption.csv',
           'analysis/trend_clusters.csv', 'analysis/ur_segments.csv',
           'analysis/summary.json', 'profiles.csv.provenance.json',
           'sample.csv.provenance.json', 'distances.bin.provenance.json',
           'sweep.csv.provenance.json', 'labels.csv.provenance.json']


@pytest.fixture(scope='module')
def fleet(tmp_path_factory):
    out = str(tmp_path_factory.mktemp('fleet'))
    return synth.generate_fleet(30, 40, seed=5, scenario='clean',
                                out_dir=out, threads=2)


def _config(fleet, artifact_dir, **sections):
    overrides = {
        'artifact_dir': artifact_dir,
        'seed': 1,
        'threads': 2,
        'inputs': {'telemetry': fleet.path('telemetry'),
                   'credit': fleet.path('credit'),
                   'meta': fleet.path('meta')},
        'sample': {'days_per_household': 4, 'target': 60, 'bins': 5},
        'cluster': {'k_min': 2, 'k_max': 6, 'select_k': 5, 'solver': 'pam',
                    'time_limit_s': None},
        'assign': {'batch_size': 500},
        'analyze': {'plots': False},
    }
    overrides = config.merge(overrides, sections)
    return config.load_config(overrides=overrides)


@pytest.fixture(scope='module')
def artifacts(fleet, tmp_path_factory):
    root = str(tmp_path_factory.mktemp('artifacts'))
    cfg = _config(fleet, root)
    pipeline.run_pipeline(cfg)
    return cfg


def _read(root, name, mode='r'):
    with open(os.path.join(root, name), mode) as f:
        return f.read()


class TestRunPipeline(object):

    def test_outputs(self, artifacts):
        root = artifacts['artifact_dir']
        for name in OUTPUTS:
            assert os.path.exists(os.path.join(root, name)), name
        manifest = json.loads(_read(root, 'manifest.json'))
        assert sorted(manifest['stages']) == sorted(pipeline.STAGES)
        assert manifest['config_hash'] == config.config_hash(artifacts)
        ingest = manifest['stages']['ingest']
        assert set(ingest['inputs']) == {
            artifacts['inputs'][k] for k in ('telemetry', 'credit', 'meta')}

    def test_recovers_archetypes(self, artifacts, fleet):
        root = artifacts['artifact_dir']
        model = cluster.ClusterModel.from_json(os.path.join(root,
                                                            'model.json'))
        assert sorted(model.names) == sorted(a.name for a in synth.ARCHETYPES)
        labels = assign.read_labels(os.path.join(root, 'labels.csv'))
        truth = synth.read_truth(fleet.path('truth'))
        assert len(labels) == fleet.days
        assert pipeline.label_agreement(labels, truth) >= 0.9

    def test_sweep_rows(self, artifacts):
        sweep = pd.read_csv(os.path.join(artifacts['artifact_dir'],
                                         'sweep.csv'))
        assert sweep['k'].tolist() == [2, 3, 4, 5, 6]
        assert sweep['silhouette'].between(-1, 1).all()

    def test_summary_ranges(self, artifacts):
        summary = pipeline.load_summary(artifacts['artifact_dir'])
        assert 0.0 <= summary['mean_homogeneity'] <= 1.0
        assert 0.0 <= summary['mean_utilisation_rate'] <= 1.0
        households = pd.read_csv(os.path.join(
            artifacts['artifact_dir'], 'analysis', 'households.csv'))
        assert households['homogeneity'].between(0, 1).all()
        assert households['utilisation_rate'].between(0, 1).all()
        trend = pd.read_csv(os.path.join(
            artifacts['artifact_dir'], 'analysis', 'trend_clusters.csv'))
        sums = trend.groupby(['variant', 'age_days'])['proportion'].sum()
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_rerun_skips_everything(self, artifacts):
        ran = pipeline.Pipeline(artifacts).run()
        assert ran == []

    def test_provenance(self, artifacts):
        root = artifacts['artifact_dir']

        def sha(name):
            return utils.file_sha256(os.path.join(root, name))

        model = json.loads(_read(root, 'model.json'))['provenance']
        assert model['loadlab'] == loadlab.__version__
        assert sorted(model['libraries']) == sorted(pipeline.LIBRARIES)
        assert model['seed'] == 1
        assert model['inputs'] == {'distances.bin': sha('distances.bin'),
                                   'profiles.csv': sha('profiles.csv')}
        summary = pipeline.load_summary(root)['provenance']
        assert summary['inputs']['labels.csv'] == sha('labels.csv')
        assert summary['inputs']['model.json'] == sha('model.json')
        labels = pipeline.read_provenance(os.path.join(root, 'labels.csv'))
        assert labels['inputs']['model.json'] == sha('model.json')
        ingested = pipeline.read_provenance(
            os.path.join(root, 'profiles.csv'))
        assert sorted(ingested['inputs']) == ['credit.csv', 'meta.csv',
                                              'telemetry.csv']
        assert ingested['seed'] is None
        sample = pipeline.read_provenance(os.path.join(root, 'sample.csv'))
        assert sample['settings_hash'] != ingested['settings_hash']

    def test_deterministic_across_threads(self, artifacts, fleet, tmp_path):
        other = _config(fleet, str(tmp_path / 'again'), threads=1)
        pipeline.run_pipeline(other)
        for name in OUTPUTS:
            assert _read(artifacts['artifact_dir'], name, 'rb') == \
                _read(other['artifact_dir'], name, 'rb'), name

    def test_changed_input_is_stale(self, fleet, tmp_path):
        data = tmp_path / 'data'
        data.mkdir()
        copies = {}
        for name in ('telemetry', 'credit', 'meta'):
            target = data / (name + '.csv')
            target.write_text(_read(fleet.out_dir, name + '.csv'))
            copies[name] = str(target)
        cfg = _config(fleet, str(tmp_path / 'artifacts'), inputs=copies)
        pipeline.run_pipeline(cfg, stages=['ingest', 'sample'])

        with open(copies['meta'], 'a') as f:
            f.write('\n')
        with pytest.raises(exceptions.StaleIntermediateError) as info:
            pipeline.run_pipeline(cfg, stages=['ingest', 'sample'])
        assert info.value.stage == 'ingest'
        assert info.value.paths == [copies['meta']]

        # profiles come out byte-identical, so sampling stays current
        ran = pipeline.Pipeline(cfg, force=True).run(['ingest', 'sample'])
        assert ran == ['ingest']

    def test_changed_settings_are_stale(self, fleet, tmp_path):
        root = str(tmp_path / 'artifacts')
        pipeline.run_pipeline(_config(fleet, root), stages=['ingest',
                                                            'sample'])
        changed = _config(fleet, root, sample={'target': 50})
        with pytest.raises(exceptions.StaleIntermediateError) as info:
            pipeline.run_pipeline(changed, stages=['ingest', 'sample'])
        assert info.value.paths == ['config']

    def test_missing_input(self, fleet, tmp_path):
        cfg = _config(fleet, str(tmp_path / 'a'),
                      inputs={'telemetry': str(tmp_path / 'none.csv')})
        with pytest.raises(exceptions.DataError):
            pipeline.run_pipeline(cfg)


class TestStages(object):

    def test_select_profiles_missing(self, artifacts):
        frame = profiles.read_profiles(os.path.join(
            artifacts['artifact_dir'], 'profiles.csv'))
        keys = pd.DataFrame({'household_id': ['X'], 'date': ['2020-01-01']})
        with pytest.raises(exceptions.DataError):
            pipeline.select_profiles(frame, keys)

    def test_require_proof(self, artifacts, tmp_path):
        root = artifacts['artifact_dir']
        with pytest.raises(exceptions.SolverTimeout) as info:
            pipeline.run_cluster(
                os.path.join(root, 'distances.bin'),
                os.path.join(root, 'profiles.csv'),
                str(tmp_path / 'model.json'), k_min=5, k_max=5,
                solver='pam', require_proof=True)
        assert info.value.exit_code == 4
        assert os.path.exists(str(tmp_path / 'model.json'))

    def test_medoid_plot(self, artifacts, tmp_path):
        root = artifacts['artifact_dir']
        plot = str(tmp_path / 'medoids.svg')
        pipeline.run_cluster(
            os.path.join(root, 'distances.bin'),
            os.path.join(root, 'profiles.csv'),
            str(tmp_path / 'model.json'), k_min=5, k_max=5, solver='pam',
            plot=plot)
        assert os.path.exists(plot)


@pytest.mark.slow
class TestSyntheticRecovery(object):

    def _config(self, tmp_path, seed, **cluster_section):
        section = {'k_min': 2, 'k_max': 8}
        section.update(cluster_section)
        fleet = synth.generate_fleet(200, 730, seed=seed,
                                     scenario='paper-like',
                                     out_dir=str(tmp_path / 'fleet'))
        cfg = _config(fleet, str(tmp_path / 'artifacts'), seed=seed,
                      threads=None,
                      sample={'days_per_household': 10, 'target': 2000,
                              'bins': 10},
                      cluster=section,
                      analyze={'plots': True})
        return fleet, cfg

    def test_full_size_fleet(self, tmp_path):
        fleet, cfg = self._config(tmp_path, 42, solver='exact',
                                  time_limit_s=600, select_k=5)
        pipeline.run_pipeline(cfg)
        root = cfg['artifact_dir']
        labels = assign.read_labels(os.path.join(root, 'labels.csv'))
        truth = synth.read_truth(fleet.path('truth'))
        assert pipeline.label_agreement(labels, truth) >= 0.9
        table = pd.read_csv(os.path.join(root, 'analysis', 'table2.csv'),
                            index_col=0)
        for template in synth.ARCHETYPES:
            assert table.loc[template.name, 'mean_wh'] == pytest.approx(
                template.target_mean_wh, rel=0.15), template.name

    def test_silhouette_selects_five(self, tmp_path):
        chosen = []
        for seed in range(10):
            _, cfg = self._config(tmp_path / str(seed), seed, solver='pam',
                                  select_k=None)
            pipeline.run_pipeline(cfg, stages=pipeline.STAGES[:4])
            model = cluster.ClusterModel.from_json(
                os.path.join(cfg['artifact_dir'], 'model.json'))
            chosen.append(model.k)
        assert chosen.count(5) >= 8, chosen


@pytest.mark.skipif(not os.environ.get('LOADLAB_REAL_DATA'),
                    reason='LOADLAB_REAL_DATA is not set')
class TestRealData(object):
    """
    ``LOADLAB_REAL_DATA`` names a directory holding ``telemetry.csv``,
    ``credit.csv`` and ``meta.csv`` in the documented schema.
    """

    def test_fleet_figures(self, tmp_path):
        data = os.environ['LOADLAB_REAL_DATA']
        cfg = config.load_config(overrides={
            'artifact_dir': str(tmp_path),
            'inputs': {name: os.path.join(data, name + '.csv')
                       for name in ('telemetry', 'credit', 'meta')},
            'ingest': {'min_ownership_days': 365},
            'cluster': {'select_k': 5},
        })
        pipeline.run_pipeline(cfg)
        table = pd.read_csv(os.path.join(tmp_path, 'analysis', 'table2.csv'),
                            index_col=0)
        expected = {'economic_outage': 0.18, 'low_use': 0.06,
                    'moderate_use': 0.24, 'nighttime_use': 0.28,
                    'single_peak': 0.14, 'double_peak': 0.10}
        for name, share in expected.items():
            assert table.loc[name, 'proportion'] == pytest.approx(
                share, abs=0.02)
        trend = pipeline.load_summary(str(tmp_path))['trend']['all']
        assert trend['peak_age'] == pytest.approx(96, abs=10)
        assert trend['reduction'] == pytest.approx(0.33, abs=0.05)
