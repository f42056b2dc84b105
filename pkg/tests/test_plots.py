"""
Tests for `loadlab.plots`.
"""

import numpy as np

import pandas as pd

import loadlab.analytics as analytics
import loadlab.cluster as cluster
import loadlab.plots as plots


def _is_svg(path):
    with open(path) as f:
        return '<svg' in f.read()


class TestPlots(object):

    def test_medoids(self, tmp_path):
        hours = np.vstack([np.full((3, 24), 2.0), np.full((3, 24), 9.0)])
        model = cluster.ClusterModel(2, [0, 3], [0, 0, 0, 1, 1, 1], 0.0,
                                     names=['low_use', 'single_peak'])
        path = plots.plot_medoids(model, hours, str(tmp_path / 'm.svg'))
        assert _is_svg(path)

    def test_trend_and_allocation(self, tmp_path):
        index = pd.Index(range(5), name='age_days')
        trend = analytics.TrendSeries(pd.DataFrame({
            'mean_wh': [1.0, 2, 3, 2, 1], 'ci_low': 0.5, 'ci_high': 3.5,
            'households': [12, 12, 11, 9, 3]}, index=index), 'all')
        allocation = analytics.TrendSeries(pd.DataFrame({
            'a': [0.5] * 5, 'b': [0.5] * 5,
            'households': [12, 12, 11, 9, 3]}, index=index), 'all')
        crosstab = pd.DataFrame([[0.7, 0.3], [0.2, 0.8]], index=['a', 'b'],
                                columns=['a', 'b'])
        paths = plots.write_all(str(tmp_path), [trend], [allocation],
                                crosstab)
        assert [p.rsplit('/', 1)[-1] for p in paths] == [
            'trend_consumption.svg', 'trend_clusters_all.svg',
            'dominant_crosstab.svg']
        assert all(_is_svg(p) for p in paths)

    def test_empty_allocation(self, tmp_path):
        empty = analytics.TrendSeries(
            pd.DataFrame({'households': pd.Series(dtype=int)}), 'ur_high')
        assert _is_svg(plots.plot_allocation(empty, str(tmp_path / 'e.svg')))

    def test_rerun_is_byte_identical(self, tmp_path):
        index = pd.Index(range(30), name='age_days')
        trend = analytics.TrendSeries(pd.DataFrame({
            'mean_wh': np.linspace(10.0, 20.0, 30), 'ci_low': 8.0,
            'ci_high': 22.0, 'households': 12}, index=index), 'all')
        first = plots.plot_trend([trend], str(tmp_path / 'a.svg'))
        second = plots.plot_trend([trend], str(tmp_path / 'b.svg'))
        with open(first, 'rb') as a, open(second, 'rb') as b:
            content = a.read()
            assert content == b.read()
        assert b'<dc:date>' not in content
