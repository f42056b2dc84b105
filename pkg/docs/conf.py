#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# loadlab documentation build configuration file.

import os
import sys

# numba kernels stay plain functions so autodoc sees their signatures
os.environ.setdefault('NUMBA_DISABLE_JIT', '1')
os.environ.setdefault('MPLBACKEND', 'Agg')

cwd = os.getcwd()
project_root = os.path.dirname(cwd)

# Import the source package from the tree, not an installed copy.
sys.path.insert(0, project_root)

import loadlab  # noqa: E402

# -- General configuration ---------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'loadlab'
copyright = u"2026, loadlab developers"

version = loadlab.__version__
release = loadlab.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

autodoc_member_order = 'bysource'

# -- Options for HTML output -------------------------------------------

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'loadlabdoc'

# -- Options for LaTeX output ------------------------------------------

latex_documents = [
    ('index', 'loadlab.tex',
     u'loadlab Documentation',
     u'loadlab developers', 'manual'),
]

# -- Options for manual page output ------------------------------------

man_pages = [
    ('index', 'loadlab',
     u'loadlab Documentation',
     [u'loadlab developers'], 1)
]
