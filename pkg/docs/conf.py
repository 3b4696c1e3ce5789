# -*- coding: utf-8 -*-
#
# Sphinx configuration for django-bilevel-continual.
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import bilevel_continual  # noqa: E402

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode']
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'Django Bilevel Continual'
copyright = u'2020, Yomi Daniel'
version = bilevel_continual.__version__
release = bilevel_continual.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'django-bilevel-continualdoc'

latex_documents = [
    ('index', 'django-bilevel-continual.tex', u'Django Bilevel Continual Documentation',
     u'Yomi Daniel', 'manual'),
]
man_pages = [
    ('index', 'django-bilevel-continual', u'Django Bilevel Continual Documentation',
     [u'Yomi Daniel'], 1),
]
