#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
import os
import sys

source_dir = os.path.dirname(__file__)
doc_dir = os.path.dirname(source_dir)
root_dir = os.path.dirname(doc_dir)
sys.path.append(root_dir)

from metaimpute import __version__ as version  # noqa: E402

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.doctest",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx.ext.autosectionlabel",
    "sphinx_autodoc_typehints",
    "sphinxcontrib.autodoc_pydantic",
]

# See https://www.sphinx-doc.org/en/master/usage/extensions/autodoc.html
autodoc_class_signature = "separated"
autodoc_default_options = {
    "exclude-members": "__new__",
}
autodoc_member_order = "bysource"
autoclass_content = "class"

# See https://autodoc-pydantic.readthedocs.io/en/stable/users/configuration.html
autodoc_pydantic_field_show_alias = True
autodoc_pydantic_field_show_default = True
autodoc_pydantic_model_member_order = "bysource"
autodoc_pydantic_model_show_config_summary = False
autodoc_pydantic_model_show_json = False

# See https://github.com/tox-dev/sphinx-autodoc-typehints#options
typehints_defaults = "comma"
typehints_use_signature = True
typehints_use_signature_return = True

napoleon_google_docstring = True
napoleon_include_init_with_doc = True
napoleon_attr_annotations = True

release = version
source_suffix = ".rst"
master_doc = "index"

project = "metaimpute"
copyright = "2026, metaimpute contributors"
author = "metaimpute contributors"
language = "en"
exclude_patterns = []
pygments_style = "sphinx"

html_theme = "alabaster"
