# Sphinx configuration of the stvanox documentation.
#
# API pages are generated by sphinxcontrib-apidoc from the package
# sources; project metadata comes from pyproject.toml.
import os
import sys
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as package_version

import tomli

sys.path.insert(0, os.path.abspath("../../src"))

with open("../../pyproject.toml", encoding="UTF-8") as strm:
    config = tomli.loads(strm.read()).get("project")
if config is None:
    raise IOError("pyproject.toml does not contain a project section")

project = config["name"]
author = ", ".join(a["name"] for a in config["authors"])
copyright = author
documentation_summary = config["description"]
try:
    release = package_version(project)
except PackageNotFoundError:
    release = "unknown"
version = release

extensions = [
    "sphinx.ext.autodoc",
    "sphinxcontrib.apidoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
    "sphinx.ext.mathjax",
    "myst_parser",
]

apidoc_module_dir = f"../../src/{project}"
apidoc_output_dir = "api"
apidoc_excluded_paths = ["__main__*", "_version*"]
apidoc_separate_modules = True
apidoc_toc_file = "modules"
apidoc_module_first = True

autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
    "undoc-members": None,
    "exclude-members": "__init__,__weakref__,__dict__,__slots__,__setattr__",
    "show-inheritance": True,
}
autodoc_typehints = "signature"
autodoc_class_signature = "mixed"

napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_param = False
napoleon_use_rtype = False

source_suffix = {".rst": "restructuredtext", ".md": "markdown"}
modindex_common_prefix = [f"{project}."]
html_theme = "furo"
html_theme_options = {"navigation_with_keys": True}
