import os
import sys

# Document the package from the source tree, with its version.
sys.path.insert(0, os.path.join(os.path.dirname(os.getcwd()), "src"))

import thermospike

extensions = ["sphinx.ext.autodoc", "sphinx.ext.viewcode"]
source_suffix = ".rst"
master_doc = "index"
exclude_patterns = ["_build"]

project = "thermospike"
copyright = "2024, thermospike developers"
version = thermospike.__version__
release = thermospike.__version__

pygments_style = "sphinx"
html_theme = "default"
htmlhelp_basename = "thermospikedoc"
