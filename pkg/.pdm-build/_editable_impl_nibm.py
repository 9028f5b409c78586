from editables.redirector import RedirectingFinder as F
F.install()
F.map_module('nibm', '/root/pkg/src/nibm/__init__.py')