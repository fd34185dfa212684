"""HTTP service over the core package; see :mod:`occstream.service.app`."""
