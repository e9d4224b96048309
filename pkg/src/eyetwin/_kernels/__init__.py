"""Render kernel backend selection.

The compiled Cython kernel is preferred when importable; the numpy kernel is
the always-available fallback. Both produce bit-identical images (asserted in
tests), so the choice only affects speed. Set EYETWIN_KERNEL=python or
EYETWIN_KERNEL=cython to force a backend; forcing cython raises if the
extension is missing.
"""

from __future__ import annotations

import os

from . import render_py
from .params import SceneParams, SPEC_STRENGTH

_requested = os.environ.get("EYETWIN_KERNEL", "auto").lower()

_cy = None
if _requested in ("auto", "cython"):
    try:
        from . import render_cy as _cy
    except ImportError:
        _cy = None
    if _requested == "cython" and _cy is None:
        raise ImportError(
            "EYETWIN_KERNEL=cython but the compiled kernel is unavailable; "
            "reinstall with `pip install -e . --no-build-isolation`"
        )

if _cy is not None:
    BACKEND = "cython"
    render_scene = _cy.render_scene
else:
    BACKEND = "python"
    render_scene = render_py.render_scene

__all__ = ["SceneParams", "SPEC_STRENGTH", "BACKEND", "render_scene", "render_py"]
