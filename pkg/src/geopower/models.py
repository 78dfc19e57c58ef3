"""Built-in named models and the JSON model-file format.

A model file is a JSON object::

    {"design": [[3, 0], [2, 1], [1, 1], [0, 1]],   # row-major, one row per cell
     "offset": [1, 1, 1, 1],                        # optional, default all ones
     "kind": "probability"}                         # or "intensity"

The kernel basis is always computed from the design.  Built-in models carry
the familiar odds-ratio basis instead, checked exactly against the design.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .design import KernelBasis, ModelSpec, validate_design

# Three successive treatments stopped at the first success; cells are the
# paths (fail x3, success at 3rd, success at 2nd, success at 1st).
VACCINE_DESIGN = [[3, 0], [2, 1], [1, 1], [0, 1]]
VACCINE_KERNEL = [[1, -2, 1, 1], [0, 1, -2, 1]]

# 2x2 independence, cells 00, 01, 10, 11; columns: row 0, row 1, column 0.
INDEP2X2_DESIGN = [[1, 0, 1], [1, 0, 0], [0, 1, 1], [0, 1, 0]]
INDEP2X2_KERNEL = [[1, -1, -1, 1]]

_BUILTIN = {
    "vaccine": (VACCINE_DESIGN, VACCINE_KERNEL),
    "indep2x2": (INDEP2X2_DESIGN, INDEP2X2_KERNEL),
}


def builtin_names() -> list[str]:
    return sorted(_BUILTIN)


def builtin_model(name: str) -> ModelSpec:
    design_rows, kernel_rows = _BUILTIN[name]
    design = validate_design(design_rows)
    return ModelSpec(design, KernelBasis.from_rows(design, kernel_rows), name=name)


def vaccine_alternative(k: float) -> ModelSpec:
    """Vaccine alternative with p1 p3 p4 / p2^2 = 1 and p2 p4 / p3^2 = k."""
    return builtin_model("vaccine").with_offset([1.0 / k, 1.0, 1.0, k])


def model_from_dict(data: dict, name: str = "") -> ModelSpec:
    if "design" not in data:
        raise ValueError("model file needs a 'design' field")
    return ModelSpec.from_design(np.array(data["design"]), data.get("offset"),
                                 data.get("kind", "probability"), name)


def load_model(spec: str) -> ModelSpec:
    """A built-in model name or a path to a JSON model file."""
    if spec in _BUILTIN:
        return builtin_model(spec)
    path = Path(spec)
    with path.open() as fh:
        return model_from_dict(json.load(fh), name=path.stem)


def model_to_dict(model: ModelSpec) -> dict:
    return {"design": model.design.entries.tolist(),
            "offset": model.offset.tolist(),
            "kind": model.kind}
