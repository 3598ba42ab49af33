"""Helpers shared by the test modules."""
import numpy as np

# filled by the acceptance tests, printed by the conftest summary hook
ACCEPTANCE_LINES: list[str] = []


def complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(ACCEPTANCE_LINES[-1])
