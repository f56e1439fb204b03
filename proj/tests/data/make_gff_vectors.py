"""Writes gff_vectors.json: frequency-gain filter cases computed with numpy."""
import json

import numpy as np

rng = np.random.default_rng(20240611)
cases = []
for n, c in [(1, 1), (2, 3), (5, 2), (8, 4), (12, 1), (17, 3), (32, 2), (45, 2), (64, 1)]:
    x = rng.normal(size=(n, c))
    g = rng.normal(size=(n // 2 + 1, c)) + 1j * rng.normal(size=(n // 2 + 1, c))
    y = np.fft.irfft(g * np.fft.rfft(x, axis=0), n=n, axis=0)
    cases.append({
        "input": x.tolist(),
        "gains": [[[z.real, z.imag] for z in row] for row in g],
        "expected_output": y.tolist(),
    })

with open("gff_vectors.json", "w") as f:
    json.dump(cases, f)
