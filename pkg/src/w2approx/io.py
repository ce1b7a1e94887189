"""Instance files, coupling containers, and plan dumps.

Text instance format::

    # comments and blank lines are ignored
    n d
    x_11 ... x_1d        (n point rows)
    ...
    p                    (optional: keyword, then n weights on any number of lines)
    w_1 ... w_n
    q                    (optional, same layout)
    w_1 ... w_n

Missing weights default to uniform. Weights summing to within 1e-6 of one are
rescaled to sum to one; anything else is rejected. Files ending in ``.npz``
are read as binary containers with arrays ``points`` and optionally ``p``, ``q``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .factored import FactoredMatrix

WEIGHT_TOL = 1e-6
COUPLING_SCHEMA = 1


class InstanceParseError(InvalidInputError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _weights(values, n, name, line):
    w = np.asarray(values, dtype=np.float64)
    if w.shape != (n,):
        raise InstanceParseError(f"expected {n} weights for {name}, got {w.size}", line)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InstanceParseError(f"weights for {name} must be finite and nonnegative", line)
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_TOL:
        raise InstanceParseError(f"weights for {name} sum to {total!r}, not 1", line)
    return w / total


def _float(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise InstanceParseError(f"not a number: {tok!r}", lineno) from None


def parse_instance(text):
    """Parse the text instance format; returns ``(points, p, q)``."""
    lines = [(i + 1, ln.split("#", 1)[0].split()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines:
        raise InstanceParseError("empty instance file")
    lineno, header = lines[0]
    if len(header) != 2:
        raise InstanceParseError("header must be 'n d'", lineno)
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise InstanceParseError("header must hold two integers 'n d'", lineno) from None
    if n < 1 or d < 1:
        raise InstanceParseError(f"need n >= 1 and d >= 1, got n={n}, d={d}", lineno)
    if len(lines) < 1 + n:
        raise InstanceParseError(f"expected {n} point rows, found {len(lines) - 1}",
                                 lines[-1][0])
    points = np.empty((n, d))
    for k in range(n):
        lineno, toks = lines[1 + k]
        if len(toks) != d:
            raise InstanceParseError(f"point row has {len(toks)} coordinates, expected {d}", lineno)
        points[k] = [_float(t, lineno) for t in toks]
        if not np.all(np.isfinite(points[k])):
            raise InstanceParseError("non-finite coordinate", lineno)

    sections = {}
    current = None
    for lineno, toks in lines[1 + n:]:
        if toks[0] in ("p", "q") and len(toks) == 1:
            current = toks[0]
            if current in sections:
                raise InstanceParseError(f"duplicate '{current}' section", lineno)
            sections[current] = (lineno, [])
            continue
        if current is None:
            raise InstanceParseError(f"unexpected content after {n} point rows", lineno)
        sections[current][1].extend(_float(t, lineno) for t in toks)
    uniform = np.full(n, 1.0 / n)
    p = _weights(sections["p"][1], n, "p", sections["p"][0]) if "p" in sections else uniform
    q = _weights(sections["q"][1], n, "q", sections["q"][0]) if "q" in sections else uniform.copy()
    return points, p, q


def read_instance(path):
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            if "points" not in z:
                raise InstanceParseError(f"{path}: missing array 'points'")
            points = np.asarray(z["points"], dtype=np.float64)
            if points.ndim == 1:
                points = points[:, None]
            n = points.shape[0]
            p = _weights(z["p"], n, "p", None) if "p" in z else np.full(n, 1.0 / n)
            q = _weights(z["q"], n, "q", None) if "q" in z else np.full(n, 1.0 / n)
        return points, p, q
    return parse_instance(path.read_text())


def format_instance(points, p=None, q=None):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = points.shape
    out = [f"{n} {d}"]
    out += [" ".join(repr(float(v)) for v in row) for row in points]
    for name, w in (("p", p), ("q", q)):
        if w is not None:
            out.append(name)
            out.append(" ".join(repr(float(v)) for v in w))
    return "\n".join(out) + "\n"


def write_instance(path, points, p=None, q=None):
    Path(path).write_text(format_instance(points, p, q))


def coupling_to_dict(A: FactoredMatrix):
    return {
        "schemaVersion": COUPLING_SCHEMA,
        "n": A.n,
        "r": A.r,
        "t": A.t,
        "V": A.V.tolist(),
        "leftScale": A.left_scale.tolist(),
        "rightScale": A.right_scale.tolist(),
        "rankOneTerms": [{"u": u.tolist(), "w": w.tolist()} for u, w in A.rank_one_terms],
    }


def coupling_from_dict(doc) -> FactoredMatrix:
    try:
        n, r, t = int(doc["n"]), int(doc["r"]), int(doc["t"])
        V = np.asarray(doc["V"], dtype=np.float64).reshape(r, n)
        terms = [(np.asarray(e["u"], dtype=np.float64), np.asarray(e["w"], dtype=np.float64))
                 for e in doc["rankOneTerms"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed coupling container: {exc}") from None
    if len(terms) != t:
        raise InvalidInputError(f"coupling header says t={t} but holds {len(terms)} terms")
    return FactoredMatrix(V, doc["leftScale"], doc["rightScale"], terms)


def save_coupling(path, A: FactoredMatrix):
    """JSON container, or a binary ``.npz`` with the same field names."""
    path = Path(path)
    if path.suffix == ".npz":
        arrays = {"n": A.n, "r": A.r, "t": A.t, "V": A.V,
                  "leftScale": A.left_scale, "rightScale": A.right_scale}
        for k, (u, w) in enumerate(A.rank_one_terms):
            arrays[f"u{k}"] = u
            arrays[f"w{k}"] = w
        np.savez(path, **arrays)
    else:
        path.write_text(json.dumps(coupling_to_dict(A)))


def load_coupling(path) -> FactoredMatrix:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            t = int(z["t"])
            terms = [(z[f"u{k}"], z[f"w{k}"]) for k in range(t)]
            return FactoredMatrix(z["V"], z["leftScale"], z["rightScale"], terms)
    return coupling_from_dict(json.loads(path.read_text()))


def save_plan_csv(path, plan):
    np.savetxt(path, plan, delimiter=",", fmt="%.17g")
